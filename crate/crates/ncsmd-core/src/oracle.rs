//! The simulated environment: hidden cost functions, link functions with
//! their derived constants, and the Bernoulli comparison oracle.
//!
//! A `ProblemInstance` bundles the action set with a quadratic cost and a
//! link function and precomputes every constant the solver and the bound
//! evaluations need (strong convexity, smoothness, Lipschitz constant, cost
//! range, diameter, link-slope bounds, minimizer).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use libm::erf;
use serde::{Deserialize, Serialize};

use crate::barriers::Barrier;
use crate::error::{Error, Result};
use crate::geometry::{sample_unit_sphere, ConvexBody};

/// Link function mapping a cost difference to a win probability.
/// All three are rotation-symmetric with positive, unimodal derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkFunction {
    Logistic,
    /// CDF of a zero-mean Gaussian with variance 2 (the link realized by
    /// differencing two standard-Gaussian noisy function values).
    GaussianCdfVar2,
    /// `sigma(x) = (1 + x) / 2`; only valid while the cost range stays <= 1.
    Linear,
}

const INV_TWO_SQRT_PI: f64 = 0.28209479177387814; // 1 / (2 sqrt(pi))

impl LinkFunction {
    pub fn name(&self) -> &'static str {
        match self {
            LinkFunction::Logistic => "logistic",
            LinkFunction::GaussianCdfVar2 => "gaussian_cdf_var2",
            LinkFunction::Linear => "linear",
        }
    }

    /// `sigma(x)`, computed through `excess` so the value is exact around 1/2.
    pub fn sigma(&self, x: f64) -> f64 {
        0.5 + self.excess(x)
    }

    /// `sigma(x) - sigma(0)` without cancellation; this is what regret
    /// accounting sums, so it must keep full relative accuracy near 0.
    pub fn excess(&self, x: f64) -> f64 {
        match self {
            LinkFunction::Logistic => 0.5 * (0.5 * x).tanh(),
            LinkFunction::GaussianCdfVar2 => 0.5 * erf(0.5 * x),
            LinkFunction::Linear => 0.5 * x,
        }
    }

    pub fn sigma_prime(&self, x: f64) -> f64 {
        match self {
            LinkFunction::Logistic => {
                let s = self.sigma(x);
                s * (1.0 - s)
            }
            LinkFunction::GaussianCdfVar2 => INV_TWO_SQRT_PI * (-0.25 * x * x).exp(),
            LinkFunction::Linear => 0.5,
        }
    }

    pub fn sigma_double_prime(&self, x: f64) -> f64 {
        match self {
            LinkFunction::Logistic => {
                let s = self.sigma(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            LinkFunction::GaussianCdfVar2 => -0.5 * x * self.sigma_prime(x),
            LinkFunction::Linear => 0.0,
        }
    }

    pub fn sigma_triple_prime(&self, x: f64) -> f64 {
        match self {
            LinkFunction::Logistic => {
                let s = self.sigma(x);
                let sp = s * (1.0 - s);
                sp * ((1.0 - 2.0 * s).powi(2) - 2.0 * sp)
            }
            LinkFunction::GaussianCdfVar2 => 0.25 * (x * x - 2.0) * self.sigma_prime(x),
            LinkFunction::Linear => 0.0,
        }
    }
}

/// Bounds on the link derivatives over `[-B, B]` (closed forms for the three
/// supported links).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConstants {
    /// `l0`: minimum of `sigma'` on `[-B, B]`, attained at the endpoints.
    pub slope_min: f64,
    /// `L0`: maximum of `sigma'`, attained at 0.
    pub slope_max: f64,
    /// `B2`: maximum of `|sigma''|` on `[-B, B]`.
    pub curvature_max: f64,
    /// `L2`: Lipschitz constant of `sigma''` on `[-B, B]` (max of `|sigma'''|`).
    pub curvature_lip: f64,
}

/// Derivative bounds of a link on `[-B, B]`.
///
/// `sigma'` is unimodal with peak at 0, so the extrema are at `0` and `B`.
/// `|sigma''|` peaks at `ln(2 + sqrt(3))` for the logistic link and at
/// `sqrt(2)` for the Gaussian one; `|sigma'''|` peaks at 0 for both.
pub fn link_constants(link: LinkFunction, cost_range: f64) -> Result<LinkConstants> {
    if cost_range <= 0.0 {
        return Err(Error::InvalidRange(format!(
            "cost range must be positive, got {cost_range}"
        )));
    }
    if link == LinkFunction::Linear && cost_range > 1.0 {
        return Err(Error::InvalidRange(format!(
            "linear link needs cost range <= 1 to stay a probability, got {cost_range}"
        )));
    }
    let b = cost_range;
    let constants = match link {
        LinkFunction::Linear => LinkConstants {
            slope_min: 0.5,
            slope_max: 0.5,
            curvature_max: 0.0,
            curvature_lip: 0.0,
        },
        LinkFunction::Logistic => {
            let curvature_peak = (2.0 + 3.0f64.sqrt()).ln();
            LinkConstants {
                slope_min: link.sigma_prime(b),
                slope_max: 0.25,
                curvature_max: link.sigma_double_prime(b.min(curvature_peak)).abs(),
                curvature_lip: 0.125,
            }
        }
        LinkFunction::GaussianCdfVar2 => LinkConstants {
            slope_min: link.sigma_prime(b),
            slope_max: INV_TWO_SQRT_PI,
            curvature_max: link.sigma_double_prime(b.min(2.0f64.sqrt())).abs(),
            curvature_lip: 0.5 * INV_TWO_SQRT_PI,
        },
    };
    Ok(constants)
}

/// Quadratic cost `f(a) = (a - c)^T Q (a - c) / 2 + offset` with
/// eigenvalues of `Q` in `[alpha, beta]`.
#[derive(Debug, Clone)]
pub struct CostFunction {
    q: DMatrix<f64>,
    center: DVector<f64>,
    offset: f64,
    alpha: f64,
    beta: f64,
}

impl CostFunction {
    pub fn quadratic(q: DMatrix<f64>, center: DVector<f64>, offset: f64) -> Result<Self> {
        let d = center.len();
        if q.nrows() != d || q.ncols() != d {
            return Err(Error::AssumptionViolation(format!(
                "cost matrix is {}x{}, expected {d}x{d}",
                q.nrows(),
                q.ncols()
            )));
        }
        let asym = (&q - q.transpose()).norm();
        if asym > 1e-10 * (1.0 + q.norm()) {
            return Err(Error::AssumptionViolation(
                "cost matrix must be symmetric".into(),
            ));
        }
        let q = (&q + q.transpose()) * 0.5;
        let eigen = q.clone().symmetric_eigen();
        let alpha = eigen.eigenvalues.min();
        let beta = eigen.eigenvalues.max();
        if alpha <= 0.0 {
            return Err(Error::AssumptionViolation(format!(
                "cost must be strongly convex, min eigenvalue {alpha:.3e}"
            )));
        }
        Ok(CostFunction {
            q,
            center,
            offset,
            alpha,
            beta,
        })
    }

    /// Isotropic special case `f(a) = scale * ||a - c||^2 / 2`.
    pub fn isotropic(center: DVector<f64>, scale: f64) -> Result<Self> {
        let d = center.len();
        CostFunction::quadratic(DMatrix::identity(d, d) * scale, center, 0.0)
    }

    pub fn eval(&self, a: &DVector<f64>) -> f64 {
        let v = a - &self.center;
        0.5 * (v.transpose() * &self.q * &v)[(0, 0)] + self.offset
    }

    pub fn grad(&self, a: &DVector<f64>) -> DVector<f64> {
        &self.q * (a - &self.center)
    }

    pub fn hess(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }
}

/// Constants of a problem instance, all derived at construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InstanceConstants {
    /// Strong convexity of the cost.
    pub alpha: f64,
    /// Smoothness of the cost.
    pub beta: f64,
    /// `L`: Lipschitz constant of the cost over the set.
    pub lipschitz: f64,
    /// `B`: `sup f - inf f` over the set.
    pub cost_range: f64,
    /// `R`: Euclidean diameter of the set.
    pub diameter: f64,
    /// Link-derivative bounds on `[-B, B]`.
    pub link: LinkConstants,
}

/// Immutable problem description: action set, cost, link and constants.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub barrier: Barrier,
    pub cost: CostFunction,
    pub link: LinkFunction,
    pub constants: InstanceConstants,
    pub a_star: DVector<f64>,
    pub f_star: f64,
}

/// Fixed-point / vertex maximization of a convex function over the body.
/// For the box the maximum sits at a vertex; for the ball it sits on the
/// sphere where the gradient is radial, which the iteration enforces.
fn maximize_convex<F, G>(body: &ConvexBody, f: F, grad: G, extra_dirs: &[DVector<f64>]) -> f64
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    match body {
        ConvexBody::Box { .. } => body
            .vertices()
            .iter()
            .map(f)
            .fold(f64::NEG_INFINITY, f64::max),
        ConvexBody::Ball { center, radius } => {
            let d = center.len();
            let c = DVector::from_column_slice(center);
            let mut rng = ChaCha8Rng::seed_from_u64(0xD1CE);
            let mut candidates: Vec<DVector<f64>> = Vec::new();
            for dir in extra_dirs {
                let n = dir.norm();
                if n > 1e-14 {
                    candidates.push(&c + dir * (*radius / n));
                    candidates.push(&c - dir * (*radius / n));
                }
            }
            for _ in 0..64 {
                candidates.push(&c + sample_unit_sphere(d, &mut rng) * *radius);
            }
            let mut best = f64::NEG_INFINITY;
            for mut a in candidates {
                for _ in 0..100 {
                    let g = grad(&a);
                    let n = g.norm();
                    if n < 1e-14 {
                        break;
                    }
                    let next = &c + &g * (*radius / n);
                    let done = (&next - &a).norm() < 1e-14;
                    a = next;
                    if done {
                        break;
                    }
                }
                best = best.max(f(&a));
            }
            best
        }
    }
}

/// Projected gradient descent with step `1/beta`; certified by strong
/// convexity, stops on the gradient-map residual.
fn minimize_cost(body: &ConvexBody, cost: &CostFunction) -> Result<DVector<f64>> {
    let unconstrained = cost.center().clone();
    if body.contains(&unconstrained) {
        return Ok(unconstrained);
    }
    let step = 1.0 / cost.beta();
    let mut a = body.project(&unconstrained);
    for _ in 0..2_000_000u32 {
        let next = body.project(&(&a - cost.grad(&a) * step));
        let residual = (&next - &a).norm();
        a = next;
        if residual <= 1e-12 {
            return Ok(a);
        }
    }
    Err(Error::NoConvergence {
        iters: 2_000_000,
        residual: f64::NAN,
    })
}

/// Assemble a `ProblemInstance`, computing the minimizer, the cost range,
/// the Lipschitz constant and the link constants, and checking the link
/// monotonicity assumption on `[0, B]`.
pub fn build_instance(
    body: ConvexBody,
    cost: CostFunction,
    link: LinkFunction,
) -> Result<ProblemInstance> {
    if body.dim() != cost.center().len() {
        return Err(Error::AssumptionViolation(format!(
            "set dimension {} does not match cost dimension {}",
            body.dim(),
            cost.center().len()
        )));
    }
    let barrier = Barrier::new(body.clone());
    let a_star = minimize_cost(&body, &cost)?;
    let f_star = cost.eval(&a_star);

    let eigen = cost.hess().clone().symmetric_eigen();
    let mut dirs: Vec<DVector<f64>> = (0..body.dim())
        .map(|i| eigen.eigenvectors.column(i).into_owned())
        .collect();
    dirs.push(body.center() - cost.center());

    let f_max = maximize_convex(&body, |a| cost.eval(a), |a| cost.grad(a), &dirs);
    let cost_range = f_max - f_star;

    // L = sup ||grad f||: maximize the convex function ||Q(a-c)||^2 / 2.
    let q2 = cost.hess() * cost.hess();
    let grad_sq_max = maximize_convex(
        &body,
        |a| 0.5 * (cost.grad(a)).norm_squared(),
        |a| &q2 * (a - cost.center()),
        &dirs,
    );
    let lipschitz = (2.0 * grad_sq_max).sqrt();

    let link_consts = link_constants(link, cost_range)?;

    // Assumption check: sigma' positive and non-increasing on [0, B].
    let grid = 1000;
    let mut prev = link.sigma_prime(0.0);
    for i in 1..=grid {
        let x = cost_range * i as f64 / grid as f64;
        let sp = link.sigma_prime(x);
        if sp <= 0.0 {
            return Err(Error::AssumptionViolation(format!(
                "sigma' must stay positive on [0, B], failed at x={x}"
            )));
        }
        if sp > prev + 1e-12 {
            return Err(Error::AssumptionViolation(format!(
                "sigma' must be non-increasing on [0, B], failed at x={x}"
            )));
        }
        prev = sp;
    }

    let constants = InstanceConstants {
        alpha: cost.alpha(),
        beta: cost.beta(),
        lipschitz,
        cost_range,
        diameter: body.diameter(),
        link: link_consts,
    };
    Ok(ProblemInstance {
        barrier,
        cost,
        link,
        constants,
        a_star,
        f_star,
    })
}

impl ProblemInstance {
    pub fn dim(&self) -> usize {
        self.barrier.dim()
    }

    pub fn body(&self) -> &ConvexBody {
        self.barrier.body()
    }

    /// `f(a) - f*`, clamped at zero against round-off at the minimizer.
    pub fn cost_gap(&self, a: &DVector<f64>) -> f64 {
        (self.cost.eval(a) - self.f_star).max(0.0)
    }

    /// Minimum win probability `P*(a) = sigma(f* - f(a))`: the infimum over
    /// opponents is attained at the minimizer because `sigma` is monotone.
    pub fn min_win_probability(&self, a: &DVector<f64>) -> f64 {
        self.link.sigma(-self.cost_gap(a))
    }

    /// Radius of the region where the comparison probability is locally
    /// strongly convex; unbounded when `sigma''` is identically zero.
    /// Conservative under both constant readings: uses `max(L, L0)^3 L2`.
    pub fn local_convexity_radius(&self) -> f64 {
        let c = &self.constants;
        if c.link.curvature_lip == 0.0 {
            f64::INFINITY
        } else {
            let l_max = c.lipschitz.max(c.link.slope_max);
            c.link.slope_min * c.alpha / (4.0 * l_max.powi(3) * c.link.curvature_lip)
        }
    }
}

/// Bernoulli comparison oracle owning a private RNG stream.
#[derive(Debug)]
pub struct ComparisonOracle<'a> {
    instance: &'a ProblemInstance,
    rng: ChaCha8Rng,
    query_count: u64,
    noise_draws: u64,
}

impl<'a> ComparisonOracle<'a> {
    pub fn new(instance: &'a ProblemInstance, rng: ChaCha8Rng) -> Self {
        ComparisonOracle {
            instance,
            rng,
            query_count: 0,
            noise_draws: 0,
        }
    }

    pub fn instance(&self) -> &ProblemInstance {
        self.instance
    }

    /// One comparison: returns `true` (the event "`a` wins") with
    /// probability `sigma(f(a') - f(a))`, consuming exactly one uniform
    /// variate from the stream.
    pub fn compare(&mut self, a: &DVector<f64>, a_prime: &DVector<f64>) -> bool {
        let diff = self.instance.cost.eval(a_prime) - self.instance.cost.eval(a);
        // Gaussian tails can round just outside [0, 1].
        let p = self.instance.link.sigma(diff).clamp(0.0, 1.0);
        self.query_count += 1;
        self.rng.gen::<f64>() < p
    }

    /// Noisy function value `f(a) + xi` with standard Gaussian `xi`.
    pub fn noisy_value(&mut self, a: &DVector<f64>) -> f64 {
        self.noise_draws += 1;
        self.instance.cost.eval(a) + self.rng.sample::<f64, _>(rand_distr::StandardNormal)
    }

    /// Comparison bit realized from two noisy function values:
    /// `1 iff f(a) + xi >= f(a') + xi'`. Distributed like a comparison with
    /// the variance-2 Gaussian link, so any other link is rejected.
    pub fn comparison_from_noisy(
        &mut self,
        a: &DVector<f64>,
        a_prime: &DVector<f64>,
    ) -> Result<bool> {
        if self.instance.link != LinkFunction::GaussianCdfVar2 {
            return Err(Error::WrongLink {
                expected: "gaussian_cdf_var2",
                actual: self.instance.link.name().to_string(),
            });
        }
        let va = self.noisy_value(a);
        let vb = self.noisy_value(a_prime);
        self.query_count += 1;
        Ok(va - vb >= 0.0)
    }

    pub fn query_count(&self) -> u64 {
        self.query_count
    }

    pub fn noise_draws(&self) -> u64 {
        self.noise_draws
    }
}
