//! Self-concordant barrier calculus.
//!
//! Provides the log barriers for the ball and the box, the time-varying
//! regularized barrier used by the solver (base barrier plus running
//! quadratic terms), symmetric Hessian square roots for Dikin-ellipsoid
//! probes, and a numerical self-concordance validator.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{sample_unit_sphere, ConvexBody};

/// A self-concordant barrier over a convex body, with its parameter `nu`.
#[derive(Debug, Clone)]
pub struct Barrier {
    body: ConvexBody,
    nu: f64,
}

/// Value, gradient and Hessian of a barrier-type function at one point.
#[derive(Debug, Clone)]
pub struct BarrierEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Barrier {
    /// Log barrier for the given body with its closed-form `nu`:
    /// 1 for the ball, `2d` for the box.
    pub fn new(body: ConvexBody) -> Self {
        let nu = match &body {
            ConvexBody::Ball { .. } => 1.0,
            ConvexBody::Box { lower, .. } => 2.0 * lower.len() as f64,
        };
        Barrier { body, nu }
    }

    /// Override `nu`, e.g. to exercise the validator with a wrong parameter.
    pub fn with_nu(mut self, nu: f64) -> Self {
        assert!(nu > 0.0);
        self.nu = nu;
        self
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    /// Minimizer of the barrier (the analytic center: ball center or box
    /// midpoint for the symmetric log barriers supported here).
    pub fn minimizer(&self) -> DVector<f64> {
        self.body.center()
    }

    fn check_interior(&self, a: &DVector<f64>) -> Result<()> {
        if self.body.is_strictly_interior(a) {
            Ok(())
        } else {
            Err(Error::BoundaryViolation {
                distance: self.body.boundary_distance(a),
            })
        }
    }

    /// Value, gradient and Hessian at a strictly interior point.
    ///
    /// Ball of radius `r` centered at `c`: `-log(r^2 - ||a-c||^2)`.
    /// Box: `-sum_i [log(a_i - lo_i) + log(hi_i - a_i)]`.
    pub fn eval(&self, a: &DVector<f64>) -> Result<BarrierEval> {
        self.check_interior(a)?;
        let d = self.dim();
        match &self.body {
            ConvexBody::Ball { center, radius } => {
                let c = DVector::from_column_slice(center);
                let v = a - &c;
                let s = radius * radius - v.norm_squared();
                debug_assert!(s > 0.0);
                let grad = &v * (2.0 / s);
                let mut hess = DMatrix::identity(d, d) * (2.0 / s);
                hess += &v * v.transpose() * (4.0 / (s * s));
                Ok(BarrierEval {
                    value: -s.ln(),
                    grad,
                    hess,
                })
            }
            ConvexBody::Box { lower, upper } => {
                let mut value = 0.0;
                let mut grad = DVector::zeros(d);
                let mut hess = DMatrix::zeros(d, d);
                for i in 0..d {
                    let lo = a[i] - lower[i];
                    let hi = upper[i] - a[i];
                    debug_assert!(lo > 0.0 && hi > 0.0);
                    value -= lo.ln() + hi.ln();
                    grad[i] = -1.0 / lo + 1.0 / hi;
                    hess[(i, i)] = 1.0 / (lo * lo) + 1.0 / (hi * hi);
                }
                Ok(BarrierEval { value, grad, hess })
            }
        }
    }
}

/// The time-varying function of the solver:
/// `R_t(a) = R(a) + (lambda*eta/2) * sum_i ||a - a_i||^2 + mu * ||a||^2`.
///
/// Only the running sum of past actions and the sum of their squared norms
/// are stored; gradients and Hessians never need the individual actions.
#[derive(Debug, Clone)]
pub struct RegularizedBarrierState {
    base: Barrier,
    lambda_eta: f64,
    mu: f64,
    t: u64,
    action_sum: DVector<f64>,
    action_sq_sum: f64,
}

impl RegularizedBarrierState {
    pub fn new(base: Barrier, lambda_eta: f64, mu: f64) -> Self {
        assert!(lambda_eta >= 0.0 && mu >= 0.0);
        let d = base.dim();
        RegularizedBarrierState {
            base,
            lambda_eta,
            mu,
            t: 0,
            action_sum: DVector::zeros(d),
            action_sq_sum: 0.0,
        }
    }

    pub fn base(&self) -> &Barrier {
        &self.base
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn lambda_eta(&self) -> f64 {
        self.lambda_eta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Record one action: increments `t` and the running sums.
    pub fn push_action(&mut self, a: &DVector<f64>) {
        self.t += 1;
        self.action_sum += a;
        self.action_sq_sum += a.norm_squared();
    }

    /// Evaluate `R_t` at a strictly interior point.
    pub fn eval(&self, a: &DVector<f64>) -> Result<BarrierEval> {
        let mut e = self.base.eval(a)?;
        let t = self.t as f64;
        let le = self.lambda_eta;
        let sq = a.norm_squared();
        // (le/2) * sum_i ||a - a_i||^2 expanded through the running sums.
        e.value += 0.5 * le * (t * sq - 2.0 * a.dot(&self.action_sum) + self.action_sq_sum)
            + self.mu * sq;
        e.grad += a * (le * t + 2.0 * self.mu) - &self.action_sum * le;
        let diag = le * t + 2.0 * self.mu;
        for i in 0..self.base.dim() {
            e.hess[(i, i)] += diag;
        }
        Ok(e)
    }
}

/// Symmetric square root `S` of an SPD Hessian and its inverse, so that
/// probes `a + S^{-1} u` live on the unit sphere of the local norm.
#[derive(Debug, Clone)]
pub struct HessianFactor {
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
}

/// Factor an SPD matrix through its symmetric eigendecomposition.
pub fn hessian_factor(hess: &DMatrix<f64>) -> Result<HessianFactor> {
    let eigen = hess.clone().symmetric_eigen();
    let min_eig = eigen.eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min_eig,
        });
    }
    let q = &eigen.eigenvectors;
    let sqrt_vals = eigen.eigenvalues.map(f64::sqrt);
    let mut sqrt = q * DMatrix::from_diagonal(&sqrt_vals) * q.transpose();
    let mut inv_sqrt = q * DMatrix::from_diagonal(&sqrt_vals.map(|s| 1.0 / s)) * q.transpose();
    // Symmetrize away round-off so S == S^T exactly.
    sqrt = (&sqrt + sqrt.transpose()) * 0.5;
    inv_sqrt = (&inv_sqrt + inv_sqrt.transpose()) * 0.5;
    Ok(HessianFactor { sqrt, inv_sqrt })
}

impl HessianFactor {
    pub fn dim(&self) -> usize {
        self.sqrt.nrows()
    }

    /// `S = hess^{1/2}`.
    pub fn sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    /// `S^{-1} = hess^{-1/2}`.
    pub fn inv_sqrt(&self) -> &DMatrix<f64> {
        &self.inv_sqrt
    }

    /// Dikin-ellipsoid probe offset `S^{-1} u` for a unit direction `u`.
    /// The offset has local norm 1, so the probed point stays inside the
    /// domain of the barrier the Hessian came from.
    pub fn probe(&self, u: &DVector<f64>) -> DVector<f64> {
        assert!(
            (u.norm() - 1.0).abs() < 1e-12,
            "probe direction must be a unit vector"
        );
        &self.inv_sqrt * u
    }
}

/// Result of the numerical self-concordance check.
///
/// `max_ratio_cond2` is `|D^3 R[h,h,h]| / (2 (h^T H h)^{3/2})` maximized over
/// samples (third derivative by central differences); `max_ratio_cond3` is
/// `sup_h (grad^T h)^2 / (nu * h^T H h) = grad^T H^{-1} grad / nu`, evaluated
/// in closed form. For the regularized barrier only condition 2 applies.
#[derive(Debug, Clone)]
pub struct SelfConcordanceReport {
    pub max_ratio_cond2: f64,
    pub max_ratio_cond3: Option<f64>,
    pub pass: bool,
    pub samples: usize,
}

/// Tolerance for the finite-difference third-derivative condition.
pub const COND2_TOL: f64 = 1e-4;
/// Tolerance for the closed-form gradient condition.
pub const COND3_TOL: f64 = 1e-10;

fn cond2_ratio<F>(eval: &F, body: &ConvexBody, x: &DVector<f64>, h: &DVector<f64>) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> Result<BarrierEval>,
{
    let quad = |p: &DVector<f64>| -> Result<f64> {
        let e = eval(p)?;
        Ok((h.transpose() * &e.hess * h)[(0, 0)])
    };
    let step = 1e-4 * body.boundary_distance(x);
    let q_plus = quad(&(x + h * step))?;
    let q_minus = quad(&(x - h * step))?;
    let q0 = quad(x)?;
    let d3 = (q_plus - q_minus) / (2.0 * step);
    Ok(d3.abs() / (2.0 * q0.powf(1.5)))
}

fn cond3_ratio(e: &BarrierEval, nu: f64) -> f64 {
    // sup over h of (grad^T h)^2 / (h^T H h) equals grad^T H^{-1} grad.
    let solved = e
        .hess
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&e.grad))
        .unwrap_or_else(|| e.hess.clone().lu().solve(&e.grad).expect("singular Hessian"));
    e.grad.dot(&solved) / nu
}

/// Sample interior points and directions and check the two self-concordance
/// conditions for the base barrier against its declared `nu`.
pub fn verify_self_concordance(b: &Barrier, n_samples: usize, seed: u64) -> SelfConcordanceReport {
    assert!(n_samples >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = b.dim();
    let mut max2: f64 = 0.0;
    let mut max3: f64 = 0.0;
    let mut taken = 0;
    while taken < n_samples {
        let x = b.body().sample_interior(&mut rng);
        let h = sample_unit_sphere(d, &mut rng);
        let (e, r2) = match (b.eval(&x), cond2_ratio(&|p| b.eval(p), b.body(), &x, &h)) {
            (Ok(e), Ok(r2)) => (e, r2),
            // A degenerate draw (boundary hit inside the stencil): resample.
            _ => continue,
        };
        max2 = max2.max(r2);
        max3 = max3.max(cond3_ratio(&e, b.nu()));
        taken += 1;
    }
    SelfConcordanceReport {
        max_ratio_cond2: max2,
        max_ratio_cond3: Some(max3),
        pass: max2 <= 1.0 + COND2_TOL && max3 <= 1.0 + COND3_TOL,
        samples: taken,
    }
}

/// Condition-2-only check for the regularized barrier `R_t`, which is
/// self-concordant but not `nu`-self-concordant.
pub fn verify_regularized_self_concordance(
    st: &RegularizedBarrierState,
    n_samples: usize,
    seed: u64,
) -> SelfConcordanceReport {
    assert!(n_samples >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body = st.base().body().clone();
    let d = body.dim();
    let mut max2: f64 = 0.0;
    let mut taken = 0;
    while taken < n_samples {
        let x = body.sample_interior(&mut rng);
        let h = sample_unit_sphere(d, &mut rng);
        match cond2_ratio(&|p| st.eval(p), &body, &x, &h) {
            Ok(r2) => {
                max2 = max2.max(r2);
                taken += 1;
            }
            Err(_) => continue,
        }
    }
    SelfConcordanceReport {
        max_ratio_cond2: max2,
        max_ratio_cond3: None,
        pass: max2 <= 1.0 + COND2_TOL,
        samples: taken,
    }
}
