//! The mirror-descent solver driven by one-bit comparison feedback.
//!
//! Each round factors the regularized barrier Hessian, probes the Dikin
//! ellipsoid along a uniform sphere direction, asks the oracle to compare
//! the incumbent with the probe, scales the feedback bit into a gradient
//! estimate and inverts the mirror map with damped Newton.
//!
//! The recorded feedback bit is the event "the incumbent beats the probe",
//! whose probability is `sigma(f(probe) - f(incumbent))`; with that
//! convention the estimate `F * d * H^{1/2} u` is unbiased for the gradient
//! of the ellipsoid-smoothed comparison probability, and the mirror step
//! descends it.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barriers::{hessian_factor, RegularizedBarrierState};
use crate::error::{Error, Result};
use crate::geometry::{sample_unit_ball, sample_unit_sphere};
use crate::oracle::{ComparisonOracle, ProblemInstance};

/// RNG substreams spawned from one master seed, so reproducibility does not
/// depend on evaluation order.
const STREAM_DIRECTIONS: u64 = 1;
const STREAM_ORACLE: u64 = 2;
const STREAM_BASELINE: u64 = 3;

const MAX_NEWTON_ITERS: u32 = 200;

/// Hyperparameters of one run. Usually produced by `derive_hyperparams`;
/// manual overrides are flagged so downstream checks can gate on them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub horizon: u64,
    pub eta: f64,
    pub lambda: f64,
    pub mu: f64,
    /// The constant `C` entering the learning rate and the regret bound.
    pub c_const: f64,
    pub seed: u64,
    /// True when any of eta/lambda/mu was set manually.
    pub overridden: bool,
}

/// Optional manual hyperparameter values.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct HyperOverrides {
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
}

impl HyperOverrides {
    pub fn is_empty(&self) -> bool {
        self.eta.is_none() && self.lambda.is_none() && self.mu.is_none()
    }
}

/// Hyperparameters from the regret-bound recipe:
/// `lambda = l0 alpha / 2` (the largest allowed), `mu = (L0^3 L2 / lambda)^2`
/// (the smallest allowed), `C = nu + (B2 L^2 + (L+1) L0 beta) / (2 lambda)`
/// and `eta = (1/2d) sqrt(C log T / T)`.
pub fn derive_hyperparams(inst: &ProblemInstance, nu: f64, horizon: u64) -> SolverConfig {
    assert!(horizon >= 2, "need at least two rounds");
    let c = &inst.constants;
    let lambda = 0.5 * c.link.slope_min * c.alpha;
    let mu = if c.link.curvature_lip == 0.0 {
        0.0
    } else {
        (c.link.slope_max.powi(3) * c.link.curvature_lip / lambda).powi(2)
    };
    let c_const = nu
        + (c.link.curvature_max * c.lipschitz.powi(2)
            + (c.lipschitz + 1.0) * c.link.slope_max * c.beta)
            / (2.0 * lambda);
    let t = horizon as f64;
    let d = inst.dim() as f64;
    let eta = 0.5 / d * (c_const * t.ln() / t).sqrt();
    let config = SolverConfig {
        horizon,
        eta,
        lambda,
        mu,
        c_const,
        seed: 0,
        overridden: false,
    };
    if config.horizon_large_enough() {
        debug_assert!(eta <= 0.5 / d * (1.0 + 1e-12));
    }
    config
}

impl SolverConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_overrides(mut self, ov: &HyperOverrides) -> Self {
        if let Some(eta) = ov.eta {
            self.eta = eta;
            self.overridden = true;
        }
        if let Some(lambda) = ov.lambda {
            self.lambda = lambda;
            self.overridden = true;
        }
        if let Some(mu) = ov.mu {
            self.mu = mu;
            self.overridden = true;
        }
        self
    }

    /// `T >= C log T`, the horizon condition of the regret theorem.
    pub fn horizon_large_enough(&self) -> bool {
        let t = self.horizon as f64;
        t >= self.c_const * t.ln()
    }

    /// All conditions under which the regret/divergence bounds are claimed:
    /// lambda and mu in their allowed ranges, the horizon condition, and
    /// `eta <= 1/(2d)`.
    pub fn theorem_conditions_met(&self, inst: &ProblemInstance) -> bool {
        let c = &inst.constants;
        let lambda_ok = self.lambda <= 0.5 * c.link.slope_min * c.alpha + 1e-15;
        let mu_floor = if self.lambda > 0.0 {
            (c.link.slope_max.powi(3) * c.link.curvature_lip / self.lambda).powi(2)
        } else {
            f64::INFINITY
        };
        let mu_ok = self.mu >= mu_floor - 1e-15;
        let eta_ok = self.eta <= 0.5 / inst.dim() as f64 + 1e-15;
        lambda_ok && mu_ok && eta_ok && self.horizon_large_enough()
    }
}

/// Everything recorded about one round.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    /// Incumbent action `a_t`.
    pub action: DVector<f64>,
    /// Probe `a'_t = a_t + H_t^{-1/2} u_t`.
    pub probe: DVector<f64>,
    /// Sphere direction `u_t`.
    pub direction: DVector<f64>,
    /// Feedback bit: the incumbent won the comparison.
    pub incumbent_won: bool,
    pub ghat_norm: f64,
    /// Dual Bregman divergence of the step, equal to the primal divergence
    /// `D_{R_t}(a_t, a_{t+1})`.
    pub dual_bregman: f64,
    pub newton_iters: u32,
    pub newton_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ncsmd,
    UniformRandomPair,
}

/// A full run: per-step records plus the final action.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub algorithm: Algorithm,
    pub config: SolverConfig,
    pub steps: Vec<StepRecord>,
    /// `a_{T+1}` (the last incumbent when a run fails midway).
    pub a_final: DVector<f64>,
    /// Failure note for the step that aborted the run, if any.
    pub failure: Option<String>,
}

impl Trajectory {
    /// Average of all queried points, `(1/2T) sum (a_t + a'_t)`; stays in
    /// the action set by convexity.
    pub fn averaged_action(&self) -> Result<DVector<f64>> {
        averaged_action(self)
    }
}

pub fn averaged_action(traj: &Trajectory) -> Result<DVector<f64>> {
    if traj.steps.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let d = traj.a_final.len();
    let mut sum = DVector::zeros(d);
    for s in &traj.steps {
        sum += &s.action;
        sum += &s.probe;
    }
    Ok(sum / (2.0 * traj.steps.len() as f64))
}

/// Result of a mirror-map inversion.
#[derive(Debug, Clone)]
pub struct MirrorInverse {
    pub point: DVector<f64>,
    pub iters: u32,
    pub residual: f64,
}

/// Find `a` with `grad R_t(a) = theta` by damped Newton on the strictly
/// convex `R_t(a) - theta^T a`. The step is damped by the local Newton
/// decrement, which keeps iterates inside the domain; a bisection guard
/// covers floating-point underflow of the boundary margin.
pub fn invert_mirror_map(
    st: &RegularizedBarrierState,
    theta: &DVector<f64>,
    a_init: &DVector<f64>,
) -> Result<MirrorInverse> {
    let scale = theta.norm().max(1.0);
    let target = 1e-12 * scale;
    let accept = 1e-9 * scale;
    let body = st.base().body().clone();
    if !body.is_strictly_interior(a_init) {
        return Err(Error::BoundaryViolation {
            distance: body.boundary_distance(a_init),
        });
    }
    let mut a = a_init.clone();
    let mut iters = 0u32;
    loop {
        let e = st.eval(&a)?;
        let residual = (&e.grad - theta).norm();
        if residual <= target {
            return Ok(MirrorInverse {
                point: a,
                iters,
                residual,
            });
        }
        if iters >= MAX_NEWTON_ITERS {
            if residual <= accept {
                return Ok(MirrorInverse {
                    point: a,
                    iters,
                    residual,
                });
            }
            return Err(Error::NoConvergence { iters, residual });
        }
        let rhs = theta - &e.grad;
        let delta = match e.hess.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                return Err(Error::NotPositiveDefinite {
                    min_eigenvalue: f64::NAN,
                })
            }
        };
        let decrement = (delta.transpose() * &e.hess * &delta)[(0, 0)]
            .max(0.0)
            .sqrt();
        let mut step = if decrement < 0.25 {
            1.0
        } else {
            1.0 / (1.0 + decrement)
        };
        let mut candidate = &a + &delta * step;
        while !body.is_strictly_interior(&candidate) {
            step *= 0.5;
            if step < 1e-18 {
                return Err(Error::NoConvergence { iters, residual });
            }
            candidate = &a + &delta * step;
        }
        a = candidate;
        iters += 1;
    }
}

/// One round of the solver. `st` must already include `a_t` in its running
/// sums (the regularizer at round `t` sums over `i <= t`).
pub fn ncsmd_step(
    oracle: &mut ComparisonOracle<'_>,
    st: &RegularizedBarrierState,
    a_t: &DVector<f64>,
    config: &SolverConfig,
    dir_rng: &mut ChaCha8Rng,
) -> Result<(DVector<f64>, StepRecord)> {
    let d = a_t.len();
    let e = st.eval(a_t)?;
    let factor = hessian_factor(&e.hess)?;
    let u = sample_unit_sphere(d, dir_rng);
    let probe = a_t + factor.probe(&u);
    let incumbent_won = oracle.compare(a_t, &probe);

    let (a_next, ghat_norm, dual_bregman, newton_iters, newton_residual) = if incumbent_won {
        let ghat = factor.sqrt() * &u * d as f64;
        let theta = &e.grad - &ghat * config.eta;
        let inv = invert_mirror_map(st, &theta, a_t)?;
        let e_next = st.eval(&inv.point)?;
        // Dual divergence at the shifted gradient equals the primal
        // divergence with swapped arguments: D_{R_t}(a_t, a_{t+1}).
        let div = (e.value - e_next.value - e_next.grad.dot(&(a_t - &inv.point))).max(0.0);
        (inv.point, ghat.norm(), div, inv.iters, inv.residual)
    } else {
        // Zero gradient estimate: the mirror map inverts to a_t itself.
        (a_t.clone(), 0.0, 0.0, 0, 0.0)
    };

    let record = StepRecord {
        t: st.t(),
        action: a_t.clone(),
        probe,
        direction: u,
        incumbent_won,
        ghat_norm,
        dual_bregman,
        newton_iters,
        newton_residual,
    };
    Ok((a_next, record))
}

/// Run the solver for `config.horizon` rounds from the barrier minimizer.
/// A failing step aborts the run and leaves a failure marker on the
/// (partial) trajectory instead of erroring.
pub fn run(inst: &ProblemInstance, config: &SolverConfig) -> Trajectory {
    let mut dir_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dir_rng.set_stream(STREAM_DIRECTIONS);
    let mut oracle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    oracle_rng.set_stream(STREAM_ORACLE);
    let mut oracle = ComparisonOracle::new(inst, oracle_rng);

    let mut st = RegularizedBarrierState::new(
        inst.barrier.clone(),
        config.lambda * config.eta,
        config.mu,
    );
    let mut a = inst.barrier.minimizer();
    let mut steps = Vec::with_capacity(config.horizon as usize);
    let mut failure = None;
    for t in 1..=config.horizon {
        st.push_action(&a);
        match ncsmd_step(&mut oracle, &st, &a, config, &mut dir_rng) {
            Ok((next, record)) => {
                steps.push(record);
                a = next;
            }
            Err(err) => {
                failure = Some(format!("step {t}: {err}"));
                break;
            }
        }
    }
    Trajectory {
        algorithm: Algorithm::Ncsmd,
        config: config.clone(),
        steps,
        a_final: a,
        failure,
    }
}

/// Sanity baseline: both actions uniform in the set each round. Its
/// dueling-bandit regret must grow linearly, cleanly separated from the
/// solver's.
pub fn run_uniform_baseline(inst: &ProblemInstance, config: &SolverConfig) -> Trajectory {
    let mut action_rng = ChaCha8Rng::seed_from_u64(config.seed);
    action_rng.set_stream(STREAM_BASELINE);
    let mut oracle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    oracle_rng.set_stream(STREAM_ORACLE);
    let mut oracle = ComparisonOracle::new(inst, oracle_rng);
    let d = inst.dim();
    let mut steps = Vec::with_capacity(config.horizon as usize);
    let mut a = inst.barrier.minimizer();
    for t in 1..=config.horizon {
        let action = inst.body().sample_uniform(&mut action_rng);
        let probe = inst.body().sample_uniform(&mut action_rng);
        let incumbent_won = oracle.compare(&action, &probe);
        a = action.clone();
        steps.push(StepRecord {
            t,
            action,
            probe,
            direction: DVector::zeros(d),
            incumbent_won,
            ghat_norm: 0.0,
            dual_bregman: 0.0,
            newton_iters: 0,
            newton_residual: 0.0,
        });
    }
    Trajectory {
        algorithm: Algorithm::UniformRandomPair,
        config: config.clone(),
        steps,
        a_final: a,
        failure: None,
    }
}

/// Monte Carlo estimates of the gradient estimator's mean at a frozen state,
/// with two independent routes: averaging the one-bit estimator itself, and
/// a central-difference stencil through the ellipsoid-smoothed comparison
/// probability (common random ball points across the stencil).
#[derive(Debug, Clone)]
pub struct SmoothedGradientEstimate {
    pub ghat_mean: DVector<f64>,
    pub ghat_se: DVector<f64>,
    pub smoothed_grad_mean: DVector<f64>,
    pub smoothed_grad_se: DVector<f64>,
}

pub fn estimate_smoothed_gradient_mc(
    inst: &ProblemInstance,
    st: &RegularizedBarrierState,
    a_t: &DVector<f64>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SmoothedGradientEstimate> {
    assert!(n >= 1);
    let d = a_t.len();
    let e = st.eval(a_t)?;
    let factor = hessian_factor(&e.hess)?;
    let f_at = inst.cost.eval(a_t);

    let mut sum = DVector::zeros(d);
    let mut sum_sq = DVector::zeros(d);
    for _ in 0..n {
        let u = sample_unit_sphere(d, rng);
        let probe = a_t + factor.probe(&u);
        let p = inst
            .link
            .sigma(inst.cost.eval(&probe) - f_at)
            .clamp(0.0, 1.0);
        if rng.gen::<f64>() < p {
            let ghat = factor.sqrt() * &u * d as f64;
            sum += &ghat;
            sum_sq += ghat.map(|v| v * v);
        }
    }
    let nf = n as f64;
    let ghat_mean = &sum / nf;
    let ghat_se = DVector::from_iterator(
        d,
        (0..d).map(|j| {
            let var = (sum_sq[j] / nf - ghat_mean[j] * ghat_mean[j]).max(0.0);
            (var / nf).sqrt()
        }),
    );

    // Smoothed probability: P(a) = E_{x in ball} sigma(f(a + H^{-1/2}x) - f(a_t)).
    // Central differences per coordinate with shared x samples.
    let delta = 1e-4;
    let mut g_sum: DVector<f64> = DVector::zeros(d);
    let mut g_sum_sq: DVector<f64> = DVector::zeros(d);
    for _ in 0..n {
        let x = sample_unit_ball(d, rng);
        let offset = factor.inv_sqrt() * &x;
        for j in 0..d {
            let mut hi = a_t + &offset;
            hi[j] += delta;
            let mut lo = a_t + &offset;
            lo[j] -= delta;
            let quot = (inst.link.sigma(inst.cost.eval(&hi) - f_at)
                - inst.link.sigma(inst.cost.eval(&lo) - f_at))
                / (2.0 * delta);
            g_sum[j] += quot;
            g_sum_sq[j] += quot * quot;
        }
    }
    let smoothed_grad_mean = &g_sum / nf;
    let smoothed_grad_se = DVector::from_iterator(
        d,
        (0..d).map(|j| {
            let var = (g_sum_sq[j] / nf - smoothed_grad_mean[j] * smoothed_grad_mean[j]).max(0.0);
            (var / nf).sqrt()
        }),
    );

    Ok(SmoothedGradientEstimate {
        ghat_mean,
        ghat_se,
        smoothed_grad_mean,
        smoothed_grad_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::Barrier;
    use crate::geometry::ConvexBody;
    use crate::oracle::{build_instance, CostFunction, LinkFunction};
    use approx::assert_abs_diff_eq;

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_column_slice(&[x, y])
    }

    fn canonical(link: LinkFunction) -> ProblemInstance {
        let cost = CostFunction::isotropic(vec2(0.3, 0.0), 1.0).unwrap();
        build_instance(ConvexBody::unit_ball(2), cost, link).unwrap()
    }

    #[test]
    fn hyperparams_for_canonical_linear_instance() {
        let inst = canonical(LinkFunction::Linear);
        let cfg = derive_hyperparams(&inst, inst.barrier.nu(), 10_000);
        assert_abs_diff_eq!(cfg.lambda, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(cfg.mu, 0.0, epsilon = 1e-15);
        // C = 1 + (0 + 2.3 * 0.5 * 1) / 0.5 = 3.3
        assert_abs_diff_eq!(cfg.c_const, 3.3, epsilon = 1e-9);
        assert_abs_diff_eq!(cfg.eta, 0.013782, epsilon = 1e-5);
        assert!(cfg.horizon_large_enough());
        assert!(cfg.theorem_conditions_met(&inst));
    }

    #[test]
    fn eta_decreases_with_horizon() {
        let inst = canonical(LinkFunction::Logistic);
        let nu = inst.barrier.nu();
        let mut prev = f64::INFINITY;
        for t in [16u64, 64, 1024, 65_536, 1 << 20] {
            let cfg = derive_hyperparams(&inst, nu, t);
            assert!(cfg.eta < prev, "eta not decreasing at T={t}");
            assert!(cfg.eta <= 0.25 + 1e-12 || !cfg.horizon_large_enough());
            prev = cfg.eta;
        }
    }

    #[test]
    fn overrides_are_flagged() {
        let inst = canonical(LinkFunction::Logistic);
        let cfg = derive_hyperparams(&inst, 1.0, 1024);
        assert!(!cfg.overridden);
        let ov = HyperOverrides {
            lambda: Some(10.0),
            ..Default::default()
        };
        let cfg2 = cfg.with_overrides(&ov);
        assert!(cfg2.overridden);
        assert!(!cfg2.theorem_conditions_met(&inst));
    }

    #[test]
    fn invert_identity_case_returns_start() {
        let inst = canonical(LinkFunction::Logistic);
        let mut st = RegularizedBarrierState::new(inst.barrier.clone(), 0.01, 0.05);
        st.push_action(&vec2(0.1, 0.1));
        let a = vec2(0.2, -0.3);
        let theta = st.eval(&a).unwrap().grad;
        let inv = invert_mirror_map(&st, &theta, &a).unwrap();
        assert!(inv.iters <= 1);
        assert_eq!(inv.point, a);
    }

    #[test]
    fn invert_ball_gradient_closed_form() {
        // grad R(a) = 2a/(1-|a|^2); at a=(0.5,0) this is (4/3, 0).
        let b = Barrier::new(ConvexBody::unit_ball(2));
        let st = RegularizedBarrierState::new(b, 0.0, 0.0);
        let theta = vec2(4.0 / 3.0, 0.0);
        let inv = invert_mirror_map(&st, &theta, &vec2(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(inv.point[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(inv.point[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn invert_round_trips_in_a_box_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = Barrier::new(ConvexBody::cube(3, 1.0));
        let mut st = RegularizedBarrierState::new(b, 0.02, 0.01);
        st.push_action(&DVector::from_column_slice(&[0.2, -0.1, 0.4]));
        for _ in 0..50 {
            let theta = DVector::from_fn(3, |_, _| rng.gen_range(-5.0..5.0));
            let inv = invert_mirror_map(&st, &theta, &DVector::zeros(3)).unwrap();
            assert!(inv.residual <= 1e-9 * theta.norm().max(1.0));
            let back = st.eval(&inv.point).unwrap().grad;
            assert!((back - &theta).norm() <= 1e-9 * theta.norm().max(1.0));
        }
    }

    fn short_run(link: LinkFunction, t: u64, seed: u64) -> (ProblemInstance, Trajectory) {
        let inst = canonical(link);
        let cfg = derive_hyperparams(&inst, inst.barrier.nu(), t).with_seed(seed);
        let traj = run(&inst, &cfg);
        (inst, traj)
    }

    #[test]
    fn run_starts_at_barrier_minimizer_and_completes() {
        let (_, traj) = short_run(LinkFunction::Logistic, 500, 7);
        assert!(traj.failure.is_none());
        assert_eq!(traj.steps.len(), 500);
        assert_abs_diff_eq!(traj.steps[0].action.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_horizon_gives_empty_trajectory() {
        let inst = canonical(LinkFunction::Logistic);
        let mut cfg = derive_hyperparams(&inst, 1.0, 2).with_seed(1);
        cfg.horizon = 0;
        let traj = run(&inst, &cfg);
        assert!(traj.steps.is_empty());
        assert_eq!(traj.a_final, inst.barrier.minimizer());
        assert!(matches!(
            traj.averaged_action(),
            Err(Error::EmptyTrajectory)
        ));
    }

    #[test]
    fn lost_comparisons_freeze_the_iterate() {
        let (_, traj) = short_run(LinkFunction::Logistic, 300, 3);
        let mut saw_loss = false;
        for w in traj.steps.windows(2) {
            if !w[0].incumbent_won {
                saw_loss = true;
                assert_eq!(w[0].ghat_norm, 0.0);
                assert_eq!(w[0].dual_bregman, 0.0);
                assert_eq!(w[1].action, w[0].action, "iterate moved on a zero estimate");
            }
        }
        assert!(saw_loss, "no lost comparison in 300 steps is implausible");
    }

    #[test]
    fn step_records_replay_consistently() {
        // Rebuild the barrier state by replaying actions and verify the
        // probe identity, the dual norm of ghat, and the mirror round trip.
        let (inst, traj) = short_run(LinkFunction::Logistic, 400, 11);
        let cfg = &traj.config;
        let mut st =
            RegularizedBarrierState::new(inst.barrier.clone(), cfg.lambda * cfg.eta, cfg.mu);
        let d = inst.dim() as f64;
        for (i, rec) in traj.steps.iter().enumerate() {
            st.push_action(&rec.action);
            let e = st.eval(&rec.action).unwrap();
            let factor = hessian_factor(&e.hess).unwrap();
            let probe = &rec.action + factor.probe(&rec.direction);
            assert!((probe - &rec.probe).norm() < 1e-10);

            let fbit = if rec.incumbent_won { 1.0 } else { 0.0 };
            let ghat = factor.sqrt() * &rec.direction * d * fbit;
            assert!((ghat.norm() - rec.ghat_norm).abs() < 1e-10);
            // Dual local norm of ghat is d * F.
            let hinv_g = e.hess.clone().cholesky().unwrap().solve(&ghat);
            let dual = ghat.dot(&hinv_g).max(0.0).sqrt();
            assert!((dual - d * fbit).abs() < 1e-8, "dual norm {dual}");

            if let Some(next) = traj.steps.get(i + 1) {
                let theta = &e.grad - &ghat * cfg.eta;
                let grad_next = st.eval(&next.action).unwrap().grad;
                assert!(
                    (grad_next - &theta).norm() <= 1e-9 * theta.norm().max(1.0),
                    "mirror round trip failed at t={}",
                    rec.t
                );
            }
        }
    }

    #[test]
    fn dual_bregman_respects_divergence_bound() {
        let (inst, traj) = short_run(LinkFunction::Logistic, 2000, 5);
        let cfg = &traj.config;
        assert!(cfg.eta <= 0.5 / inst.dim() as f64);
        let bound = 4.0 * (inst.dim() as f64 * cfg.eta).powi(2);
        for rec in &traj.steps {
            assert!(
                rec.dual_bregman <= bound,
                "divergence {} exceeds bound {bound} at t={}",
                rec.dual_bregman,
                rec.t
            );
        }
    }

    #[test]
    fn every_point_stays_strictly_interior() {
        let (inst, traj) = short_run(LinkFunction::Logistic, 1000, 13);
        for rec in &traj.steps {
            assert!(inst.body().is_strictly_interior(&rec.action));
            assert!(inst.body().is_strictly_interior(&rec.probe));
            assert!(rec.newton_residual <= 1e-9);
        }
        assert!(inst.body().is_strictly_interior(&traj.a_final));
    }

    #[test]
    fn identical_seeds_reproduce_bit_for_bit() {
        let (_, t1) = short_run(LinkFunction::Logistic, 300, 99);
        let (_, t2) = short_run(LinkFunction::Logistic, 300, 99);
        assert_eq!(t1.steps, t2.steps);
        assert_eq!(t1.a_final, t2.a_final);
        let (_, t3) = short_run(LinkFunction::Logistic, 300, 100);
        assert_ne!(t1.steps, t3.steps);
    }

    #[test]
    fn averaged_action_examples() {
        let (_, traj) = short_run(LinkFunction::Logistic, 50, 2);
        let abar = traj.averaged_action().unwrap();
        let mut manual = DVector::zeros(2);
        for s in &traj.steps {
            manual += &s.action;
            manual += &s.probe;
        }
        manual /= 100.0;
        assert_eq!(abar, manual);
        assert!(abar.norm() < 1.0);

        // Constant sequence averages to itself.
        let mut traj2 = traj.clone();
        let p = vec2(0.2, 0.1);
        for s in &mut traj2.steps {
            s.action = p.clone();
            s.probe = p.clone();
        }
        assert!((traj2.averaged_action().unwrap() - &p).norm() < 1e-15);

        // Four points on a line with mean (0.3, 0).
        traj2.steps.truncate(2);
        traj2.steps[0].action = vec2(0.0, 0.0);
        traj2.steps[0].probe = vec2(0.2, 0.0);
        traj2.steps[1].action = vec2(0.4, 0.0);
        traj2.steps[1].probe = vec2(0.6, 0.0);
        let m = traj2.averaged_action().unwrap();
        assert_abs_diff_eq!(m[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn single_sample_estimator_norm_is_zero_or_scaled() {
        let inst = canonical(LinkFunction::Logistic);
        let mut st = RegularizedBarrierState::new(inst.barrier.clone(), 0.01, 0.0);
        let a = vec2(0.1, 0.0);
        st.push_action(&a);
        let e = st.eval(&a).unwrap();
        let factor = hessian_factor(&e.hess).unwrap();
        let eig = factor.sqrt().clone().symmetric_eigen();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let est = estimate_smoothed_gradient_mc(&inst, &st, &a, 1, &mut rng).unwrap();
            let norm = est.ghat_mean.norm();
            if norm > 0.0 {
                // Must equal d * |S u| for some unit u; bounded by the
                // extreme singular values of S.
                let d = 2.0;
                assert!(norm >= d * eig.eigenvalues.min() - 1e-12);
                assert!(norm <= d * eig.eigenvalues.max() + 1e-12);
            }
        }
    }

    #[test]
    fn gradient_estimator_is_unbiased_for_smoothed_gradient() {
        let inst = canonical(LinkFunction::Logistic);
        let mut st = RegularizedBarrierState::new(inst.barrier.clone(), 0.02, 0.01);
        let a = vec2(0.1, -0.05);
        st.push_action(&a);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let est = estimate_smoothed_gradient_mc(&inst, &st, &a, 200_000, &mut rng).unwrap();
        for j in 0..2 {
            let diff = (est.ghat_mean[j] - est.smoothed_grad_mean[j]).abs();
            let se = (est.ghat_se[j].powi(2) + est.smoothed_grad_se[j].powi(2)).sqrt();
            assert!(
                diff < 4.0 * se,
                "component {j}: diff {diff} vs 4se {}",
                4.0 * se
            );
        }
    }

    #[test]
    fn gradient_estimator_matches_linear_link_closed_form() {
        // With a linear link the smoothed-probability gradient is
        // Q (a_t - c) / 2 exactly (the ball average of the quadratic's
        // gradient at the center of the ellipsoid).
        let inst = canonical(LinkFunction::Linear);
        let mut st = RegularizedBarrierState::new(inst.barrier.clone(), 0.02, 0.0);
        let a = vec2(0.15, 0.1);
        st.push_action(&a);
        let closed = inst.cost.grad(&a) * 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let est = estimate_smoothed_gradient_mc(&inst, &st, &a, 400_000, &mut rng).unwrap();
        for j in 0..2 {
            let diff = (est.ghat_mean[j] - closed[j]).abs();
            assert!(
                diff < 4.0 * est.ghat_se[j],
                "component {j}: diff {diff} vs 4se {}",
                4.0 * est.ghat_se[j]
            );
        }
    }

    #[test]
    fn uniform_baseline_spans_the_set() {
        let inst = canonical(LinkFunction::Logistic);
        let cfg = derive_hyperparams(&inst, 1.0, 500).with_seed(3);
        let traj = run_uniform_baseline(&inst, &cfg);
        assert_eq!(traj.algorithm, Algorithm::UniformRandomPair);
        assert_eq!(traj.steps.len(), 500);
        let mut max_norm: f64 = 0.0;
        for s in &traj.steps {
            assert!(inst.body().contains(&s.action));
            assert!(inst.body().contains(&s.probe));
            max_norm = max_norm.max(s.action.norm());
        }
        assert!(max_norm > 0.8, "uniform draws should reach the boundary");
    }
}
