//! Alternating gradient descent over Tucker factors with group thresholding.

use super::design::DesignMatrices;
use super::objective::{balance_gradient, balance_penalty, evaluate_factors, FactorEval};
use crate::error::{Error, Result};
use crate::linalg::{haar_orthogonal, rng_from_seed};
use crate::scalar::Scalar;
use crate::tensor::{shrink_factors, GroupSupport, Tensor3, TuckerFactors};
use nalgebra::DMatrix;

/// Objective growth beyond this multiple of the initial value is divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Relative slack tolerated before an objective increase triggers step halving.
const BACKTRACK_SLACK: f64 = 1e-10;

const MAX_HALVINGS: usize = 60;

/// Group-sparsity step applied after each gradient update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold<T> {
    /// Keep the `s` lags with the largest slice norms.
    Hard(usize),
    /// Shrink every slice norm by `lambda`.
    Soft(T),
    None,
}

/// Step size for all three blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize<T> {
    /// `eta = scale / max(b^4 lambda_max(X X'/T1), a b^2)`.
    Auto(T),
    Fixed(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig<T> {
    pub t0: usize,
    pub r1: usize,
    pub r2: usize,
    pub threshold: Threshold<T>,
    pub reg_a: T,
    pub reg_b: T,
    pub step: StepSize<T>,
    pub max_iter: usize,
    /// Iterations run before thresholding starts.
    pub warm_start_iters: usize,
    /// When set, the warm start also lasts until the unthresholded relative
    /// change falls below this value.
    pub warm_start_tol: Option<T>,
    /// Stop once `|A^{k+1} - A^k|_F / |A^k|_F` falls below this.
    pub tol: T,
    /// Halve the step when the objective increases on an iteration whose
    /// support did not move.
    pub backtrack: bool,
    /// Seed of the orthonormal factor initialization.
    pub seed: u64,
}

pub const DEFAULT_STEP_SCALE: f64 = 1.0;

impl<T: Scalar> FitConfig<T> {
    /// Hard-thresholding configuration with the default tuning.
    pub fn new(t0: usize, r1: usize, r2: usize, s: usize) -> Self {
        FitConfig {
            t0,
            r1,
            r2,
            threshold: Threshold::Hard(s),
            reg_a: T::one(),
            reg_b: T::one(),
            step: StepSize::Auto(T::lit(DEFAULT_STEP_SCALE)),
            max_iter: 2000,
            warm_start_iters: 10,
            warm_start_tol: None,
            tol: T::lit(1e-6),
            backtrack: true,
            seed: 0,
        }
    }

    /// Sparsity level; `t0` unless hard thresholding is selected.
    pub fn s(&self) -> usize {
        match self.threshold {
            Threshold::Hard(s) => s,
            _ => self.t0,
        }
    }

    pub fn with_threshold(mut self, threshold: Threshold<T>) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_ranks(mut self, r1: usize, r2: usize) -> Self {
        self.r1 = r1;
        self.r2 = r2;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.t0 == 0 {
            return Err(Error::Parameter("t0 must be at least 1".into()));
        }
        if self.r1 == 0 || self.r1 > n || self.r2 == 0 || self.r2 > n {
            return Err(Error::Parameter(format!(
                "ranks ({}, {}) must lie in 1..={n}",
                self.r1, self.r2
            )));
        }
        match self.threshold {
            Threshold::Hard(s) if s == 0 || s > self.t0 => {
                return Err(Error::Parameter(format!(
                    "sparsity level {s} must lie in 1..={}",
                    self.t0
                )))
            }
            Threshold::Soft(l) if !(l >= T::zero()) => {
                return Err(Error::Parameter(format!("soft threshold {l} must be nonnegative")))
            }
            _ => {}
        }
        let step_ok = match self.step {
            StepSize::Auto(s) | StepSize::Fixed(s) => s > T::zero(),
        };
        if !step_ok {
            return Err(Error::Parameter("step size must be positive".into()));
        }
        if self.warm_start_tol.is_some_and(|t| !(t > T::zero())) {
            return Err(Error::Parameter("warm-start tolerance must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be at least 1".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::Parameter("tolerance must be positive".into()));
        }
        if !(self.reg_a >= T::zero()) || !(self.reg_b > T::zero()) {
            return Err(Error::Parameter("need reg_a >= 0 and reg_b > 0".into()));
        }
        Ok(())
    }

    /// Resolves the step size for a design.
    pub fn step_size(&self, d: &DesignMatrices<T>) -> Result<T> {
        match self.step {
            StepSize::Fixed(eta) => Ok(eta),
            StepSize::Auto(scale) => {
                let top = d.gram_top_eigenvalue();
                if !(top > T::zero()) {
                    return Err(Error::Validation("design matrix X is identically zero".into()));
                }
                let b2 = self.reg_b * self.reg_b;
                let curvature = (top * b2 * b2).max(self.reg_a * b2);
                Ok(scale / curvature)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub factors: TuckerFactors<T>,
    pub support: GroupSupport,
    /// Penalized objective after each iteration.
    pub objective_trace: Vec<T>,
    /// Norm of the full factor gradient after each iteration.
    pub grad_norm_trace: Vec<T>,
    pub converged: bool,
    pub iterations_used: usize,
    /// Step size in effect when the fit stopped.
    pub step_size: T,
}

impl<T: Scalar> FitResult<T> {
    pub fn tensor(&self) -> Tensor3<T> {
        self.factors.reconstruct()
    }
}

/// Zero core and `U_i = b Q_i[:, :r_i]` for seeded Haar-orthogonal `Q_i`.
pub fn init_factors<T: Scalar>(
    n: usize,
    r1: usize,
    r2: usize,
    t0: usize,
    reg_b: T,
    seed: u64,
) -> Result<TuckerFactors<T>> {
    if n == 0 || t0 == 0 || r1 == 0 || r2 == 0 {
        return Err(Error::Parameter("dimensions and ranks must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let q1: DMatrix<T> = haar_orthogonal(n, &mut rng);
    let q2: DMatrix<T> = haar_orthogonal(n, &mut rng);
    if r1 > n || r2 > n {
        return Err(Error::Parameter(format!("ranks ({r1}, {r2}) exceed dimension {n}")));
    }
    TuckerFactors::new(
        Tensor3::zeros(r1, r2, t0),
        q1.columns(0, r1) * reg_b,
        q2.columns(0, r2) * reg_b,
    )
}

/// Runs the alternating gradient descent from [`init_factors`].
pub fn fit_agd<T: Scalar>(d: &DesignMatrices<T>, cfg: &FitConfig<T>) -> Result<FitResult<T>> {
    cfg.validate(d.n())?;
    let init = init_factors(d.n(), cfg.r1, cfg.r2, cfg.t0, cfg.reg_b, cfg.seed)?;
    fit_agd_from(d, cfg, init)
}

#[derive(Debug, Clone)]
struct State<T> {
    factors: TuckerFactors<T>,
    tensor: Tensor3<T>,
    eval: FactorEval<T>,
    objective: T,
}

impl<T: Scalar> State<T> {
    fn new(factors: TuckerFactors<T>, d: &DesignMatrices<T>, cfg: &FitConfig<T>) -> Self {
        let eval = evaluate_factors(&factors, d);
        let objective = eval.loss + balance_penalty(&factors, cfg.reg_a, cfg.reg_b);
        let tensor = factors.reconstruct();
        State {
            factors,
            tensor,
            eval,
            objective,
        }
    }

    fn grad_norm(&self, cfg: &FitConfig<T>) -> T {
        let g = &self.eval.grads;
        let gu1 = &g.u1 + balance_gradient(&self.factors.u1, cfg.reg_a, cfg.reg_b);
        let gu2 = &g.u2 + balance_gradient(&self.factors.u2, cfg.reg_a, cfg.reg_b);
        (gu1.norm_squared() + gu2.norm_squared() + g.core.norm_squared()).sqrt()
    }
}

/// One gradient step from `state` followed by the thresholding step.
/// Returns the new factors and the support chosen by the thresholding (if
/// it ran).
fn step<T: Scalar>(
    state: &State<T>,
    cfg: &FitConfig<T>,
    eta: T,
    threshold_active: bool,
) -> Result<(TuckerFactors<T>, Option<GroupSupport>)> {
    let f = &state.factors;
    let g = &state.eval.grads;
    let u1 = &f.u1 - (&g.u1 + balance_gradient(&f.u1, cfg.reg_a, cfg.reg_b)) * eta;
    let u2 = &f.u2 - (&g.u2 + balance_gradient(&f.u2, cfg.reg_a, cfg.reg_b)) * eta;
    let core_data: Vec<T> = f
        .core
        .data()
        .iter()
        .zip(g.core.data())
        .map(|(&c, &gc)| c - eta * gc)
        .collect();
    let core = Tensor3::from_vec(f.core.dims(), core_data).map_err(|_| Error::Divergence {
        iteration: 0,
        reason: "non-finite core update".into(),
    })?;
    if !u1.iter().chain(u2.iter()).all(|v| v.is_finite()) {
        return Err(Error::Divergence {
            iteration: 0,
            reason: "non-finite factor update".into(),
        });
    }
    let mut next = TuckerFactors { core, u1, u2 };
    if !threshold_active {
        return Ok((next, None));
    }
    match cfg.threshold {
        Threshold::None => Ok((next, None)),
        Threshold::Hard(s) => {
            // slices of the reconstructed tensor vanish exactly when the
            // matching core slices do
            let (_, support) = next.reconstruct().hard_threshold(s)?;
            let keep: Vec<T> = (1..=cfg.t0)
                .map(|lag| if support.contains(lag) { T::one() } else { T::zero() })
                .collect();
            next.core.scale_slices(&keep);
            Ok((next, Some(support)))
        }
        Threshold::Soft(lambda) => {
            let norms = next.reconstruct().group_norms();
            let shrink = shrink_factors(&norms, lambda);
            next.core.scale_slices(&shrink);
            let support = next.core.support();
            Ok((next, Some(support)))
        }
    }
}

/// Solver state at the end of the unthresholded warm-start phase.
///
/// The phase does not depend on the thresholding rule, so one warm start can
/// be continued under several sparsity levels or penalties with
/// [`fit_agd_after_warm_start`]; each continuation is identical to the
/// corresponding [`fit_agd_from`] run.
#[derive(Debug, Clone)]
pub struct WarmStart<T> {
    state: State<T>,
    eta: T,
    initial_objective: T,
    objective_trace: Vec<T>,
    grad_norm_trace: Vec<T>,
    dims: (usize, usize, usize, usize),
}

impl<T: Scalar> WarmStart<T> {
    pub fn factors(&self) -> &TuckerFactors<T> {
        &self.state.factors
    }

    pub fn iterations(&self) -> usize {
        self.objective_trace.len()
    }
}

struct Runner<'a, T: Scalar> {
    d: &'a DesignMatrices<T>,
    cfg: &'a FitConfig<T>,
    warm: WarmStart<T>,
    last_threshold_support: Option<GroupSupport>,
    support: GroupSupport,
}

impl<T: Scalar> Runner<'_, T> {
    /// Advances one iteration and returns the relative change of the tensor.
    fn iterate(&mut self, threshold_active: bool) -> Result<T> {
        let cfg = self.cfg;
        let w = &mut self.warm;
        let iteration = w.objective_trace.len() + 1;
        let slack = T::lit(BACKTRACK_SLACK);
        let limit = T::lit(DIVERGENCE_FACTOR);
        let mut halvings = 0;
        let (next, chosen) = loop {
            let (factors, chosen) = step(&w.state, cfg, w.eta, threshold_active).map_err(|e| match e {
                Error::Divergence { reason, .. } => Error::Divergence { iteration, reason },
                other => other,
            })?;
            let next = State::new(factors, self.d, cfg);
            if !next.objective.is_finite() {
                return Err(Error::Divergence {
                    iteration,
                    reason: "objective is not finite".into(),
                });
            }
            if w.initial_objective > T::zero() && next.objective > limit * w.initial_objective {
                return Err(Error::Divergence {
                    iteration,
                    reason: format!(
                        "objective {} exceeds {DIVERGENCE_FACTOR:e} x initial {}",
                        next.objective, w.initial_objective
                    ),
                });
            }
            let smooth_step = match (&chosen, &self.last_threshold_support) {
                (None, _) => true,
                (Some(now), Some(before)) => matches!(cfg.threshold, Threshold::Hard(_)) && now == before,
                (Some(_), None) => false,
            };
            let current = w.state.objective;
            let increased = next.objective > current + slack * current.abs().max(T::eps());
            if cfg.backtrack && smooth_step && increased {
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return Err(Error::Divergence {
                        iteration,
                        reason: "step size underflow while backtracking".into(),
                    });
                }
                w.eta *= T::lit(0.5);
                continue;
            }
            break (next, chosen);
        };

        let change = next.tensor.sub(&w.state.tensor)?.frobenius_norm();
        let scale = next.tensor.frobenius_norm().max(w.state.tensor.frobenius_norm());
        let rel_change = if scale > T::zero() { change / scale } else { T::zero() };

        w.objective_trace.push(next.objective);
        w.grad_norm_trace.push(next.grad_norm(cfg));
        self.support = match &chosen {
            Some(s) => s.clone(),
            None => next.tensor.support(),
        };
        if chosen.is_some() {
            self.last_threshold_support = chosen;
        }
        w.state = next;
        Ok(rel_change)
    }
}

fn check_design<T: Scalar>(d: &DesignMatrices<T>, cfg: &FitConfig<T>) -> Result<()> {
    cfg.validate(d.n())?;
    if cfg.t0 != d.t0() {
        return Err(Error::Parameter(format!(
            "config t0 = {} but design t0 = {}",
            cfg.t0,
            d.t0()
        )));
    }
    Ok(())
}

/// Runs the unthresholded warm-start iterations from `init`: at least
/// `warm_start_iters` of them and, when `warm_start_tol` is set, until the
/// relative change falls below it or half of `max_iter` is spent. The last
/// of the `max_iter` iterations always thresholds. Empty when no
/// thresholding is configured.
pub fn warm_start<T: Scalar>(
    d: &DesignMatrices<T>,
    cfg: &FitConfig<T>,
    init: TuckerFactors<T>,
) -> Result<WarmStart<T>> {
    check_design(d, cfg)?;
    if init.n() != d.n() || init.t0() != d.t0() || init.ranks() != (cfg.r1, cfg.r2) {
        return Err(Error::shape(
            "warm_start",
            format!("N={}, ranks=({}, {}), T0={}", d.n(), cfg.r1, cfg.r2, d.t0()),
            format!("N={}, ranks={:?}, T0={}", init.n(), init.ranks(), init.t0()),
        ));
    }
    let eta = cfg.step_size(d)?;
    let state = State::new(init, d, cfg);
    let mut runner = Runner {
        d,
        cfg,
        warm: WarmStart {
            initial_objective: state.objective,
            state,
            eta,
            objective_trace: Vec::with_capacity(cfg.max_iter),
            grad_norm_trace: Vec::with_capacity(cfg.max_iter),
            dims: (d.n(), cfg.r1, cfg.r2, cfg.t0),
        },
        last_threshold_support: None,
        support: GroupSupport::all(cfg.t0),
    };
    if matches!(cfg.threshold, Threshold::None) {
        return Ok(runner.warm);
    }
    // leave room for thresholded iterations: the tolerance may extend the
    // phase to half the budget, and at least the last iteration thresholds
    let hard_cap = cfg.max_iter - 1;
    let tol_cap = (cfg.max_iter / 2).max(cfg.warm_start_iters).min(hard_cap);
    let mut settled = false;
    loop {
        let k = runner.warm.iterations();
        if k >= hard_cap
            || (k >= cfg.warm_start_iters && (cfg.warm_start_tol.is_none() || settled || k >= tol_cap))
        {
            break;
        }
        let rel = runner.iterate(false)?;
        settled = cfg.warm_start_tol.is_some_and(|tol| rel < tol);
    }
    Ok(runner.warm)
}

/// Continues a warm start with thresholding until convergence or
/// `max_iter` total iterations. `cfg` may differ from the configuration of
/// the warm start only in its thresholding rule.
pub fn fit_agd_after_warm_start<T: Scalar>(
    d: &DesignMatrices<T>,
    cfg: &FitConfig<T>,
    warm: &WarmStart<T>,
) -> Result<FitResult<T>> {
    check_design(d, cfg)?;
    if warm.dims != (d.n(), cfg.r1, cfg.r2, cfg.t0) {
        return Err(Error::shape(
            "fit_agd_after_warm_start",
            format!("{:?}", (d.n(), cfg.r1, cfg.r2, cfg.t0)),
            format!("{:?}", warm.dims),
        ));
    }
    let support = warm.state.tensor.support();
    let mut runner = Runner {
        d,
        cfg,
        warm: warm.clone(),
        last_threshold_support: None,
        support,
    };
    let active = !matches!(cfg.threshold, Threshold::None);
    let mut converged = false;
    while runner.warm.iterations() < cfg.max_iter {
        let rel = runner.iterate(active)?;
        if runner.warm.iterations() >= cfg.warm_start_iters && rel < cfg.tol {
            converged = true;
            break;
        }
    }
    let w = runner.warm;
    Ok(FitResult {
        factors: w.state.factors,
        support: runner.support,
        iterations_used: w.objective_trace.len(),
        objective_trace: w.objective_trace,
        grad_norm_trace: w.grad_norm_trace,
        converged,
        step_size: w.eta,
    })
}

/// Runs the alternating gradient descent from given factors.
///
/// Each iteration takes simultaneous gradient steps on `U1`, `U2` and the
/// core at the current iterate, reconstructs the candidate tensor, and
/// applies the configured thresholding to it (after the warm start). The
/// kept/shrunk slices are carried back into the core, so the Tucker ranks
/// never exceed `(r1, r2)`.
pub fn fit_agd_from<T: Scalar>(
    d: &DesignMatrices<T>,
    cfg: &FitConfig<T>,
    init: TuckerFactors<T>,
) -> Result<FitResult<T>> {
    let warm = warm_start(d, cfg, init)?;
    fit_agd_after_warm_start(d, cfg, &warm)
}

/// Soft-thresholded variant: an approximate stationary point of the
/// rank-constrained group-lasso problem, returned as the fitted tensor.
pub fn fit_group_lasso_reference<T: Scalar>(
    d: &DesignMatrices<T>,
    lambda: T,
    r1: usize,
    r2: usize,
    base: &FitConfig<T>,
) -> Result<Tensor3<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let cfg = base
        .clone()
        .with_ranks(r1, r2)
        .with_threshold(Threshold::Soft(lambda));
    Ok(fit_agd(d, &cfg)?.tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::objective::penalized_loss;
    use crate::linalg::{numerical_rank, rng_from_seed, standard_normal_matrix};
    use crate::tensor::Mode;

    /// Noisy VAR panel with a rank-(2, 2) coefficient tensor active at lags
    /// 1 and 3.
    fn instance(n: usize, t0: usize, t_len: usize, noise: f64, seed: u64) -> (DesignMatrices<f64>, Tensor3<f64>) {
        let mut rng = rng_from_seed(seed);
        let q = haar_orthogonal::<f64, _>(n, &mut rng);
        let u = q.columns(0, 2).into_owned();
        let core = Tensor3::from_fn((2, 2, t0), |i, j, k| match (k, i == j) {
            (0, true) => 0.5,
            (2, true) => -0.3,
            _ => 0.0,
        });
        let f = TuckerFactors::new(core, u.clone(), u).unwrap();
        let a = f.reconstruct();
        let series = standard_normal_matrix::<f64, _>(n, t_len, &mut rng);
        let d = DesignMatrices::from_series(series, t0).unwrap();
        let y = a.mode1_view() * d.x() + standard_normal_matrix::<f64, _>(n, d.t1(), &mut rng) * noise;
        (d.with_response(y).unwrap(), a)
    }

    #[test]
    fn init_is_zero_core_and_balanced() {
        let f = init_factors::<f64>(7, 3, 2, 4, 1.5, 9).unwrap();
        assert_eq!(f.reconstruct().norm_squared(), 0.0);
        for (u, r) in [(&f.u1, 3), (&f.u2, 2)] {
            let g = u.tr_mul(u) - DMatrix::identity(r, r) * 2.25;
            assert!(g.amax() < 1e-12);
        }
        assert_eq!(f, init_factors::<f64>(7, 3, 2, 4, 1.5, 9).unwrap());
        assert_ne!(f, init_factors::<f64>(7, 3, 2, 4, 1.5, 10).unwrap());
    }

    #[test]
    fn config_validation() {
        let ok = FitConfig::<f64>::new(4, 2, 2, 2);
        assert!(ok.validate(5).is_ok());
        assert!(FitConfig::<f64>::new(0, 2, 2, 1).validate(5).is_err());
        assert!(FitConfig::<f64>::new(4, 6, 2, 2).validate(5).is_err());
        assert!(FitConfig::<f64>::new(4, 2, 0, 2).validate(5).is_err());
        assert!(FitConfig::<f64>::new(4, 2, 2, 5).validate(5).is_err());
        assert!(FitConfig::<f64>::new(4, 2, 2, 0).validate(5).is_err());
        assert!(ok.clone().with_threshold(Threshold::Soft(-1.0)).validate(5).is_err());
        let mut c = ok.clone();
        c.reg_b = 0.0;
        assert!(c.validate(5).is_err());
        let mut c = ok.clone();
        c.warm_start_tol = Some(0.0);
        assert!(c.validate(5).is_err());
        let mut c = ok.clone();
        c.max_iter = 0;
        assert!(c.validate(5).is_err());
        let mut c = ok;
        c.step = StepSize::Fixed(-0.1);
        assert!(c.validate(5).is_err());
    }

    #[test]
    fn design_and_config_must_agree() {
        let (d, _) = instance(5, 4, 100, 0.1, 1);
        assert!(fit_agd(&d, &FitConfig::new(3, 2, 2, 2)).is_err());
        let init = init_factors::<f64>(5, 1, 1, 4, 1.0, 0).unwrap();
        assert!(fit_agd_from(&d, &FitConfig::new(4, 2, 2, 2), init).is_err());
    }

    #[test]
    fn recovers_low_noise_instance() {
        let (d, truth) = instance(6, 5, 400, 1e-3, 2);
        let mut cfg = FitConfig::new(5, 2, 2, 2);
        cfg.max_iter = 5000;
        cfg.tol = 1e-9;
        let fit = fit_agd(&d, &cfg).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.support.as_slice(), &[1, 3]);
        let err = fit.tensor().sub(&truth).unwrap().frobenius_norm();
        assert!(err < 1e-2, "error {err}");
    }

    #[test]
    fn iterates_respect_rank_and_sparsity() {
        let (d, _) = instance(6, 5, 200, 0.3, 3);
        let mut cfg = FitConfig::new(5, 2, 1, 2);
        for max_iter in [5, 15, 60] {
            cfg.max_iter = max_iter;
            let fit = fit_agd(&d, &cfg).unwrap();
            let a = fit.tensor();
            assert!(a.active_slices() <= 2);
            assert!(numerical_rank(&a.matricize(Mode::One), 1e-9) <= 2);
            assert!(numerical_rank(&a.matricize(Mode::Two), 1e-9) <= 1);
        }
    }

    #[test]
    fn short_budgets_still_threshold() {
        let (d, _) = instance(6, 5, 200, 0.3, 14);
        let mut cfg = FitConfig::new(5, 2, 2, 2);
        cfg.warm_start_tol = Some(1e-300);
        for max_iter in [1, 4, 11, 40] {
            cfg.max_iter = max_iter;
            let fit = fit_agd(&d, &cfg).unwrap();
            assert_eq!(fit.iterations_used, max_iter);
            assert!(fit.tensor().active_slices() <= 2, "max_iter {max_iter}");
        }
        let init = init_factors(6, 2, 2, 5, 1.0, 0).unwrap();
        assert_eq!(warm_start(&d, &cfg, init).unwrap().iterations(), 20);
    }

    #[test]
    fn unthresholded_objective_is_monotone() {
        let (d, _) = instance(5, 4, 150, 0.5, 4);
        let mut cfg = FitConfig::new(4, 2, 2, 1).with_threshold(Threshold::None);
        cfg.max_iter = 200;
        let fit = fit_agd(&d, &cfg).unwrap();
        let init = init_factors::<f64>(5, 2, 2, 4, 1.0, 0).unwrap();
        let mut prev = penalized_loss(&init, &d, 1.0, 1.0).unwrap();
        for &v in &fit.objective_trace {
            assert!(v <= prev + 1e-10 * prev.abs());
            prev = v;
        }
    }

    #[test]
    fn support_is_stable_after_convergence() {
        let (d, _) = instance(6, 5, 300, 0.2, 5);
        let mut cfg = FitConfig::new(5, 2, 2, 2);
        cfg.max_iter = 4000;
        let fit = fit_agd(&d, &cfg).unwrap();
        assert!(fit.converged);
        let mut more = cfg.clone();
        more.max_iter = fit.iterations_used + 1;
        more.tol = 1e-300;
        let next = fit_agd(&d, &more).unwrap();
        assert_eq!(next.support, fit.support);
    }

    #[test]
    fn factors_end_balanced() {
        let (d, _) = instance(6, 5, 300, 0.2, 6);
        let mut cfg = FitConfig::new(5, 2, 2, 2);
        cfg.max_iter = 5000;
        cfg.tol = 1e-10;
        let fit = fit_agd(&d, &cfg).unwrap();
        for u in [&fit.factors.u1, &fit.factors.u2] {
            let dev = (u.tr_mul(u) - DMatrix::identity(2, 2)).norm();
            assert!(dev < 1e-3, "balance deviation {dev}");
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (d, _) = instance(5, 4, 120, 0.3, 7);
        let cfg = FitConfig::new(4, 2, 2, 2).with_seed(3);
        let a = fit_agd(&d, &cfg).unwrap();
        let b = fit_agd(&d, &cfg).unwrap();
        assert_eq!(a.factors, b.factors);
        assert_eq!(a.objective_trace, b.objective_trace);
    }

    #[test]
    fn shared_warm_start_is_identical_to_direct_fit() {
        let (d, _) = instance(5, 6, 200, 0.3, 8);
        let mut base = FitConfig::new(6, 2, 2, 1);
        base.warm_start_tol = Some(1e-3);
        let init = init_factors(5, 2, 2, 6, 1.0, 0).unwrap();
        let warm = warm_start(&d, &base, init).unwrap();
        assert!(warm.iterations() >= base.warm_start_iters);
        for threshold in [Threshold::Hard(1), Threshold::Hard(3), Threshold::Soft(0.05)] {
            let cfg = base.clone().with_threshold(threshold);
            let direct = fit_agd(&d, &cfg).unwrap();
            let shared = fit_agd_after_warm_start(&d, &cfg, &warm).unwrap();
            assert_eq!(direct.factors, shared.factors);
            assert_eq!(direct.objective_trace, shared.objective_trace);
            assert_eq!(direct.support, shared.support);
        }
        let other = FitConfig::new(6, 1, 2, 1);
        assert!(fit_agd_after_warm_start(&d, &other, &warm).is_err());
    }

    #[test]
    fn warm_start_tolerance_delays_thresholding() {
        let (d, _) = instance(5, 6, 200, 0.3, 9);
        let mut cfg = FitConfig::new(6, 2, 2, 2);
        let init = init_factors(5, 2, 2, 6, 1.0, 0).unwrap();
        let fixed = warm_start(&d, &cfg, init.clone()).unwrap();
        assert_eq!(fixed.iterations(), cfg.warm_start_iters);
        cfg.warm_start_tol = Some(1e-4);
        let adaptive = warm_start(&d, &cfg, init).unwrap();
        assert!(adaptive.iterations() > cfg.warm_start_iters);
    }

    #[test]
    fn huge_lambda_zeroes_tensor() {
        let (d, _) = instance(5, 4, 120, 0.3, 10);
        let a = fit_group_lasso_reference(&d, 1e6, 2, 2, &FitConfig::new(4, 2, 2, 1)).unwrap();
        assert_eq!(a.norm_squared(), 0.0);
        assert!(fit_group_lasso_reference(&d, 0.0, 2, 2, &FitConfig::new(4, 2, 2, 1)).is_err());
    }

    #[test]
    fn tiny_lambda_matches_unthresholded_fit() {
        let (d, _) = instance(5, 4, 150, 0.3, 11);
        let mut base = FitConfig::new(4, 2, 2, 1);
        base.max_iter = 3000;
        base.tol = 1e-10;
        let soft = fit_group_lasso_reference(&d, 1e-10, 2, 2, &base).unwrap();
        let none = fit_agd(&d, &base.clone().with_threshold(Threshold::None)).unwrap().tensor();
        let diff = soft.sub(&none).unwrap().frobenius_norm();
        assert!(diff < 1e-6, "difference {diff}");
    }

    #[test]
    fn oversized_fixed_step_diverges() {
        let (d, _) = instance(5, 4, 120, 0.3, 12);
        let mut cfg = FitConfig::new(4, 2, 2, 2);
        cfg.step = StepSize::Fixed(1e3);
        cfg.backtrack = false;
        assert!(matches!(fit_agd(&d, &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn zero_design_has_no_automatic_step() {
        let d = DesignMatrices::from_series(DMatrix::<f64>::zeros(3, 30), 2).unwrap();
        assert!(fit_agd(&d, &FitConfig::new(2, 1, 1, 1)).is_err());
    }

    #[test]
    fn single_precision_fit() {
        let (d, _) = instance(5, 4, 200, 0.1, 13);
        let d32 = DesignMatrices::from_series(d.series().map(|v| v as f32), 4).unwrap();
        let y32 = d.y().map(|v| v as f32);
        let d32 = d32.with_response(y32).unwrap();
        let mut cfg = FitConfig::<f32>::new(4, 2, 2, 2);
        cfg.tol = 1e-5;
        let fit = fit_agd(&d32, &cfg).unwrap();
        assert_eq!(fit.support.as_slice(), &[1, 3]);
    }
}
