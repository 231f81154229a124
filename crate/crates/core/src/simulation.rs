//! Monte-Carlo experiments on two reference processes: a VARMA(1,1) with a
//! weakly group-sparse VAR(∞) form and a seasonal VAR(9) that is exactly
//! group-sparse.

use crate::error::{Error, Result};
use crate::estimator::{build_design, fit_agd_after_warm_start, init_factors, warm_start, FitConfig, Threshold, WarmStart};
use crate::linalg::{derive_seed, haar_orthogonal, rng_from_seed};
use crate::process::{simulate, truncation_error, GlpModel, DEFAULT_BURN_IN};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// `y_t = -0.5 P y_{t-1} + e_t - 0.7 P e_{t-1}`.
    Varma411,
    /// `y_t = sum_{j in {1,4,5,8,9}} c_j 0.7^j P y_{t-j} + e_t`.
    SeasonalVar411,
}

impl std::str::FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "varma" | "varma_411" => Ok(DgpKind::Varma411),
            "seasonal" | "seasonal_var_411" => Ok(DgpKind::SeasonalVar411),
            other => Err(Error::Parameter(format!(
                "unknown process '{other}' (expected varma_411 or seasonal_var_411)"
            ))),
        }
    }
}

/// Process kind, dimension, rank of `P = B J B'` and the seed of `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    pub r: usize,
    pub seed: u64,
}

const SEASONAL_LAGS: [(usize, f64); 5] = [(1, 1.0), (4, 2.0), (5, -2.0), (8, -1.0), (9, 1.0)];

/// Projection `B J B'` onto the first `r` columns of a seeded Haar `B`.
pub fn factor_projection<T: Scalar>(n: usize, r: usize, seed: u64) -> DMatrix<T> {
    let b: DMatrix<T> = haar_orthogonal(n, &mut rng_from_seed(seed));
    let br = b.columns(0, r);
    &br * br.transpose()
}

pub fn make_dgp<T: Scalar>(spec: &DgpSpec) -> Result<GlpModel<T>> {
    if spec.n == 0 || spec.r == 0 || spec.r > spec.n {
        return Err(Error::Parameter(format!(
            "need 1 <= r <= n, got n = {}, r = {}",
            spec.n, spec.r
        )));
    }
    let p: DMatrix<T> = factor_projection(spec.n, spec.r, spec.seed);
    let noise = DMatrix::identity(spec.n, spec.n);
    match spec.kind {
        DgpKind::Varma411 => GlpModel::new(vec![&p * T::lit(-0.5)], vec![&p * T::lit(-0.7)], noise),
        DgpKind::SeasonalVar411 => {
            let mut ar = vec![DMatrix::zeros(spec.n, spec.n); 9];
            for (lag, c) in SEASONAL_LAGS {
                ar[lag - 1] = &p * T::lit(c * 0.7f64.powi(lag as i32));
            }
            GlpModel::new(ar, vec![], noise)
        }
    }
}

/// First `t0` VAR(∞) coefficients stacked as an `N x N x t0` tensor.
pub fn true_tensor<T: Scalar>(model: &GlpModel<T>, t0: usize) -> Result<Tensor3<T>> {
    Tensor3::from_slices(&model.var_coefficients(t0))
}

/// Three-way split of the squared parameter error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorDecomposition {
    pub estimation: f64,
    pub approximation: f64,
    pub truncation: f64,
    pub parameter: f64,
}

impl ErrorDecomposition {
    /// `S` is the fitted support: the lags with a nonzero estimated slice.
    pub fn new<T: Scalar>(fitted: &Tensor3<T>, truth: &Tensor3<T>, truncation: T) -> Result<Self> {
        if fitted.dims() != truth.dims() {
            return Err(Error::shape(
                "ErrorDecomposition::new",
                format!("{:?}", truth.dims()),
                format!("{:?}", fitted.dims()),
            ));
        }
        let (n1, n2, t0) = truth.dims();
        let len = n1 * n2;
        let mut estimation = 0.0;
        let mut approximation = 0.0;
        for k in 0..t0 {
            let a = &fitted.data()[k * len..(k + 1) * len];
            let b = &truth.data()[k * len..(k + 1) * len];
            if a.iter().any(|v| *v != T::zero()) {
                estimation += a
                    .iter()
                    .zip(b)
                    .map(|(&x, &y)| (x - y).as_f64().powi(2))
                    .sum::<f64>();
            } else {
                approximation += b.iter().map(|v| v.as_f64().powi(2)).sum::<f64>();
            }
        }
        Ok(ErrorDecomposition {
            estimation,
            approximation,
            truncation: truncation.as_f64(),
            parameter: estimation + approximation,
        })
    }
}

/// `beta = s (r N + ln t0) / (T - t0)`.
pub fn beta_rate(s: usize, r: usize, n: usize, t_len: usize, t0: usize) -> f64 {
    s as f64 * (r as f64 * n as f64 + (t0 as f64).ln()) / (t_len - t0) as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Interquartile range with linear interpolation between order statistics.
pub fn iqr(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    q(0.75) - q(0.25)
}

/// One simulated replication: a fresh `B`, a fresh path.
struct Replication {
    truth: Tensor3<f64>,
    truncation: f64,
    design: crate::estimator::DesignMatrices<f64>,
    fit_seed: u64,
}

fn replicate(spec: &DgpSpec, t_len: usize, t0: usize, rep: usize) -> Result<Replication> {
    let rep_seed = derive_seed(spec.seed, rep as u64);
    let dgp = DgpSpec {
        seed: derive_seed(rep_seed, 0),
        ..*spec
    };
    let model = make_dgp::<f64>(&dgp)?;
    let data = simulate(&model, t_len, DEFAULT_BURN_IN, derive_seed(rep_seed, 1))?;
    let design = build_design(&data, t0)?;
    let truth = true_tensor(&model, t0)?;
    let truncation = truncation_error(&model, t0, None);
    Ok(Replication {
        truth,
        truncation,
        design,
        fit_seed: derive_seed(rep_seed, 2),
    })
}

/// Unthresholded warm start for `cfg` on one replication; `Ok(None)` when it
/// diverged. Shared by all fits that differ only in their thresholding.
fn warm_for(rep: &Replication, cfg: &FitConfig<f64>) -> Result<Option<WarmStart<f64>>> {
    let cfg = cfg.clone().with_seed(rep.fit_seed);
    cfg.validate(rep.design.n())?;
    let init = init_factors(rep.design.n(), cfg.r1, cfg.r2, cfg.t0, cfg.reg_b, cfg.seed)?;
    match warm_start(&rep.design, &cfg, init) {
        Ok(w) => Ok(Some(w)),
        Err(Error::Divergence { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Continues a shared warm start under `cfg`; `Ok(None)` when either phase
/// diverged.
fn fit_from_warm(
    rep: &Replication,
    cfg: &FitConfig<f64>,
    warm: Option<&WarmStart<f64>>,
) -> Result<Option<(ErrorDecomposition, usize)>> {
    let Some(warm) = warm else { return Ok(None) };
    let cfg = cfg.clone().with_seed(rep.fit_seed);
    match fit_agd_after_warm_start(&rep.design, &cfg, warm) {
        Ok(fit) => {
            let a = fit.tensor();
            let dec = ErrorDecomposition::new(&a, &rep.truth, rep.truncation)?;
            Ok(Some((dec, a.active_slices())))
        }
        Err(Error::Divergence { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Fits one configuration; `Ok(None)` when the fit diverged.
fn fit_one(rep: &Replication, cfg: &FitConfig<f64>) -> Result<Option<(ErrorDecomposition, usize)>> {
    let warm = warm_for(rep, cfg)?;
    fit_from_warm(rep, cfg, warm.as_ref())
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::Parameter("at least one replication is required".into()));
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// One fit in a sparsity sweep. Error columns are empty for diverged fits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityRow {
    pub rep: usize,
    pub s: usize,
    pub diverged: bool,
    pub estimation: Option<f64>,
    pub approximation: Option<f64>,
    pub truncation: Option<f64>,
    pub parameter: Option<f64>,
    pub fitted_sparsity: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsitySummary {
    pub s: usize,
    pub fits: usize,
    pub diverged: usize,
    pub estimation: Option<f64>,
    pub approximation: Option<f64>,
    pub truncation: Option<f64>,
    pub parameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityReport {
    pub spec: DgpSpec,
    pub t_len: usize,
    pub t0: usize,
    pub reps: usize,
    pub rows: Vec<SparsityRow>,
    pub summary: Vec<SparsitySummary>,
}

impl SparsityReport {
    /// `s` with the smallest mean parameter error.
    pub fn best_s(&self) -> Option<usize> {
        self.summary
            .iter()
            .filter_map(|r| r.parameter.map(|p| (r.s, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(s, _)| s)
    }
}

/// Hard-thresholded fits for every `s` in `s_grid` on `reps` simulated paths,
/// with the ranks of `base_cfg`.
pub fn run_error_vs_sparsity(
    spec: &DgpSpec,
    t_len: usize,
    t0: usize,
    s_grid: &[usize],
    reps: usize,
    base_cfg: &FitConfig<f64>,
) -> Result<SparsityReport> {
    check_reps(reps)?;
    if s_grid.is_empty() {
        return Err(Error::Parameter("sparsity grid is empty".into()));
    }
    let per_rep: Vec<Vec<SparsityRow>> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<SparsityRow>> {
            let sim = replicate(spec, t_len, t0, rep)?;
            let warm_cfg = FitConfig {
                t0,
                threshold: Threshold::Hard(s_grid[0]),
                ..base_cfg.clone()
            };
            let warm = warm_for(&sim, &warm_cfg)?;
            s_grid
                .iter()
                .map(|&s| {
                    let cfg = FitConfig {
                        t0,
                        threshold: Threshold::Hard(s),
                        ..base_cfg.clone()
                    };
                    let out = fit_from_warm(&sim, &cfg, warm.as_ref())?;
                    Ok(SparsityRow {
                        rep,
                        s,
                        diverged: out.is_none(),
                        estimation: out.map(|o| o.0.estimation),
                        approximation: out.map(|o| o.0.approximation),
                        truncation: out.map(|o| o.0.truncation),
                        parameter: out.map(|o| o.0.parameter),
                        fitted_sparsity: out.map(|o| o.1),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SparsityRow> = per_rep.into_iter().flatten().collect();
    let summary = s_grid
        .iter()
        .map(|&s| {
            let sel: Vec<&SparsityRow> = rows.iter().filter(|r| r.s == s).collect();
            SparsitySummary {
                s,
                fits: sel.iter().filter(|r| !r.diverged).count(),
                diverged: sel.iter().filter(|r| r.diverged).count(),
                estimation: mean(sel.iter().filter_map(|r| r.estimation)),
                approximation: mean(sel.iter().filter_map(|r| r.approximation)),
                truncation: mean(sel.iter().filter_map(|r| r.truncation)),
                parameter: mean(sel.iter().filter_map(|r| r.parameter)),
            }
        })
        .collect();
    Ok(SparsityReport {
        spec: *spec,
        t_len,
        t0,
        reps,
        rows,
        summary,
    })
}

/// Running order as a function of the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum T0Rule {
    /// `floor(3 T^{1/4})`.
    Quarter,
    /// `floor(3 T^{1/3})`.
    Third,
    /// `floor(1.5 T^{1/2})`.
    Half,
    Fixed(usize),
}

impl T0Rule {
    pub fn t0(&self, t_len: usize) -> usize {
        let t = t_len as f64;
        let v = match *self {
            T0Rule::Quarter => 3.0 * t.powf(0.25),
            T0Rule::Third => 3.0 * t.cbrt(),
            T0Rule::Half => 1.5 * t.sqrt(),
            T0Rule::Fixed(t0) => return t0,
        };
        // guard against values like 2.9999999 for perfect powers
        (v + 1e-9).floor() as usize
    }
}

impl std::str::FromStr for T0Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quarter" | "1/4" => Ok(T0Rule::Quarter),
            "third" | "1/3" => Ok(T0Rule::Third),
            "half" | "1/2" => Ok(T0Rule::Half),
            other => other
                .strip_prefix("fixed:")
                .and_then(|v| v.parse().ok())
                .map(T0Rule::Fixed)
                .ok_or_else(|| {
                    Error::Parameter(format!(
                        "unknown running-order rule '{other}' (expected quarter, third, half or fixed:<t0>)"
                    ))
                }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RateSetting {
    pub n: usize,
    pub r: usize,
    pub t_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub r: usize,
    pub t_len: usize,
    pub t0: usize,
    pub s: usize,
    pub beta: f64,
    pub rep: usize,
    pub diverged: bool,
    pub parameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub n: usize,
    pub r: usize,
    pub t_len: usize,
    pub t0: usize,
    pub s: usize,
    pub beta: f64,
    pub fits: usize,
    pub diverged: usize,
    pub parameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub kind: DgpKind,
    pub rule: T0Rule,
    pub seed: u64,
    pub reps: usize,
    pub rows: Vec<RateRow>,
    pub summary: Vec<RateSummary>,
}

impl RateReport {
    /// Correlation between `beta` and the mean parameter error over settings.
    pub fn correlation(&self) -> Option<f64> {
        let (b, e): (Vec<f64>, Vec<f64>) = self
            .summary
            .iter()
            .filter_map(|r| r.parameter.map(|p| (r.beta, p)))
            .unzip();
        (b.len() >= 2).then(|| pearson(&b, &e))
    }
}

/// Hard-thresholded fits at sparsity `s` and ranks `(r, r)` for each setting.
pub fn run_rate_scaling(
    kind: DgpKind,
    settings: &[RateSetting],
    rule: T0Rule,
    s: usize,
    reps: usize,
    seed: u64,
    base_cfg: &FitConfig<f64>,
) -> Result<RateReport> {
    check_reps(reps)?;
    if settings.is_empty() {
        return Err(Error::Parameter("setting grid is empty".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..settings.len())
        .flat_map(|i| (0..reps).map(move |rep| (i, rep)))
        .collect();
    let rows: Vec<RateRow> = jobs
        .into_par_iter()
        .map(|(i, rep)| -> Result<RateRow> {
            let st = settings[i];
            let t0 = rule.t0(st.t_len);
            let spec = DgpSpec {
                kind,
                n: st.n,
                r: st.r,
                seed: derive_seed(seed, i as u64),
            };
            let sim = replicate(&spec, st.t_len, t0, rep)?;
            let cfg = FitConfig {
                t0,
                r1: st.r,
                r2: st.r,
                threshold: Threshold::Hard(s.min(t0)),
                ..base_cfg.clone()
            };
            let out = fit_one(&sim, &cfg)?;
            Ok(RateRow {
                n: st.n,
                r: st.r,
                t_len: st.t_len,
                t0,
                s: s.min(t0),
                beta: beta_rate(s.min(t0), st.r, st.n, st.t_len, t0),
                rep,
                diverged: out.is_none(),
                parameter: out.map(|o| o.0.parameter),
            })
        })
        .collect::<Result<_>>()?;
    let summary = settings
        .iter()
        .map(|st| {
            let sel: Vec<&RateRow> = rows
                .iter()
                .filter(|r| r.n == st.n && r.r == st.r && r.t_len == st.t_len)
                .collect();
            let first = sel[0];
            RateSummary {
                n: st.n,
                r: st.r,
                t_len: st.t_len,
                t0: first.t0,
                s: first.s,
                beta: first.beta,
                fits: sel.iter().filter(|r| !r.diverged).count(),
                diverged: sel.iter().filter(|r| r.diverged).count(),
                parameter: mean(sel.iter().filter_map(|r| r.parameter)),
            }
        })
        .collect();
    Ok(RateReport {
        kind,
        rule,
        seed,
        reps,
        rows,
        summary,
    })
}

/// Settings of the thresholding comparison; exactly one of the sample size
/// and the running order varies.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityGrid {
    SampleSize { t_grid: Vec<usize>, t0: usize },
    RunningOrder { t_len: usize, t0_grid: Vec<usize> },
}

impl StabilityGrid {
    pub fn settings(&self) -> Vec<(usize, usize)> {
        match self {
            StabilityGrid::SampleSize { t_grid, t0 } => t_grid.iter().map(|&t| (t, *t0)).collect(),
            StabilityGrid::RunningOrder { t_len, t0_grid } => t0_grid.iter().map(|&t0| (*t_len, t0)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hard,
    Soft,
}

/// One fit of the comparison; `tuning` is `s` for hard and `lambda` for soft.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub t_len: usize,
    pub t0: usize,
    pub rep: usize,
    pub method: Method,
    pub tuning: f64,
    pub diverged: bool,
    pub parameter: Option<f64>,
    pub fitted_sparsity: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySummary {
    pub t_len: usize,
    pub t0: usize,
    pub best_s: Option<usize>,
    pub best_s_error: Option<f64>,
    pub best_lambda: Option<f64>,
    pub best_lambda_error: Option<f64>,
    /// Spread of the support size of the hard fits at `best_s`; `None` with
    /// fewer than two fits.
    pub hard_sparsity_iqr: Option<f64>,
    pub soft_sparsity_iqr: Option<f64>,
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub spec: DgpSpec,
    pub grid: StabilityGrid,
    pub reps: usize,
    pub rows: Vec<StabilityRow>,
    pub summary: Vec<StabilitySummary>,
}

fn best_tuning(rows: &[&StabilityRow], method: Method) -> Option<(f64, f64)> {
    let mut tunings: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method)
        .map(|r| r.tuning)
        .collect();
    tunings.sort_by(f64::total_cmp);
    tunings.dedup();
    tunings
        .into_iter()
        .filter_map(|v| {
            let m = mean(
                rows.iter()
                    .filter(|r| r.method == method && r.tuning == v)
                    .filter_map(|r| r.parameter),
            )?;
            Some((v, m))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

fn sparsity_iqr(rows: &[&StabilityRow], method: Method, tuning: f64) -> Option<f64> {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.tuning == tuning)
        .filter_map(|r| r.fitted_sparsity.map(|s| s as f64))
        .collect();
    (v.len() >= 2).then(|| iqr(&v))
}

/// Hard fits over `s_grid` and soft fits over `lambda_grid` on shared paths.
pub fn run_ht_vs_st(
    spec: &DgpSpec,
    grid: &StabilityGrid,
    s_grid: &[usize],
    lambda_grid: &[f64],
    reps: usize,
    base_cfg: &FitConfig<f64>,
) -> Result<StabilityReport> {
    check_reps(reps)?;
    let settings = grid.settings();
    if settings.is_empty() || s_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::Parameter("setting, sparsity and lambda grids must be nonempty".into()));
    }
    if let Some(l) = lambda_grid.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::Parameter(format!("lambda must be positive, got {l}")));
    }
    let jobs: Vec<(usize, usize)> = (0..settings.len())
        .flat_map(|i| (0..reps).map(move |rep| (i, rep)))
        .collect();
    let per_job: Vec<Vec<StabilityRow>> = jobs
        .into_par_iter()
        .map(|(i, rep)| -> Result<Vec<StabilityRow>> {
            let (t_len, t0) = settings[i];
            let sim = replicate(spec, t_len, t0, rep)?;
            let warm_cfg = FitConfig {
                t0,
                threshold: Threshold::Hard(s_grid[0]),
                ..base_cfg.clone()
            };
            let warm = warm_for(&sim, &warm_cfg)?;
            let mut out = Vec::with_capacity(s_grid.len() + lambda_grid.len());
            let tunings = s_grid
                .iter()
                .map(|&s| (Method::Hard, s as f64, Threshold::Hard(s)))
                .chain(lambda_grid.iter().map(|&l| (Method::Soft, l, Threshold::Soft(l))));
            for (method, tuning, threshold) in tunings {
                let cfg = FitConfig {
                    t0,
                    threshold,
                    ..base_cfg.clone()
                };
                let fit = fit_from_warm(&sim, &cfg, warm.as_ref())?;
                out.push(StabilityRow {
                    t_len,
                    t0,
                    rep,
                    method,
                    tuning,
                    diverged: fit.is_none(),
                    parameter: fit.map(|f| f.0.parameter),
                    fitted_sparsity: fit.map(|f| f.1),
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<StabilityRow> = per_job.into_iter().flatten().collect();
    let summary = settings
        .iter()
        .map(|&(t_len, t0)| {
            let sel: Vec<&StabilityRow> = rows.iter().filter(|r| r.t_len == t_len && r.t0 == t0).collect();
            let hard = best_tuning(&sel, Method::Hard);
            let soft = best_tuning(&sel, Method::Soft);
            StabilitySummary {
                t_len,
                t0,
                best_s: hard.map(|h| h.0 as usize),
                best_s_error: hard.map(|h| h.1),
                best_lambda: soft.map(|s| s.0),
                best_lambda_error: soft.map(|s| s.1),
                hard_sparsity_iqr: hard.and_then(|h| sparsity_iqr(&sel, Method::Hard, h.0)),
                soft_sparsity_iqr: soft.and_then(|s| sparsity_iqr(&sel, Method::Soft, s.0)),
                diverged: sel.iter().filter(|r| r.diverged).count(),
            }
        })
        .collect();
    Ok(StabilityReport {
        spec: *spec,
        grid: grid.clone(),
        reps,
        rows,
        summary,
    })
}

/// Writes serializable rows as a CSV file with a header.
pub fn write_rows<R: Serialize>(path: impl AsRef<Path>, rows: &[R]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_json<R: Serialize>(path: impl AsRef<Path>, value: &R) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

/// Tidy per-fit rows, per-setting summary rows and a JSON summary, written
/// into `dir` as `<stem>_rows.csv`, `<stem>_summary.csv` and `<stem>.json`.
pub trait ExperimentOutput {
    fn write_outputs(&self, dir: &Path, stem: &str) -> Result<()>;
}

macro_rules! impl_output {
    ($report:ty) => {
        impl ExperimentOutput for $report {
            fn write_outputs(&self, dir: &Path, stem: &str) -> Result<()> {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                write_rows(dir.join(format!("{stem}_rows.csv")), &self.rows)?;
                write_rows(dir.join(format!("{stem}_summary.csv")), &self.summary)?;
                let compact = serde_json::json!({
                    "experiment": stem,
                    "reps": self.reps,
                    "summary": self.summary,
                });
                write_json(dir.join(format!("{stem}.json")), &compact)
            }
        }
    };
}

impl_output!(SparsityReport);
impl_output!(RateReport);
impl_output!(StabilityReport);
