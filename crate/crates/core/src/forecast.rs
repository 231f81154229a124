//! Rolling one-step-ahead forecast evaluation.

use crate::error::{Error, Result};
use crate::estimator::{build_design, fit_agd_from, init_factors, FitConfig};
use crate::process::PanelData;
use crate::scalar::Scalar;
use crate::simulation::{write_json, write_rows, ExperimentOutput};
use crate::tensor::TuckerFactors;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

/// Forecast origins. An origin `o` is the number of observations the model
/// is fitted on; its forecast target is observation `o + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RollingPlan {
    pub first_origin: usize,
    pub last_origin: usize,
    /// Refit every this many origins; 0 fits once at the first origin.
    pub refit_every: usize,
    /// Report errors in the units the panel was recorded in rather than on
    /// the (standardized) scale the model was fitted on.
    pub original_units: bool,
}

impl RollingPlan {
    pub fn new(first_origin: usize, last_origin: usize, refit_every: usize) -> Self {
        RollingPlan {
            first_origin,
            last_origin,
            refit_every,
            original_units: false,
        }
    }

    /// The last `count` possible origins of a series of length `t_len`.
    pub fn trailing(t_len: usize, count: usize, refit_every: usize) -> Self {
        let last = t_len.saturating_sub(1);
        RollingPlan::new((last + 1).saturating_sub(count), last, refit_every)
    }

    pub fn validate(&self, t_len: usize, t0: usize) -> Result<()> {
        if !(t0 < self.first_origin && self.first_origin <= self.last_origin && self.last_origin < t_len) {
            return Err(Error::Validation(format!(
                "rolling plan needs t0 < first_origin <= last_origin < T, got t0 = {t0}, first_origin = {}, \
                 last_origin = {}, T = {t_len}",
                self.first_origin, self.last_origin
            )));
        }
        Ok(())
    }

    pub fn origins(&self) -> std::ops::RangeInclusive<usize> {
        self.first_origin..=self.last_origin
    }
}

/// Error of one forecast.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OriginError {
    pub origin: usize,
    /// Squared Euclidean norm of the error vector.
    pub squared: f64,
    /// Sum of absolute errors.
    pub absolute: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastMetrics {
    pub msfe: f64,
    pub mafe: f64,
    pub per_origin_errors: Vec<OriginError>,
    /// Origins dropped because their fit diverged.
    pub skipped: Vec<usize>,
}

/// One-row summary in the tidy CSV layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastSummary {
    pub origins: usize,
    pub skipped: usize,
    pub msfe: f64,
    pub mafe: f64,
}

impl ForecastMetrics {
    /// Metrics from per-origin errors; `skipped` origins are carried through.
    pub fn from_errors(per_origin_errors: Vec<OriginError>, skipped: Vec<usize>) -> Result<Self> {
        if per_origin_errors.is_empty() {
            return Err(Error::InsufficientData("no origin produced a forecast".into()));
        }
        let m = per_origin_errors.len() as f64;
        let msfe = per_origin_errors.iter().map(|e| e.squared).sum::<f64>() / m;
        let mafe = per_origin_errors.iter().map(|e| e.absolute).sum::<f64>() / m;
        Ok(ForecastMetrics {
            msfe,
            mafe,
            per_origin_errors,
            skipped,
        })
    }

    pub fn summary(&self) -> ForecastSummary {
        ForecastSummary {
            origins: self.per_origin_errors.len(),
            skipped: self.skipped.len(),
            msfe: self.msfe,
            mafe: self.mafe,
        }
    }
}

impl ExperimentOutput for ForecastMetrics {
    fn write_outputs(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_rows(dir.join(format!("{stem}_rows.csv")), &self.per_origin_errors)?;
        write_rows(dir.join(format!("{stem}_summary.csv")), &[self.summary()])?;
        write_json(dir.join(format!("{stem}.json")), self)
    }
}

/// `y_hat_t = sum_j U1 G_j U2' y_{t-j}` for the 1-based time index `t`.
pub fn one_step_forecast<T: Scalar>(
    f: &TuckerFactors<T>,
    history: &PanelData<T>,
    t: usize,
    t0: usize,
) -> Result<DVector<T>> {
    if f.t0() != t0 || f.n() != history.n() {
        return Err(Error::shape(
            "one_step_forecast",
            format!("N = {}, t0 = {t0}", history.n()),
            format!("N = {}, t0 = {}", f.n(), f.t0()),
        ));
    }
    if t <= t0 || history.t_len() < t - 1 {
        return Err(Error::InsufficientData(format!(
            "forecasting time {t} with t0 = {t0} needs observations {}..={}, have {}",
            t.saturating_sub(t0),
            t.saturating_sub(1),
            history.t_len()
        )));
    }
    let y = history.values();
    let (r1, _) = f.ranks();
    let mut fac = DVector::<T>::zeros(r1);
    for k in 0..t0 {
        // zero-based column of y_{t-(k+1)}
        let z = f.u2.tr_mul(&y.column(t - 2 - k));
        fac.gemv(T::one(), &f.core.slice(k), &z, T::one());
    }
    Ok(&f.u1 * fac)
}

fn origin_error<T: Scalar>(
    f: &TuckerFactors<T>,
    data: &PanelData<T>,
    origin: usize,
    t0: usize,
    original_units: bool,
) -> Result<OriginError> {
    let pred = one_step_forecast(f, data, origin + 1, t0)?;
    let actual = data.values().column(origin);
    let (mut squared, mut absolute) = (0.0, 0.0);
    for i in 0..data.n() {
        let mut e = (actual[i] - pred[i]).as_f64();
        if original_units {
            e *= data.scales()[i].as_f64();
        }
        squared += e * e;
        absolute += e.abs();
    }
    Ok(OriginError {
        origin,
        squared,
        absolute,
    })
}

/// Fits on the first `origin` observations, starting from `init`.
fn fit_at<T: Scalar>(
    data: &PanelData<T>,
    origin: usize,
    cfg: &FitConfig<T>,
    init: Option<&TuckerFactors<T>>,
) -> Result<Option<TuckerFactors<T>>> {
    let d = build_design(&data.head(origin)?, cfg.t0)?;
    let init = match init {
        Some(f) => f.clone(),
        None => init_factors(data.n(), cfg.r1, cfg.r2, cfg.t0, cfg.reg_b, cfg.seed)?,
    };
    match fit_agd_from(&d, cfg, init) {
        Ok(fit) => Ok(Some(fit.factors)),
        Err(Error::Divergence { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Rolling one-step-ahead evaluation on `data` as given.
///
/// Each fit sees only observations up to its origin. With `refit_every = 0`
/// one model is fitted at the first origin and every origin is forecast in
/// parallel. Otherwise origins run in order and each refit starts from the
/// previous successful fit (the seeded initialization for the first one).
/// Origins whose governing fit diverged are skipped and listed.
pub fn rolling_evaluate<T: Scalar>(data: &PanelData<T>, plan: &RollingPlan, cfg: &FitConfig<T>) -> Result<ForecastMetrics> {
    plan.validate(data.t_len(), cfg.t0)?;
    cfg.validate(data.n())?;
    let origins: Vec<usize> = plan.origins().collect();
    if plan.refit_every == 0 {
        let Some(f) = fit_at(data, plan.first_origin, cfg, None)? else {
            return Err(Error::Divergence {
                iteration: 0,
                reason: format!("the single fit at origin {} diverged", plan.first_origin),
            });
        };
        let errors = origins
            .par_iter()
            .map(|&o| origin_error(&f, data, o, cfg.t0, plan.original_units))
            .collect::<Result<Vec<_>>>()?;
        return ForecastMetrics::from_errors(errors, Vec::new());
    }
    let mut errors = Vec::with_capacity(origins.len());
    let mut skipped = Vec::new();
    let mut last_good: Option<TuckerFactors<T>> = None;
    let mut current: Option<TuckerFactors<T>> = None;
    for (idx, &o) in origins.iter().enumerate() {
        if idx % plan.refit_every == 0 {
            current = fit_at(data, o, cfg, last_good.as_ref())?;
            if current.is_some() {
                last_good = current.clone();
            }
        }
        match &current {
            Some(f) => errors.push(origin_error(f, data, o, cfg.t0, plan.original_units)?),
            None => skipped.push(o),
        }
    }
    if errors.is_empty() {
        return Err(Error::Divergence {
            iteration: 0,
            reason: "the fit diverged at every forecast origin".into(),
        });
    }
    ForecastMetrics::from_errors(errors, skipped)
}
