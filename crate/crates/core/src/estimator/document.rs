//! JSON form of a fitted model.

use super::agd::FitResult;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{GroupSupport, Tensor3, TuckerFactors};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FIT_SCHEMA: &str = "tuckervar-fit-v1";

/// Serialized [`FitResult`]. Matrices are row-major nested arrays; `core[k]`
/// is the `r1 x r2` core slice of lag `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema: String,
    pub n: usize,
    pub r1: usize,
    pub r2: usize,
    pub t0: usize,
    pub u1: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
    pub core: Vec<Vec<Vec<f64>>>,
    pub support: Vec<usize>,
    pub objective_trace: Vec<f64>,
    pub grad_norm_trace: Vec<f64>,
    pub converged: bool,
    pub iterations_used: usize,
    pub step_size: f64,
}

fn rows<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect()
}

fn from_rows<T: Scalar>(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<T>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("{name} must be a {nrows}x{ncols} array")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| T::lit(rows[i][j])))
}

impl FitDocument {
    pub fn from_fit<T: Scalar>(fit: &FitResult<T>) -> Self {
        let f = &fit.factors;
        let (r1, r2) = f.ranks();
        FitDocument {
            schema: FIT_SCHEMA.to_string(),
            n: f.n(),
            r1,
            r2,
            t0: f.t0(),
            u1: rows(&f.u1),
            u2: rows(&f.u2),
            core: (0..f.t0()).map(|k| rows(&f.core.slice(k).into_owned())).collect(),
            support: fit.support.as_slice().to_vec(),
            objective_trace: fit.objective_trace.iter().map(|v| v.as_f64()).collect(),
            grad_norm_trace: fit.grad_norm_trace.iter().map(|v| v.as_f64()).collect(),
            converged: fit.converged,
            iterations_used: fit.iterations_used,
            step_size: fit.step_size.as_f64(),
        }
    }

    pub fn to_fit<T: Scalar>(&self) -> Result<FitResult<T>> {
        if self.schema != FIT_SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported schema '{}', expected '{FIT_SCHEMA}'",
                self.schema
            )));
        }
        let u1 = from_rows("u1", &self.u1, self.n, self.r1)?;
        let u2 = from_rows("u2", &self.u2, self.n, self.r2)?;
        if self.core.len() != self.t0 {
            return Err(Error::Parse(format!("core must have {} slices", self.t0)));
        }
        let slices = self
            .core
            .iter()
            .map(|s| from_rows("core slice", s, self.r1, self.r2))
            .collect::<Result<Vec<DMatrix<T>>>>()?;
        let core = Tensor3::from_slices(&slices)?;
        let factors = TuckerFactors::new(core, u1, u2)?;
        Ok(FitResult {
            factors,
            support: GroupSupport::new(self.support.clone(), self.t0)?,
            objective_trace: self.objective_trace.iter().map(|&v| T::lit(v)).collect(),
            grad_norm_trace: self.grad_norm_trace.iter().map(|&v| T::lit(v)).collect(),
            converged: self.converged,
            iterations_used: self.iterations_used,
            step_size: T::lit(self.step_size),
        })
    }
}

impl<T: Scalar> FitResult<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FitDocument::from_fit(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: FitDocument = serde_json::from_str(s)?;
        doc.to_fit()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit_agd, DesignMatrices, FitConfig};
    use crate::linalg::{rng_from_seed, standard_normal_matrix};

    fn small_fit() -> FitResult<f64> {
        let mut rng = rng_from_seed(11);
        let series = standard_normal_matrix::<f64, _>(4, 60, &mut rng);
        let d = DesignMatrices::from_series(series, 3).unwrap();
        let mut cfg = FitConfig::new(3, 2, 1, 2);
        cfg.max_iter = 50;
        fit_agd(&d, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let fit = small_fit();
        let back: FitResult<f64> = FitResult::from_json(&fit.to_json().unwrap()).unwrap();
        assert_eq!(back.factors, fit.factors);
        assert_eq!(back.support, fit.support);
        assert_eq!(back.objective_trace, fit.objective_trace);
        assert_eq!(back.grad_norm_trace, fit.grad_norm_trace);
        assert_eq!(back.step_size, fit.step_size);
        assert_eq!(back.converged, fit.converged);
    }

    #[test]
    fn layout_is_row_major() {
        let fit = small_fit();
        let doc = FitDocument::from_fit(&fit);
        assert_eq!(doc.schema, FIT_SCHEMA);
        assert_eq!(doc.u1.len(), 4);
        assert_eq!(doc.u1[0].len(), 2);
        assert_eq!(doc.u1[3][1], fit.factors.u1[(3, 1)]);
        assert_eq!(doc.core.len(), 3);
        assert_eq!(doc.core[2][1][0], fit.factors.core.get(1, 0, 2));
    }

    #[test]
    fn rejects_wrong_schema_and_shapes() {
        let mut doc = FitDocument::from_fit(&small_fit());
        doc.schema = "other".into();
        assert!(doc.to_fit::<f64>().is_err());
        let mut doc = FitDocument::from_fit(&small_fit());
        doc.u1.pop();
        assert!(doc.to_fit::<f64>().is_err());
        let mut doc = FitDocument::from_fit(&small_fit());
        doc.support = vec![9];
        assert!(doc.to_fit::<f64>().is_err());
    }
}
