use crate::error::{Error, Result};
use crate::linalg::top_gram_eigenvalue;
use crate::process::PanelData;
use crate::scalar::Scalar;
use nalgebra::DMatrix;

/// Lag-stacked regression design for a VAR sieve of running order `t0`.
///
/// Columns are time-descending: column `c` of `y` is `y_{T-c}` and column `c`
/// of `x` stacks `(y_{T-c-1}', ..., y_{T-c-t0}')'`.
#[derive(Debug, Clone)]
pub struct DesignMatrices<T> {
    series: DMatrix<T>,
    y: DMatrix<T>,
    x: DMatrix<T>,
    // time-major copies (T x N and T1 x N, ascending) so that lag windows
    // are contiguous column segments
    series_t: DMatrix<T>,
    y_asc_t: DMatrix<T>,
    t0: usize,
    gram_top: T,
}

/// Builds `Y` and `X` from an observed panel.
pub fn build_design<T: Scalar>(data: &PanelData<T>, t0: usize) -> Result<DesignMatrices<T>> {
    DesignMatrices::from_series(data.values().clone(), t0)
}

impl<T: Scalar> DesignMatrices<T> {
    pub fn from_series(series: DMatrix<T>, t0: usize) -> Result<Self> {
        let (n, t) = series.shape();
        if t0 == 0 {
            return Err(Error::Parameter("running order t0 must be at least 1".into()));
        }
        if t <= t0 {
            return Err(Error::InsufficientData(format!(
                "sample size {t} must exceed running order {t0}"
            )));
        }
        let t1 = t - t0;
        let mut y = DMatrix::zeros(n, t1);
        let mut x = DMatrix::zeros(n * t0, t1);
        for c in 0..t1 {
            // zero-based series column of y_{T-c}
            let now = t - 1 - c;
            y.set_column(c, &series.column(now));
            for j in 1..=t0 {
                x.view_mut(((j - 1) * n, c), (n, 1))
                    .copy_from(&series.column(now - j));
            }
        }
        let series_t = series.transpose();
        let y_asc_t = DMatrix::from_fn(t1, n, |c, i| y[(i, t1 - 1 - c)]);
        let gram_top = top_gram_eigenvalue(&x, T::from_count(t1));
        Ok(DesignMatrices {
            series,
            y,
            x,
            series_t,
            y_asc_t,
            t0,
            gram_top,
        })
    }

    /// Replaces the response matrix `Y` (time-descending) while keeping the
    /// lagged predictors.
    pub fn with_response(mut self, y: DMatrix<T>) -> Result<Self> {
        if y.shape() != self.y.shape() {
            return Err(Error::shape(
                "DesignMatrices::with_response",
                format!("{}x{}", self.y.nrows(), self.y.ncols()),
                format!("{}x{}", y.nrows(), y.ncols()),
            ));
        }
        let t1 = self.t1();
        self.y_asc_t = DMatrix::from_fn(t1, y.nrows(), |c, i| y[(i, t1 - 1 - c)]);
        self.y = y;
        Ok(self)
    }

    pub fn y(&self) -> &DMatrix<T> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }

    pub fn series(&self) -> &DMatrix<T> {
        &self.series
    }

    pub(crate) fn series_time_major(&self) -> &DMatrix<T> {
        &self.series_t
    }

    /// Response as `T1 x N`, row `c` being `y_{t0 + 1 + c}`.
    pub(crate) fn response_time_major(&self) -> &DMatrix<T> {
        &self.y_asc_t
    }

    pub fn n(&self) -> usize {
        self.series.nrows()
    }

    pub fn t0(&self) -> usize {
        self.t0
    }

    /// Effective sample size `T - t0`.
    pub fn t1(&self) -> usize {
        self.y.ncols()
    }

    /// Largest eigenvalue of `X X' / T1`.
    pub fn gram_top_eigenvalue(&self) -> T {
        self.gram_top
    }
}
