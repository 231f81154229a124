//! Truncated general linear processes: coefficient conversions between the
//! MA(∞) and VAR(∞) forms, simulation, stationarity and truncation
//! diagnostics, and the panel container used for observed series.

use crate::error::{Error, Result};
use crate::linalg::{rng_from_seed, spectral_radius};
use crate::scalar::Scalar;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{Read, Write};
use std::path::Path;

/// Default number of discarded initial steps in [`simulate`].
pub const DEFAULT_BURN_IN: usize = 500;

/// Companion spectral radius must stay below `1 - STATIONARITY_MARGIN`.
pub const STATIONARITY_MARGIN: f64 = 1e-8;

/// `y_t = sum_i ar[i] y_{t-1-i} + e_t + sum_j ma[j] e_{t-1-j}`, `e_t ~ N(0, noise_cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlpModel<T> {
    n: usize,
    ar: Vec<DMatrix<T>>,
    ma: Vec<DMatrix<T>>,
    noise_cov: DMatrix<T>,
}

impl<T: Scalar> GlpModel<T> {
    pub fn new(ar: Vec<DMatrix<T>>, ma: Vec<DMatrix<T>>, noise_cov: DMatrix<T>) -> Result<Self> {
        let n = noise_cov.nrows();
        if n == 0 || noise_cov.ncols() != n {
            return Err(Error::shape(
                "GlpModel::new",
                "square noise covariance",
                format!("{}x{}", noise_cov.nrows(), noise_cov.ncols()),
            ));
        }
        for m in ar.iter().chain(&ma) {
            if m.shape() != (n, n) {
                return Err(Error::shape(
                    "GlpModel::new",
                    format!("{n}x{n} coefficient"),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ));
            }
        }
        let asym = (&noise_cov - noise_cov.transpose()).amax();
        if asym > T::lit(1e-10) * noise_cov.amax().max(T::one()) {
            return Err(Error::Validation("noise covariance is not symmetric".into()));
        }
        if noise_cov.clone().cholesky().is_none() {
            return Err(Error::Validation(
                "noise covariance is not positive definite".into(),
            ));
        }
        Ok(GlpModel { n, ar, ma, noise_cov })
    }

    pub fn white_noise(noise_cov: DMatrix<T>) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), noise_cov)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ar(&self) -> &[DMatrix<T>] {
        &self.ar
    }

    pub fn ma(&self) -> &[DMatrix<T>] {
        &self.ma
    }

    pub fn noise_cov(&self) -> &DMatrix<T> {
        &self.noise_cov
    }

    /// First `horizon` coefficients `A_1..A_horizon` of the implied VAR(∞)
    /// form, from `M(L) (I - sum A_j L^j) = I - sum Phi_i L^i`.
    pub fn var_coefficients(&self, horizon: usize) -> Vec<DMatrix<T>> {
        let n = self.n;
        let mut a: Vec<DMatrix<T>> = Vec::with_capacity(horizon);
        for j in 1..=horizon {
            let mut aj = DMatrix::zeros(n, n);
            if let Some(phi) = self.ar.get(j - 1) {
                aj += phi;
            }
            if let Some(m) = self.ma.get(j - 1) {
                aj += m;
            }
            for i in 1..j.min(self.ma.len() + 1) {
                aj.gemm(-T::one(), &self.ma[i - 1], &a[j - i - 1], T::one());
            }
            a.push(aj);
        }
        a
    }

    /// First `horizon` coefficients `Psi_1..Psi_horizon` of the MA(∞) form.
    pub fn ma_coefficients(&self, horizon: usize) -> Vec<DMatrix<T>> {
        let n = self.n;
        let mut psi: Vec<DMatrix<T>> = Vec::with_capacity(horizon);
        for j in 1..=horizon {
            let mut pj = self.ma.get(j - 1).cloned().unwrap_or_else(|| DMatrix::zeros(n, n));
            for i in 1..=j.min(self.ar.len()) {
                if i == j {
                    pj += &self.ar[i - 1];
                } else {
                    pj.gemm(T::one(), &self.ar[i - 1], &psi[j - i - 1], T::one());
                }
            }
            psi.push(pj);
        }
        psi
    }

    /// Companion matrix of the finite AR part (`NP x NP`).
    pub fn companion(&self) -> DMatrix<T> {
        let n = self.n;
        let p = self.ar.len();
        let mut c = DMatrix::zeros(n * p, n * p);
        for (i, a) in self.ar.iter().enumerate() {
            c.view_mut((0, i * n), (n, n)).copy_from(a);
        }
        for i in n..n * p {
            c[(i, i - n)] = T::one();
        }
        c
    }
}

fn check_square_list<T: Scalar>(op: &'static str, mats: &[DMatrix<T>], n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Parameter("series dimension must be positive".into()));
    }
    for m in mats {
        if m.shape() != (n, n) {
            return Err(Error::shape(
                op,
                format!("{n}x{n}"),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
    }
    Ok(())
}

/// VAR(∞) coefficients from MA(∞) ones:
/// `A_j = Psi_j - sum_{k<j} Psi_{j-k} A_k`, with `Psi_j = 0` past the list.
pub fn ma_to_ar<T: Scalar>(psi: &[DMatrix<T>], n: usize, horizon: usize) -> Result<Vec<DMatrix<T>>> {
    check_square_list("ma_to_ar", psi, n)?;
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    let mut a: Vec<DMatrix<T>> = Vec::with_capacity(horizon);
    for j in 1..=horizon {
        let mut aj = psi.get(j - 1).cloned().unwrap_or_else(|| DMatrix::zeros(n, n));
        for k in 1..j {
            if let Some(p) = psi.get(j - k - 1) {
                aj.gemm(-T::one(), p, &a[k - 1], T::one());
            }
        }
        a.push(aj);
    }
    Ok(a)
}

/// MA(∞) coefficients from VAR(∞) ones:
/// `Psi_j = A_j + sum_{k<j} A_k Psi_{j-k}`, with `A_j = 0` past the list.
pub fn ar_to_ma<T: Scalar>(a: &[DMatrix<T>], n: usize, horizon: usize) -> Result<Vec<DMatrix<T>>> {
    check_square_list("ar_to_ma", a, n)?;
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    let mut psi: Vec<DMatrix<T>> = Vec::with_capacity(horizon);
    for j in 1..=horizon {
        let mut pj = a.get(j - 1).cloned().unwrap_or_else(|| DMatrix::zeros(n, n));
        for k in 1..j {
            if let Some(ak) = a.get(k - 1) {
                pj.gemm(T::one(), ak, &psi[j - k - 1], T::one());
            }
        }
        psi.push(pj);
    }
    Ok(psi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stationarity<T> {
    pub is_stationary: bool,
    pub spectral_radius: T,
}

/// Spectral radius of the companion matrix of the AR part.
pub fn check_stationarity<T: Scalar>(model: &GlpModel<T>) -> Stationarity<T> {
    if model.ar.is_empty() {
        return Stationarity {
            is_stationary: true,
            spectral_radius: T::zero(),
        };
    }
    let rho = spectral_radius(&model.companion());
    Stationarity {
        is_stationary: rho < T::one() - T::lit(STATIONARITY_MARGIN),
        spectral_radius: rho,
    }
}

/// Draws `t_len` observations after `burn_in` discarded steps, starting
/// from a zero state. Innovations are `L z` with `L L' = noise_cov`.
pub fn simulate<T: Scalar>(
    model: &GlpModel<T>,
    t_len: usize,
    burn_in: usize,
    seed: u64,
) -> Result<PanelData<T>> {
    if t_len == 0 {
        return Err(Error::Parameter("sample size must be at least 1".into()));
    }
    let st = check_stationarity(model);
    if !st.is_stationary {
        return Err(Error::Validation(format!(
            "model is not stationary (companion spectral radius {})",
            st.spectral_radius
        )));
    }
    let n = model.n;
    let chol = model
        .noise_cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Validation("noise covariance is not positive definite".into()))?
        .l();
    let total = burn_in + t_len;
    let mut rng = rng_from_seed(seed);
    let mut eps = DMatrix::<T>::zeros(n, total);
    let mut z = DVector::<T>::zeros(n);
    for t in 0..total {
        for v in z.iter_mut() {
            let draw: f64 = rng.sample(StandardNormal);
            *v = T::lit(draw);
        }
        eps.set_column(t, &(&chol * &z));
    }
    let mut y = DMatrix::<T>::zeros(n, total);
    let mut col = DVector::<T>::zeros(n);
    for t in 0..total {
        col.copy_from(&eps.column(t));
        for (i, a) in model.ar.iter().enumerate() {
            if t > i {
                col.gemv(T::one(), a, &y.column(t - i - 1), T::one());
            }
        }
        for (j, m) in model.ma.iter().enumerate() {
            if t > j {
                col.gemv(T::one(), m, &eps.column(t - j - 1), T::one());
            }
        }
        y.set_column(t, &col);
    }
    let values = y.columns(burn_in, t_len).into_owned();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("simulated path overflowed".into()));
    }
    PanelData::new(values, default_names(n))
}

/// Per-lag geometric decay of a norm sequence, estimated from its last
/// (up to ten) strictly positive entries.
fn tail_decay<T: Scalar>(norms: &[T]) -> Option<T> {
    let end = norms.len();
    let start = end.saturating_sub(10);
    let window = &norms[start..end];
    if window.len() < 2 || window.iter().any(|&x| x <= T::zero()) {
        return None;
    }
    let steps = T::from_count(window.len() - 1);
    let rho = (window[window.len() - 1] / window[0]).powf(T::one() / steps);
    (rho < T::one()).then_some(rho)
}

/// Squared Frobenius mass `sum_{j > t0} |A_j|_F^2` of the implied VAR(∞)
/// coefficients beyond the running order `t0`.
///
/// Sums exactly up to `horizon` and adds a geometric tail bound when the
/// coefficient norms decay detectably. With `horizon = None` the horizon is
/// `t0 + 60 / |log rho|`, `rho` being the fitted decay rate.
pub fn truncation_error<T: Scalar>(model: &GlpModel<T>, t0: usize, horizon: Option<usize>) -> T {
    let horizon = match horizon {
        Some(h) => h.max(t0),
        None => {
            let probe = (2 * t0).max(t0 + 40);
            let norms: Vec<T> = model
                .var_coefficients(probe)
                .iter()
                .map(|a| a.norm())
                .collect();
            match tail_decay(&norms[t0..]) {
                Some(rho) => {
                    let extra = (60.0 / rho.as_f64().ln().abs()).ceil() as usize;
                    t0 + extra.max(1)
                }
                None => probe,
            }
        }
    };
    let coefs = model.var_coefficients(horizon);
    let norms: Vec<T> = coefs.iter().map(|a| a.norm()).collect();
    let mut total = T::zero();
    for &n in &norms[t0.min(horizon)..] {
        total += n * n;
    }
    if horizon > t0 {
        if let Some(rho) = tail_decay(&norms[t0..]) {
            let last = norms[horizon - 1];
            let r2 = rho * rho;
            total += last * last * r2 / (T::one() - r2);
        }
    }
    total
}

pub(crate) fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("y{i}")).collect()
}

/// Observed `N x T` panel; column `t` is the observation at time `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData<T> {
    names: Vec<String>,
    values: DMatrix<T>,
    means: DVector<T>,
    scales: DVector<T>,
    standardized: bool,
}

impl<T: Scalar> PanelData<T> {
    pub fn new(values: DMatrix<T>, names: Vec<String>) -> Result<Self> {
        let (n, t) = values.shape();
        if n == 0 || t == 0 {
            return Err(Error::InsufficientData(format!("empty panel ({n}x{t})")));
        }
        if names.len() != n {
            return Err(Error::shape("PanelData::new", format!("{n} names"), names.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("panel contains non-finite values".into()));
        }
        Ok(PanelData {
            names,
            values,
            means: DVector::zeros(n),
            scales: DVector::from_element(n, T::one()),
            standardized: false,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn t_len(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn means(&self) -> &DVector<T> {
        &self.means
    }

    pub fn scales(&self) -> &DVector<T> {
        &self.scales
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// First `len` observations.
    pub fn head(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.t_len() {
            return Err(Error::InsufficientData(format!(
                "cannot take {len} of {} observations",
                self.t_len()
            )));
        }
        Ok(PanelData {
            names: self.names.clone(),
            values: self.values.columns(0, len).into_owned(),
            means: self.means.clone(),
            scales: self.scales.clone(),
            standardized: self.standardized,
        })
    }

    /// Rows rescaled to zero sample mean and unit sample variance (`T - 1`
    /// denominator). Constant rows keep scale 1. Already standardized
    /// panels are returned unchanged.
    pub fn standardize(&self) -> Self {
        if self.standardized {
            return self.clone();
        }
        let (n, t) = self.values.shape();
        let tf = T::from_count(t);
        let denom = T::from_count(t.saturating_sub(1).max(1));
        let mut means = DVector::zeros(n);
        let mut scales = DVector::from_element(n, T::one());
        let mut values = self.values.clone();
        for i in 0..n {
            let row = self.values.row(i);
            let mean = row.sum() / tf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).fold(T::zero(), |a, b| a + b)
                / denom;
            let sd = var.sqrt();
            let scale = if sd > T::zero() { sd } else { T::one() };
            means[i] = mean;
            scales[i] = scale;
            for v in values.row_mut(i).iter_mut() {
                *v = (*v - mean) / scale;
            }
        }
        PanelData {
            names: self.names.clone(),
            values,
            means,
            scales,
            standardized: true,
        }
    }

    /// Inverse of [`PanelData::standardize`].
    pub fn destandardize(&self) -> Self {
        if !self.standardized {
            return self.clone();
        }
        let mut values = self.values.clone();
        for i in 0..self.n() {
            let (m, s) = (self.means[i], self.scales[i]);
            for v in values.row_mut(i).iter_mut() {
                *v = *v * s + m;
            }
        }
        PanelData {
            names: self.names.clone(),
            values,
            means: DVector::zeros(self.n()),
            scales: DVector::from_element(self.n(), T::one()),
            standardized: false,
        }
    }

    /// Reads a panel from CSV: a header of series names, then one row per
    /// time step.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let n = names.len();
        let mut flat: Vec<T> = Vec::new();
        for (row_idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != n {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {n}",
                    row_idx + 2,
                    rec.len()
                )));
            }
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Parse(format!("row {}: '{field}' is not a number", row_idx + 2))
                })?;
                flat.push(T::lit(v));
            }
        }
        if n == 0 || flat.is_empty() {
            return Err(Error::InsufficientData("CSV contains no observations".into()));
        }
        let t = flat.len() / n;
        // rows are time steps, so the flat buffer is the column-major N x T matrix
        let values = DMatrix::from_vec(n, t, flat);
        PanelData::new(values, names)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Writes the panel as CSV with shortest round-trip decimals.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.names)?;
        for t in 0..self.t_len() {
            wtr.write_record(self.values.column(t).iter().map(|v| v.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_csv_writer(std::io::BufWriter::new(file))
    }
}
