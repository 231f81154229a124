//! Dense third-order tensors and the handful of multilinear operations the
//! estimator needs.
//!
//! Storage is slice-major: entry `(i, j, k)` (zero-based) lives at offset
//! `k*d1*d2 + j*d1 + i`. Each frontal slice is therefore a column-major
//! `d1 x d2` block, and the mode-1 matricization `(A_1, A_2, ..., A_d3)` is
//! the raw buffer read as a `d1 x (d2*d3)` column-major matrix.
//!
//! Matricization conventions (zero-based, entry `(i, j, k)`):
//!
//! | mode | shape            | row | column        |
//! |------|------------------|-----|---------------|
//! | 1    | `d1 x (d2*d3)`   | `i` | `k*d2 + j`    |
//! | 2    | `d2 x (d1*d3)`   | `j` | `k*d1 + i`    |
//! | 3    | `d3 x (d1*d2)`   | `k` | `j*d1 + i`    |

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Tensor mode selector for matricization and mode products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(mode: usize) -> Result<Self> {
        match mode {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            m => Err(Error::Parameter(format!("tensor mode must be 1, 2 or 3, got {m}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            Mode::One => 1,
            Mode::Two => 2,
            Mode::Three => 3,
        };
        write!(f, "mode-{n}")
    }
}

/// Dense `d1 x d2 x d3` real tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3<T> {
    dims: (usize, usize, usize),
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    /// All-zero tensor. Panics if any dimension is zero.
    pub fn zeros(d1: usize, d2: usize, d3: usize) -> Self {
        assert!(d1 > 0 && d2 > 0 && d3 > 0, "tensor dimensions must be positive");
        Tensor3 {
            dims: (d1, d2, d3),
            data: vec![T::zero(); d1 * d2 * d3],
        }
    }

    /// Wraps a buffer in the slice-major layout.
    pub fn from_vec(dims: (usize, usize, usize), data: Vec<T>) -> Result<Self> {
        let (d1, d2, d3) = dims;
        if d1 == 0 || d2 == 0 || d3 == 0 {
            return Err(Error::Parameter(format!(
                "tensor dimensions must be positive, got {d1}x{d2}x{d3}"
            )));
        }
        if data.len() != d1 * d2 * d3 {
            return Err(Error::shape("Tensor3::from_vec", d1 * d2 * d3, data.len()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("tensor entries must be finite".into()));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn from_fn(
        dims: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let (d1, d2, d3) = dims;
        let mut t = Self::zeros(d1, d2, d3);
        for k in 0..d3 {
            for j in 0..d2 {
                for i in 0..d1 {
                    t.data[k * d1 * d2 + j * d1 + i] = f(i, j, k);
                }
            }
        }
        t
    }

    /// Stacks equally sized matrices as frontal slices.
    pub fn from_slices(slices: &[DMatrix<T>]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::Parameter("at least one frontal slice required".into()))?;
        let (d1, d2) = first.shape();
        let mut data = Vec::with_capacity(d1 * d2 * slices.len());
        for s in slices {
            if s.shape() != (d1, d2) {
                return Err(Error::shape(
                    "Tensor3::from_slices",
                    format!("{d1}x{d2}"),
                    format!("{}x{}", s.nrows(), s.ncols()),
                ));
            }
            data.extend_from_slice(s.as_slice());
        }
        Self::from_vec((d1, d2, slices.len()), data)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// Raw slice-major buffer.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        let (d1, d2, _) = self.dims;
        self.data[k * d1 * d2 + j * d1 + i]
    }

    fn slice_len(&self) -> usize {
        self.dims.0 * self.dims.1
    }

    /// Frontal slice `k` (zero-based) as a `d1 x d2` view.
    pub fn slice(&self, k: usize) -> DMatrixView<'_, T> {
        let (d1, d2, _) = self.dims;
        let n = self.slice_len();
        DMatrixView::from_slice(&self.data[k * n..(k + 1) * n], d1, d2)
    }

    pub(crate) fn slice_mut(&mut self, k: usize) -> DMatrixViewMut<'_, T> {
        let (d1, d2, _) = self.dims;
        let n = self.slice_len();
        DMatrixViewMut::from_slice(&mut self.data[k * n..(k + 1) * n], d1, d2)
    }

    /// Frontal slices as owned matrices.
    pub fn to_slices(&self) -> Vec<DMatrix<T>> {
        (0..self.dims.2).map(|k| self.slice(k).into_owned()).collect()
    }

    /// Zero-copy mode-1 matricization.
    pub fn mode1_view(&self) -> DMatrixView<'_, T> {
        let (d1, d2, d3) = self.dims;
        DMatrixView::from_slice(&self.data, d1, d2 * d3)
    }

    pub fn matricize(&self, mode: Mode) -> DMatrix<T> {
        let (d1, d2, d3) = self.dims;
        match mode {
            Mode::One => self.mode1_view().into_owned(),
            Mode::Two => {
                let mut m = DMatrix::zeros(d2, d1 * d3);
                for k in 0..d3 {
                    m.columns_mut(k * d1, d1).copy_from(&self.slice(k).transpose());
                }
                m
            }
            Mode::Three => {
                let n = self.slice_len();
                DMatrix::from_fn(d3, d1 * d2, |k, c| self.data[k * n + c])
            }
        }
    }

    /// Inverse of [`Tensor3::matricize`].
    pub fn fold(m: &DMatrix<T>, mode: Mode, dims: (usize, usize, usize)) -> Result<Self> {
        let (d1, d2, d3) = dims;
        let expected = match mode {
            Mode::One => (d1, d2 * d3),
            Mode::Two => (d2, d1 * d3),
            Mode::Three => (d3, d1 * d2),
        };
        if m.shape() != expected {
            return Err(Error::shape(
                "Tensor3::fold",
                format!("{}x{}", expected.0, expected.1),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        let t = match mode {
            Mode::One => Tensor3::from_fn(dims, |i, j, k| m[(i, k * d2 + j)]),
            Mode::Two => Tensor3::from_fn(dims, |i, j, k| m[(j, k * d1 + i)]),
            Mode::Three => Tensor3::from_fn(dims, |i, j, k| m[(k, j * d1 + i)]),
        };
        Ok(t)
    }

    /// Mode-n product `t x_n m`, where `m` has as many columns as the tensor
    /// has entries along `mode`.
    pub fn mode_product(&self, m: &DMatrix<T>, mode: Mode) -> Result<Self> {
        let (d1, d2, d3) = self.dims;
        let along = match mode {
            Mode::One => d1,
            Mode::Two => d2,
            Mode::Three => d3,
        };
        if m.ncols() != along || m.nrows() == 0 {
            return Err(Error::shape(
                "Tensor3::mode_product",
                format!("matrix with {along} columns along {mode}"),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        let p = m.nrows();
        let out = match mode {
            Mode::One => {
                let mut out = Tensor3::zeros(p, d2, d3);
                for k in 0..d3 {
                    out.slice_mut(k).gemm(T::one(), m, &self.slice(k), T::zero());
                }
                out
            }
            Mode::Two => {
                let mut out = Tensor3::zeros(d1, p, d3);
                let mt = m.transpose();
                for k in 0..d3 {
                    out.slice_mut(k).gemm(T::one(), &self.slice(k), &mt, T::zero());
                }
                out
            }
            Mode::Three => {
                let prod = m * self.matricize(Mode::Three);
                Tensor3::fold(&prod, Mode::Three, (d1, d2, p))?
            }
        };
        Ok(out)
    }

    pub fn norm_squared(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x * x)
    }

    pub fn frobenius_norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// Frobenius norm of every frontal slice.
    pub fn group_norms(&self) -> Vec<T> {
        self.data
            .chunks(self.slice_len())
            .map(|c| c.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt())
            .collect()
    }

    /// Sum of the frontal-slice Frobenius norms (the group-lasso norm).
    pub fn group_norm_sum(&self) -> T {
        self.group_norms().into_iter().fold(T::zero(), |a, b| a + b)
    }

    /// Number of frontal slices that are not identically zero.
    pub fn active_slices(&self) -> usize {
        self.data
            .chunks(self.slice_len())
            .filter(|c| c.iter().any(|x| *x != T::zero()))
            .count()
    }

    /// Keeps the `s` frontal slices with the largest Frobenius norm and zeroes
    /// the rest. Equal norms favor the smaller lag.
    pub fn hard_threshold(&self, s: usize) -> Result<(Self, GroupSupport)> {
        let d3 = self.dims.2;
        if s == 0 || s > d3 {
            return Err(Error::Parameter(format!(
                "sparsity level must lie in 1..={d3}, got {s}"
            )));
        }
        let support = top_slices(&self.group_norms(), s);
        let mut out = Tensor3::zeros(self.dims.0, self.dims.1, d3);
        let n = self.slice_len();
        for lag in support.iter() {
            let k = lag - 1;
            out.data[k * n..(k + 1) * n].copy_from_slice(&self.data[k * n..(k + 1) * n]);
        }
        Ok((out, support))
    }

    /// Group soft-thresholding: slice `B_j` becomes `(1 - lambda/|B_j|)_+ B_j`.
    pub fn soft_threshold(&self, lambda: T) -> Result<Self> {
        if !(lambda >= T::zero()) {
            return Err(Error::Parameter(format!(
                "soft-threshold level must be nonnegative, got {lambda}"
            )));
        }
        let factors = shrink_factors(&self.group_norms(), lambda);
        let mut out = self.clone();
        out.scale_slices(&factors);
        Ok(out)
    }

    pub(crate) fn scale_slices(&mut self, factors: &[T]) {
        let n = self.slice_len();
        for (chunk, &f) in self.data.chunks_mut(n).zip(factors) {
            if f == T::zero() {
                chunk.iter_mut().for_each(|x| *x = T::zero());
            } else if f != T::one() {
                chunk.iter_mut().for_each(|x| *x *= f);
            }
        }
    }

    /// Lags (1-based) whose slice is not identically zero.
    pub fn support(&self) -> GroupSupport {
        let active = self
            .data
            .chunks(self.slice_len())
            .enumerate()
            .filter(|(_, c)| c.iter().any(|x| *x != T::zero()))
            .map(|(k, _)| k + 1)
            .collect();
        GroupSupport { active }
    }

    /// Copy keeping only the lags in `support`.
    pub fn restrict(&self, support: &GroupSupport) -> Self {
        let factors: Vec<T> = (1..=self.dims.2)
            .map(|lag| if support.contains(lag) { T::one() } else { T::zero() })
            .collect();
        let mut out = self.clone();
        out.scale_slices(&factors);
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::shape(
                "Tensor3::sub",
                format!("{:?}", self.dims),
                format!("{:?}", other.dims),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Tensor3 { dims: self.dims, data })
    }

    pub fn scale(&self, c: T) -> Self {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Converts to another scalar type through `f64`.
    pub fn cast<U: Scalar>(&self) -> Tensor3<U> {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }
}

/// Indices (1-based, ascending) of the `s` largest norms; ties go to the
/// smaller index.
pub(crate) fn top_slices<T: Scalar>(norms: &[T], s: usize) -> GroupSupport {
    let mut order: Vec<usize> = (0..norms.len()).collect();
    // stable sort keeps equal norms in index order
    order.sort_by(|&a, &b| {
        norms[b]
            .partial_cmp(&norms[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut active: Vec<usize> = order.into_iter().take(s).map(|k| k + 1).collect();
    active.sort_unstable();
    GroupSupport { active }
}

pub(crate) fn shrink_factors<T: Scalar>(norms: &[T], lambda: T) -> Vec<T> {
    norms
        .iter()
        .map(|&n| {
            if lambda == T::zero() {
                T::one()
            } else if n <= lambda {
                T::zero()
            } else {
                T::one() - lambda / n
            }
        })
        .collect()
}

/// Set of active lags, 1-based and strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupSupport {
    active: Vec<usize>,
}

impl GroupSupport {
    pub fn new(mut lags: Vec<usize>, t0: usize) -> Result<Self> {
        lags.sort_unstable();
        lags.dedup();
        if let Some(&bad) = lags.iter().find(|&&l| l == 0 || l > t0) {
            return Err(Error::Parameter(format!("lag {bad} outside 1..={t0}")));
        }
        Ok(GroupSupport { active: lags })
    }

    pub fn all(t0: usize) -> Self {
        GroupSupport {
            active: (1..=t0).collect(),
        }
    }

    pub fn contains(&self, lag: usize) -> bool {
        self.active.binary_search(&lag).is_ok()
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.active
    }
}

/// Tucker factorization `core x_1 u1 x_2 u2` of an `N x N x T0` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct TuckerFactors<T> {
    pub core: Tensor3<T>,
    pub u1: DMatrix<T>,
    pub u2: DMatrix<T>,
}

impl<T: Scalar> TuckerFactors<T> {
    pub fn new(core: Tensor3<T>, u1: DMatrix<T>, u2: DMatrix<T>) -> Result<Self> {
        let (r1, r2, _) = core.dims();
        let n = u1.nrows();
        if u1.ncols() != r1 || u2.ncols() != r2 || u2.nrows() != n {
            return Err(Error::shape(
                "TuckerFactors::new",
                format!("u1: Nx{r1}, u2: Nx{r2}"),
                format!(
                    "u1: {}x{}, u2: {}x{}",
                    u1.nrows(),
                    u1.ncols(),
                    u2.nrows(),
                    u2.ncols()
                ),
            ));
        }
        if r1 > n || r2 > n {
            return Err(Error::Parameter(format!(
                "Tucker ranks ({r1}, {r2}) exceed dimension {n}"
            )));
        }
        Ok(TuckerFactors { core, u1, u2 })
    }

    pub fn n(&self) -> usize {
        self.u1.nrows()
    }

    pub fn ranks(&self) -> (usize, usize) {
        (self.u1.ncols(), self.u2.ncols())
    }

    pub fn t0(&self) -> usize {
        self.core.dims().2
    }

    /// `core x_1 u1 x_2 u2`, one `U1 G_j U2'` per slice.
    pub fn reconstruct(&self) -> Tensor3<T> {
        let n = self.n();
        let t0 = self.t0();
        let mut out = Tensor3::zeros(n, n, t0);
        let mut tmp = DMatrix::zeros(n, self.u2.ncols());
        let u2t = self.u2.transpose();
        for k in 0..t0 {
            let g = self.core.slice(k);
            if g.iter().all(|x| *x == T::zero()) {
                continue;
            }
            tmp.gemm(T::one(), &self.u1, &g, T::zero());
            out.slice_mut(k).gemm(T::one(), &tmp, &u2t, T::zero());
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> TuckerFactors<U> {
        TuckerFactors {
            core: self.core.cast(),
            u1: self.u1.map(|x| U::lit(x.as_f64())),
            u2: self.u2.map(|x| U::lit(x.as_f64())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: (usize, usize, usize), seed: u64) -> Tensor3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0))
    }

    fn random_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn mode1_of_two_scalar_slices() {
        let t = Tensor3::from_vec((1, 1, 2), vec![3.0, 7.0]).unwrap();
        assert_eq!(t.matricize(Mode::One), DMatrix::from_row_slice(1, 2, &[3.0, 7.0]));
    }

    #[test]
    fn mode2_of_single_slice_is_transpose() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let t = Tensor3::from_slices(&[a.clone()]).unwrap();
        assert_eq!(t.matricize(Mode::Two), a.transpose());
    }

    #[test]
    fn matricize_matches_explicit_index_maps() {
        let (d1, d2, d3) = (3, 4, 5);
        let t = random_tensor((d1, d2, d3), 1);
        let m1 = t.matricize(Mode::One);
        let m2 = t.matricize(Mode::Two);
        let m3 = t.matricize(Mode::Three);
        for k in 0..d3 {
            for j in 0..d2 {
                for i in 0..d1 {
                    let v = t.get(i, j, k);
                    assert_eq!(m1[(i, k * d2 + j)], v);
                    assert_eq!(m2[(j, k * d1 + i)], v);
                    assert_eq!(m3[(k, j * d1 + i)], v);
                }
            }
        }
        for mode in [Mode::One, Mode::Two, Mode::Three] {
            let back = Tensor3::fold(&t.matricize(mode), mode, t.dims()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn mode3_rows_are_vectorized_slices() {
        let t = random_tensor((2, 3, 4), 2);
        let m3 = t.matricize(Mode::Three);
        for k in 0..4 {
            let v: Vec<f64> = t.slice(k).iter().copied().collect();
            let row: Vec<f64> = m3.row(k).iter().copied().collect();
            assert_eq!(v, row);
        }
    }

    #[test]
    fn invalid_mode_rejected() {
        assert!(matches!(Mode::try_from(4), Err(Error::Parameter(_))));
        assert!(matches!(Mode::try_from(0), Err(Error::Parameter(_))));
    }

    #[test]
    fn mode_product_identity_and_scalar() {
        let t = random_tensor((3, 2, 2), 3);
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(t.mode_product(&id, Mode::One).unwrap(), t);
        let c = Tensor3::from_vec((1, 1, 1), vec![1.5]).unwrap();
        let two = DMatrix::from_element(1, 1, 2.0);
        assert_eq!(c.mode_product(&two, Mode::One).unwrap().data(), &[3.0]);
    }

    #[test]
    fn mode_product_matches_triple_loop() {
        let t = random_tensor((3, 3, 2), 4);
        let b = random_matrix(2, 3, 5);
        let p1 = t.mode_product(&b, Mode::One).unwrap();
        assert_eq!(p1.dims(), (2, 3, 2));
        for l in 0..2 {
            for j in 0..3 {
                for k in 0..2 {
                    let want: f64 = (0..3).map(|i| t.get(i, j, k) * b[(l, i)]).sum();
                    assert_abs_diff_eq!(p1.get(l, j, k), want, epsilon = 1e-14);
                }
            }
        }
        let p2 = t.mode_product(&b, Mode::Two).unwrap();
        assert_eq!(p2.dims(), (3, 2, 2));
        for i in 0..3 {
            for l in 0..2 {
                for k in 0..2 {
                    let want: f64 = (0..3).map(|j| t.get(i, j, k) * b[(l, j)]).sum();
                    assert_abs_diff_eq!(p2.get(i, l, k), want, epsilon = 1e-14);
                }
            }
        }
        let c = random_matrix(4, 2, 6);
        let p3 = t.mode_product(&c, Mode::Three).unwrap();
        assert_eq!(p3.dims(), (3, 3, 4));
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..4 {
                    let want: f64 = (0..2).map(|k| t.get(i, j, k) * c[(l, k)]).sum();
                    assert_abs_diff_eq!(p3.get(i, j, l), want, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn mode_product_matricization_identities() {
        let t = random_tensor((3, 4, 2), 7);
        let m = random_matrix(5, 3, 8);
        let lhs = t.mode_product(&m, Mode::One).unwrap().matricize(Mode::One);
        let rhs = &m * t.matricize(Mode::One);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-13);
        let m = random_matrix(2, 4, 9);
        let lhs = t.mode_product(&m, Mode::Two).unwrap().matricize(Mode::Two);
        let rhs = &m * t.matricize(Mode::Two);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-13);
    }

    #[test]
    fn mode_product_shape_error() {
        let t = random_tensor((3, 3, 2), 10);
        let bad = random_matrix(2, 4, 11);
        assert!(matches!(t.mode_product(&bad, Mode::One), Err(Error::Shape { .. })));
    }

    #[test]
    fn reconstruct_trivial_cases() {
        let n = 3;
        let zero = TuckerFactors::new(
            Tensor3::zeros(2, 2, 3),
            random_matrix(n, 2, 1),
            random_matrix(n, 2, 2),
        )
        .unwrap();
        assert_eq!(zero.reconstruct(), Tensor3::zeros(n, n, 3));

        let core = random_tensor((n, n, 2), 3);
        let id = TuckerFactors::new(core.clone(), DMatrix::identity(n, n), DMatrix::identity(n, n))
            .unwrap();
        assert_eq!(id.reconstruct(), core);
    }

    #[test]
    fn reconstruct_matches_per_slice_products() {
        let f = TuckerFactors::new(
            random_tensor((2, 3, 4), 12),
            random_matrix(5, 2, 13),
            random_matrix(5, 3, 14),
        )
        .unwrap();
        let a = f.reconstruct();
        for k in 0..4 {
            let want = &f.u1 * f.core.slice(k) * f.u2.transpose();
            assert_abs_diff_eq!(a.slice(k).into_owned(), want, epsilon = 1e-13);
        }
        let via_modes = f
            .core
            .mode_product(&f.u1, Mode::One)
            .unwrap()
            .mode_product(&f.u2, Mode::Two)
            .unwrap();
        assert_abs_diff_eq!(a.matricize(Mode::One), via_modes.matricize(Mode::One), epsilon = 1e-13);
    }

    #[test]
    fn tucker_rank_bounds_rejected() {
        let r = TuckerFactors::new(
            Tensor3::<f64>::zeros(3, 1, 2),
            random_matrix(2, 3, 1),
            random_matrix(2, 1, 2),
        );
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    #[test]
    fn group_norms_basic() {
        assert_eq!(Tensor3::<f64>::zeros(2, 2, 3).group_norms(), vec![0.0; 3]);
        let t = Tensor3::from_slices(&[DMatrix::<f64>::identity(2, 2)]).unwrap();
        assert_abs_diff_eq!(t.group_norms()[0], 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn group_norm_sum_matches_elementwise() {
        let t = random_tensor((3, 2, 6), 15);
        let (d1, d2, d3) = t.dims();
        let mut want = 0.0;
        for k in 0..d3 {
            let mut ss = 0.0;
            for i in 0..d1 {
                for j in 0..d2 {
                    ss += t.get(i, j, k).powi(2);
                }
            }
            want += f64::sqrt(ss);
        }
        assert_abs_diff_eq!(t.group_norm_sum(), want, epsilon = 1e-13);
    }

    #[test]
    fn hard_threshold_forced_order() {
        let t = Tensor3::from_vec((1, 1, 3), vec![3.0, 1.0, 2.0]).unwrap();
        let (h, sup) = t.hard_threshold(2).unwrap();
        assert_eq!(h.data(), &[3.0, 0.0, 2.0]);
        assert_eq!(sup.as_slice(), &[1, 3]);
        let (h, sup) = t.hard_threshold(3).unwrap();
        assert_eq!(h, t);
        assert_eq!(sup.len(), 3);
    }

    #[test]
    fn hard_threshold_tie_prefers_smaller_lag() {
        let t = Tensor3::from_vec((1, 1, 4), vec![1.0, -2.0, 2.0, 2.0]).unwrap();
        let (_, sup) = t.hard_threshold(2).unwrap();
        assert_eq!(sup.as_slice(), &[2, 3]);
    }

    #[test]
    fn hard_threshold_matches_exhaustive_sort() {
        let t = random_tensor((2, 3, 50), 16);
        let norms = t.group_norms();
        let mut pairs: Vec<(f64, usize)> = norms.iter().copied().zip(1..).collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut want: Vec<usize> = pairs[..7].iter().map(|p| p.1).collect();
        want.sort();
        let (h, sup) = t.hard_threshold(7).unwrap();
        assert_eq!(sup.as_slice(), &want[..]);
        assert_eq!(h.active_slices(), 7);
    }

    #[test]
    fn hard_threshold_range_checked() {
        let t = random_tensor((2, 2, 3), 17);
        assert!(matches!(t.hard_threshold(0), Err(Error::Parameter(_))));
        assert!(matches!(t.hard_threshold(4), Err(Error::Parameter(_))));
    }

    #[test]
    fn soft_threshold_cases() {
        let t = random_tensor((2, 2, 3), 18);
        assert_eq!(t.soft_threshold(0.0).unwrap(), t);

        let unit = Tensor3::from_vec((1, 1, 1), vec![1.0]).unwrap();
        assert_eq!(unit.soft_threshold(2.0).unwrap().data(), &[0.0]);

        let three_i = Tensor3::from_slices(&[DMatrix::<f64>::identity(2, 2) * 3.0]).unwrap();
        let st = three_i.soft_threshold(2f64.sqrt()).unwrap();
        assert_abs_diff_eq!(st.get(0, 0, 0), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(st.get(1, 1, 0), 2.0, epsilon = 1e-14);
        assert_eq!(st.get(0, 1, 0), 0.0);

        assert!(matches!(t.soft_threshold(-1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn from_vec_validates() {
        assert!(Tensor3::<f64>::from_vec((2, 2, 2), vec![0.0; 7]).is_err());
        assert!(Tensor3::<f64>::from_vec((1, 1, 1), vec![f64::NAN]).is_err());
        assert!(Tensor3::<f64>::from_vec((0, 1, 1), vec![]).is_err());
    }

    #[test]
    fn single_precision_works() {
        let t = Tensor3::<f32>::from_fn((2, 2, 3), |i, j, k| (i + 2 * j + 3 * k) as f32);
        let (h, sup) = t.hard_threshold(1).unwrap();
        assert_eq!(sup.as_slice(), &[3]);
        assert_eq!(h.active_slices(), 1);
        let back = Tensor3::fold(&t.matricize(Mode::Two), Mode::Two, t.dims()).unwrap();
        assert_eq!(back, t);
    }
}
