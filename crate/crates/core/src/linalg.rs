//! Small dense linear-algebra and RNG helpers.

use crate::scalar::Scalar;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// splitmix64 finalizer; maps `(seed, stream)` to an independent 64-bit seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal_matrix<T: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<T> {
    // fill column by column so the draw order is independent of T
    let mut m = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            let z: f64 = rng.sample(StandardNormal);
            m[(r, c)] = T::lit(z);
        }
    }
    m
}

/// Haar-distributed `n x n` orthogonal matrix: QR of a Gaussian matrix with
/// the signs of `R`'s diagonal normalized to be positive.
pub fn haar_orthogonal<T: Scalar, R: Rng>(n: usize, rng: &mut R) -> DMatrix<T> {
    let z = standard_normal_matrix::<T, _>(n, n, rng);
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .fold(T::zero(), |a, b| a.max(b))
}

/// Largest eigenvalue of `x x' / scale` by power iteration on `x`.
pub fn top_gram_eigenvalue<T: Scalar>(x: &DMatrix<T>, scale: T) -> T {
    let p = x.nrows();
    if p == 0 || x.ncols() == 0 {
        return T::zero();
    }
    let mut v = nalgebra::DVector::from_element(p, T::one() / T::from_count(p).sqrt());
    let mut lambda = T::zero();
    for _ in 0..500 {
        let w = x.tr_mul(&v);
        let mut u = x * w;
        let norm = u.norm();
        if norm == T::zero() {
            return T::zero();
        }
        u /= norm;
        let next = norm / scale;
        let done = (next - lambda).abs() <= T::lit(1e-7) * next;
        lambda = next;
        v = u;
        if done {
            break;
        }
    }
    lambda
}

/// Singular values in decreasing order.
pub fn singular_values<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    let mut sv: Vec<T> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> usize {
    let sv = singular_values(m);
    match sv.first() {
        Some(&top) if top > T::zero() => sv.iter().filter(|&&s| s > rel_tol * top).count(),
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn haar_is_orthogonal_and_seeded() {
        let q: DMatrix<f64> = haar_orthogonal(6, &mut rng_from_seed(3));
        let qtq = q.transpose() * &q;
        assert_abs_diff_eq!(qtq, DMatrix::identity(6, 6), epsilon = 1e-12);
        let again: DMatrix<f64> = haar_orthogonal(6, &mut rng_from_seed(3));
        assert_eq!(q, again);
        let other: DMatrix<f64> = haar_orthogonal(6, &mut rng_from_seed(4));
        assert_ne!(q, other);
    }

    #[test]
    fn spectral_radius_of_rotation_and_diag() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, -0.9, 0.1]));
        assert_abs_diff_eq!(spectral_radius(&d), 0.9, epsilon = 1e-12);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.8, 0.8, 0.0]);
        assert_abs_diff_eq!(spectral_radius(&rot), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let mut rng = rng_from_seed(9);
        let x: DMatrix<f64> = standard_normal_matrix(5, 40, &mut rng);
        let gram = &x * x.transpose() / 40.0;
        let top = gram.symmetric_eigenvalues().max();
        assert_abs_diff_eq!(top_gram_eigenvalue(&x, 40.0), top, epsilon = 1e-5 * top);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 7), derive_seed(5, 7));
    }

    #[test]
    fn rank_counting() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(numerical_rank(&a, 1e-9), 2);
    }
}
