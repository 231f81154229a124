//! Least-squares loss of the VAR sieve and its gradients, both with respect
//! to the full coefficient tensor and to the Tucker factors.

use super::design::DesignMatrices;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Mode, Tensor3, TuckerFactors};
use nalgebra::DMatrix;

fn check_tensor<T: Scalar>(op: &'static str, a: &Tensor3<T>, d: &DesignMatrices<T>) -> Result<()> {
    let want = (d.n(), d.n(), d.t0());
    if a.dims() != want {
        return Err(Error::shape(op, format!("{want:?}"), format!("{:?}", a.dims())));
    }
    Ok(())
}

fn check_factors<T: Scalar>(op: &'static str, f: &TuckerFactors<T>, d: &DesignMatrices<T>) -> Result<()> {
    if f.n() != d.n() || f.t0() != d.t0() {
        return Err(Error::shape(
            op,
            format!("N={}, T0={}", d.n(), d.t0()),
            format!("N={}, T0={}", f.n(), f.t0()),
        ));
    }
    Ok(())
}

/// `(2 T1)^{-1} |Y - A_(1) X|_F^2`.
pub fn loss<T: Scalar>(a: &Tensor3<T>, d: &DesignMatrices<T>) -> Result<T> {
    check_tensor("loss", a, d)?;
    let resid = d.y() - a.mode1_view() * d.x();
    Ok(resid.norm_squared() / (T::lit(2.0) * T::from_count(d.t1())))
}

/// Gradient of [`loss`]: `[grad]_(1) = -T1^{-1} (Y - A_(1) X) X'`, folded.
pub fn grad_full<T: Scalar>(a: &Tensor3<T>, d: &DesignMatrices<T>) -> Result<Tensor3<T>> {
    check_tensor("grad_full", a, d)?;
    let resid = d.y() - a.mode1_view() * d.x();
    let g = resid * d.x().transpose() * (-T::one() / T::from_count(d.t1()));
    Tensor3::fold(&g, Mode::One, a.dims())
}

/// Scale-balancing penalty `(a/4) sum_i |U_i'U_i - b^2 I|_F^2`.
///
/// The `1/4` makes `a U_i (U_i'U_i - b^2 I)` its exact gradient, which is the
/// correction used in the factor updates.
pub fn balance_penalty<T: Scalar>(f: &TuckerFactors<T>, reg_a: T, reg_b: T) -> T {
    let b2 = reg_b * reg_b;
    let dev = |u: &DMatrix<T>| {
        let mut g = u.tr_mul(u);
        for i in 0..g.nrows() {
            g[(i, i)] -= b2;
        }
        g.norm_squared()
    };
    reg_a / T::lit(4.0) * (dev(&f.u1) + dev(&f.u2))
}

/// `a U (U'U - b^2 I)`.
pub(crate) fn balance_gradient<T: Scalar>(u: &DMatrix<T>, reg_a: T, reg_b: T) -> DMatrix<T> {
    let mut g = u.tr_mul(u);
    let b2 = reg_b * reg_b;
    for i in 0..g.nrows() {
        g[(i, i)] -= b2;
    }
    u * g * reg_a
}

/// Penalized objective `L(reconstruct(f)) + balance_penalty(f)`.
pub fn penalized_loss<T: Scalar>(f: &TuckerFactors<T>, d: &DesignMatrices<T>, reg_a: T, reg_b: T) -> Result<T> {
    check_factors("penalized_loss", f, d)?;
    Ok(loss(&f.reconstruct(), d)? + balance_penalty(f, reg_a, reg_b))
}

/// Blockwise gradients of the penalized objective.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGradients<T> {
    pub u1: DMatrix<T>,
    pub u2: DMatrix<T>,
    pub core: Tensor3<T>,
}

impl<T: Scalar> FactorGradients<T> {
    pub fn norm(&self) -> T {
        (self.u1.norm_squared() + self.u2.norm_squared() + self.core.norm_squared()).sqrt()
    }
}

/// Factor gradients through the full-tensor gradient:
///
/// - `gU1 = [grad]_(1) (I ⊗ U2) G_(1)' + a U1 (U1'U1 - b^2 I)`
/// - `gU2 = [grad]_(2) (I ⊗ U1) G_(2)' + a U2 (U2'U2 - b^2 I)`
/// - `gG  = grad x_1 U1' x_2 U2'`
pub fn grad_factors<T: Scalar>(
    f: &TuckerFactors<T>,
    d: &DesignMatrices<T>,
    reg_a: T,
    reg_b: T,
) -> Result<FactorGradients<T>> {
    check_factors("grad_factors", f, d)?;
    let grad = grad_full(&f.reconstruct(), d)?;
    // (grad x_2 U2')_(1) = [grad]_(1) (I ⊗ U2)
    let right = grad.mode_product(&f.u2.transpose(), Mode::Two)?;
    let left = grad.mode_product(&f.u1.transpose(), Mode::One)?;
    let mut u1 = right.matricize(Mode::One) * f.core.matricize(Mode::One).transpose();
    u1 += balance_gradient(&f.u1, reg_a, reg_b);
    let mut u2 = left.matricize(Mode::Two) * f.core.matricize(Mode::Two).transpose();
    u2 += balance_gradient(&f.u2, reg_a, reg_b);
    let core = left.mode_product(&f.u2.transpose(), Mode::Two)?;
    Ok(FactorGradients { u1, u2, core })
}

/// Loss and unpenalized factor gradients at `f`, computed without forming
/// the `N x N x T0` gradient: the lagged series are projected onto `U2`
/// once, so each evaluation costs `O(T T0 r1 r2 + N T (r1 + r2))`.
#[derive(Debug, Clone)]
pub(crate) struct FactorEval<T> {
    pub loss: T,
    pub grads: FactorGradients<T>,
}

pub(crate) fn evaluate_factors<T: Scalar>(f: &TuckerFactors<T>, d: &DesignMatrices<T>) -> FactorEval<T> {
    let t0 = d.t0();
    let t1 = d.t1();
    let t = t1 + t0;
    let (r1, r2) = f.ranks();
    let scale = -T::one() / T::from_count(t1);
    let g = f.core.data();
    // core entry (i, j, lag k + 1)
    let gij = |i: usize, j: usize, k: usize| g[(k * r2 + j) * r1 + i];
    // rows t0-1-k .. t0-1-k+t1 of a T-long column: the lag-(k+1) window
    let window = |k: usize| t0 - 1 - k..t0 - 1 - k + t1;

    // everything below is time-major: columns are long, ranks are short
    let zt = d.series_time_major() * &f.u2;
    let active: Vec<usize> = (0..t0)
        .filter(|&k| f.core.slice(k).iter().any(|v| *v != T::zero()))
        .collect();

    // response factors F'[c, i] = sum_j (G_j z_{t-j})_i
    let mut fac = DMatrix::<T>::zeros(t1, r1);
    for i in 0..r1 {
        let out = fac.column_mut(i);
        let out = out.data.into_slice_mut();
        for &k in &active {
            for j in 0..r2 {
                let w = gij(i, j, k);
                if w == T::zero() {
                    continue;
                }
                let col = &zt.as_slice()[j * t..(j + 1) * t];
                let src = &col[window(k)];
                out.iter_mut().zip(src).for_each(|(o, &z)| *o += w * z);
            }
        }
    }
    let mut resid = d.response_time_major().clone();
    resid.gemm(-T::one(), &fac, &f.u1.transpose(), T::one());
    let loss = resid.norm_squared() / (T::lit(2.0) * T::from_count(t1));

    let q = &resid * &f.u1;
    let mut core = Tensor3::zeros(r1, r2, t0);
    for k in 0..t0 {
        let mut slice = core.slice_mut(k);
        for j in 0..r2 {
            let col = &zt.as_slice()[j * t..(j + 1) * t];
            let zw = &col[window(k)];
            for i in 0..r1 {
                let qi = &q.as_slice()[i * t1..(i + 1) * t1];
                let dot = qi.iter().zip(zw).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                slice[(i, j)] = scale * dot;
            }
        }
    }

    let u1 = resid.tr_mul(&fac) * scale;

    // V'[t - j] accumulates G_j' q_t
    let mut v = DMatrix::<T>::zeros(t, r2);
    for j in 0..r2 {
        let col = v.column_mut(j);
        let col = col.data.into_slice_mut();
        for &k in &active {
            let dst = &mut col[window(k)];
            for i in 0..r1 {
                let w = gij(i, j, k);
                if w == T::zero() {
                    continue;
                }
                let qi = &q.as_slice()[i * t1..(i + 1) * t1];
                dst.iter_mut().zip(qi).for_each(|(o, &x)| *o += w * x);
            }
        }
    }
    let u2 = d.series_time_major().tr_mul(&v) * scale;

    FactorEval {
        loss,
        grads: FactorGradients { u1, u2, core },
    }
}
