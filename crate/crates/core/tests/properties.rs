use nalgebra::DMatrix;
use proptest::prelude::*;
use tuckervar::estimator::objective::{grad_full, loss};
use tuckervar::linalg::numerical_rank;
use tuckervar::simulation::ErrorDecomposition;
use tuckervar::*;

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..5, 1usize..5, 1usize..6)
}

fn tensor() -> impl Strategy<Value = Tensor3<f64>> {
    dims().prop_flat_map(|d| {
        prop::collection::vec(-2.0f64..2.0, d.0 * d.1 * d.2).prop_map(move |v| Tensor3::from_vec(d, v).unwrap())
    })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn factors() -> impl Strategy<Value = TuckerFactors<f64>> {
    (2usize..6, 1usize..3, 1usize..3, 1usize..5).prop_flat_map(|(n, r1, r2, t0)| {
        (
            prop::collection::vec(-1.0f64..1.0, r1 * r2 * t0),
            matrix(n, r1),
            matrix(n, r2),
        )
            .prop_map(move |(g, u1, u2)| {
                TuckerFactors::new(Tensor3::from_vec((r1, r2, t0), g).unwrap(), u1, u2).unwrap()
            })
    })
}

fn panel(n: usize, t_len: usize) -> impl Strategy<Value = PanelData<f64>> {
    matrix(n, t_len).prop_map(move |m| PanelData::new(m, (0..n).map(|i| format!("y{i}")).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matricize_fold_round_trip(t in tensor()) {
        for mode in [Mode::One, Mode::Two, Mode::Three] {
            let m = t.matricize(mode);
            prop_assert_eq!(Tensor3::fold(&m, mode, t.dims()).unwrap(), t.clone());
        }
    }

    #[test]
    fn matricization_index_maps(t in tensor()) {
        let (d1, d2, d3) = t.dims();
        let m1 = t.matricize(Mode::One);
        let m2 = t.matricize(Mode::Two);
        let m3 = t.matricize(Mode::Three);
        for i in 0..d1 {
            for j in 0..d2 {
                for k in 0..d3 {
                    let v = t.get(i, j, k);
                    prop_assert_eq!(m1[(i, k * d2 + j)], v);
                    prop_assert_eq!(m2[(j, k * d1 + i)], v);
                    prop_assert_eq!(m3[(k, j * d1 + i)], v);
                }
            }
        }
    }

    #[test]
    fn mode_products_match_loops(t in tensor(), rows in 1usize..4, seed in any::<u64>()) {
        let (d1, d2, d3) = t.dims();
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5 };
        let b1 = DMatrix::from_fn(rows, d1, |_, _| next());
        let b2 = DMatrix::from_fn(rows, d2, |_, _| next());
        let p1 = t.mode_product(&b1, Mode::One).unwrap();
        let p2 = t.mode_product(&b2, Mode::Two).unwrap();
        for k in 0..d3 {
            for l in 0..rows {
                for j in 0..d2 {
                    let want: f64 = (0..d1).map(|i| t.get(i, j, k) * b1[(l, i)]).sum();
                    prop_assert!((p1.get(l, j, k) - want).abs() < 1e-12);
                }
                for i in 0..d1 {
                    let want: f64 = (0..d2).map(|j| t.get(i, j, k) * b2[(l, j)]).sum();
                    prop_assert!((p2.get(i, l, k) - want).abs() < 1e-12);
                }
            }
        }
        prop_assert!(t.mode_product(&DMatrix::zeros(2, d1 + 1), Mode::One).is_err());
    }

    #[test]
    fn reconstruction_has_bounded_ranks(f in factors()) {
        let a = f.reconstruct();
        let (r1, r2) = f.ranks();
        prop_assert_eq!(a.dims(), (f.n(), f.n(), f.t0()));
        prop_assert!(numerical_rank(&a.matricize(Mode::One), 1e-10) <= r1);
        prop_assert!(numerical_rank(&a.matricize(Mode::Two), 1e-10) <= r2);
    }

    #[test]
    fn hard_threshold_keeps_largest_slices(t in tensor(), s_raw in 1usize..6) {
        let d3 = t.dims().2;
        let s = s_raw.min(d3);
        let (h, support) = t.hard_threshold(s).unwrap();
        prop_assert_eq!(support.len(), s);
        prop_assert!(support.as_slice().windows(2).all(|w| w[0] < w[1]));
        let norms = t.group_norms();
        let kept_min = support.iter().map(|l| norms[l - 1]).fold(f64::INFINITY, f64::min);
        for lag in 1..=d3 {
            let hn = h.group_norms()[lag - 1];
            if support.contains(lag) {
                prop_assert_eq!(hn, norms[lag - 1]);
            } else {
                prop_assert_eq!(hn, 0.0);
                prop_assert!(norms[lag - 1] <= kept_min);
            }
        }
        prop_assert_eq!(h.hard_threshold(s).unwrap().0, h.clone());
        prop_assert!(h.norm_squared() <= t.norm_squared());
    }

    #[test]
    fn soft_threshold_shrinks_norms(t in tensor(), lambda in 0.0f64..3.0) {
        let st = t.soft_threshold(lambda).unwrap();
        for (before, after) in t.group_norms().iter().zip(st.group_norms()) {
            let want = (before - lambda).max(0.0);
            prop_assert!((after - want).abs() < 1e-12 * (1.0 + before));
        }
        prop_assert!(st.is_finite());
        prop_assert_eq!(t.soft_threshold(0.0).unwrap(), t.clone());
    }

    #[test]
    fn support_is_strictly_increasing(lags in prop::collection::vec(1usize..10, 0..12)) {
        let s = GroupSupport::new(lags.clone(), 9).unwrap();
        prop_assert!(s.len() <= 9);
        prop_assert!(s.as_slice().windows(2).all(|w| w[0] < w[1]));
        for l in &lags {
            prop_assert!(s.contains(*l));
        }
    }

    #[test]
    fn ma_ar_round_trip(n in 1usize..4, q in 1usize..4, scale in 0.05f64..0.4, seed in any::<u64>()) {
        let mut rng = linalg::rng_from_seed(seed);
        let psi: Vec<DMatrix<f64>> = (0..q)
            .map(|_| linalg::standard_normal_matrix::<f64, _>(n, n, &mut rng) * scale)
            .collect();
        let a = ma_to_ar(&psi, n, 15).unwrap();
        let back = ar_to_ma(&a, n, 15).unwrap();
        for (j, b) in back.iter().enumerate() {
            let want = psi.get(j).cloned().unwrap_or_else(|| DMatrix::zeros(n, n));
            prop_assert!((b - want).amax() < 1e-10);
        }
    }

    #[test]
    fn loss_gradient_is_exact_for_quadratic(
        n in 1usize..4, t0 in 1usize..4, seed in any::<u64>(), lag in 0usize..4, i in 0usize..4, j in 0usize..4,
    ) {
        // the loss is quadratic in A, so a central difference is exact up to rounding
        let mut rng = linalg::rng_from_seed(seed);
        let series = linalg::standard_normal_matrix::<f64, _>(n, 30, &mut rng);
        let d = DesignMatrices::from_series(series, t0).unwrap();
        let a = Tensor3::from_vec((n, n, t0), linalg::standard_normal_matrix::<f64, _>(n * n * t0, 1, &mut rng).as_slice().to_vec()).unwrap();
        let g = grad_full(&a, &d).unwrap();
        let (i, j, k) = (i % n, j % n, lag % t0);
        let h = 1e-3;
        let bump = |delta: f64| {
            let mut v = a.data().to_vec();
            v[k * n * n + j * n + i] += delta;
            loss(&Tensor3::from_vec((n, n, t0), v).unwrap(), &d).unwrap()
        };
        let fd = (bump(h) - bump(-h)) / (2.0 * h);
        prop_assert!((fd - g.get(i, j, k)).abs() < 1e-8 * (1.0 + fd.abs()));
    }

    #[test]
    fn forecast_ignores_the_future(f in factors(), seed in any::<u64>()) {
        let n = f.n();
        let t0 = f.t0();
        let t_len = t0 + 6;
        let mut rng = linalg::rng_from_seed(seed);
        let base = linalg::standard_normal_matrix::<f64, _>(n, t_len, &mut rng);
        let names: Vec<String> = (0..n).map(|i| format!("y{i}")).collect();
        let t = t0 + 3;
        let mut changed = base.clone();
        for col in (t - 1)..t_len {
            for r in 0..n {
                changed[(r, col)] += 10.0;
            }
        }
        let p1 = one_step_forecast(&f, &PanelData::new(base, names.clone()).unwrap(), t, t0).unwrap();
        let p2 = one_step_forecast(&f, &PanelData::new(changed, names).unwrap(), t, t0).unwrap();
        prop_assert_eq!(p1, p2);
    }

    #[test]
    fn forecast_matches_full_tensor_and_permutes(f in factors(), data in panel(5, 12), perm_seed in any::<u64>()) {
        prop_assume!(f.n() == 5 && f.t0() < 11);
        let t0 = f.t0();
        let t = 12;
        let a = f.reconstruct();
        let pred = one_step_forecast(&f, &data, t, t0).unwrap();
        let mut want = nalgebra::DVector::zeros(5);
        for k in 0..t0 {
            want += a.slice(k) * data.values().column(t - 2 - k);
        }
        prop_assert!((&pred - &want).amax() < 1e-12);

        let mut perm: Vec<usize> = (0..5).collect();
        let mut s = perm_seed;
        for i in (1..5).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let p = DMatrix::from_fn(5, 5, |r, c| if perm[r] == c { 1.0 } else { 0.0 });
        let fp = TuckerFactors::new(f.core.clone(), &p * &f.u1, &p * &f.u2).unwrap();
        let dp = PanelData::new(&p * data.values(), data.names().to_vec()).unwrap();
        let pp = one_step_forecast(&fp, &dp, t, t0).unwrap();
        prop_assert!((pp - &p * pred).amax() < 1e-12);
    }

    #[test]
    fn error_decomposition_adds_up(fitted in tensor(), noise in 0.0f64..1.0) {
        let truth = fitted.scale(1.0 + noise);
        let dec = ErrorDecomposition::new(&fitted, &truth, 0.5).unwrap();
        let total = fitted.sub(&truth).unwrap().norm_squared();
        prop_assert!((dec.parameter - dec.estimation - dec.approximation).abs() < 1e-12);
        prop_assert!((dec.parameter - total).abs() < 1e-9 * (1.0 + total));
    }
}

#[test]
fn white_noise_forecast_error_matches_variance() {
    // zero coefficients on white noise: MSFE estimates N times the variance
    let n = 4;
    let sigma2 = 2.0;
    let model = GlpModel::white_noise(DMatrix::<f64>::identity(n, n) * sigma2).unwrap();
    let data = simulate(&model, 600, 0, 17).unwrap();
    let t0 = 3;
    let zero = TuckerFactors::new(
        Tensor3::zeros(1, 1, t0),
        DMatrix::from_element(n, 1, 1.0),
        DMatrix::from_element(n, 1, 1.0),
    )
    .unwrap();
    let errors: Vec<f64> = (500..600)
        .map(|origin| {
            let pred = one_step_forecast(&zero, &data, origin + 1, t0).unwrap();
            (data.values().column(origin) - pred).norm_squared()
        })
        .collect();
    let msfe = errors.iter().sum::<f64>() / errors.len() as f64;
    let want = n as f64 * sigma2;
    assert!((msfe - want).abs() < 0.15 * want, "msfe {msfe} vs {want}");
}
