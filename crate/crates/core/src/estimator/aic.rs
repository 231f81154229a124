//! Information-criterion selection of Tucker ranks and sparsity.

use super::agd::{fit_agd_after_warm_start, init_factors, warm_start, FitConfig, FitResult, Threshold};
use super::design::DesignMatrices;
use super::objective::loss;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::Serialize;

/// Candidate `(r1, r2, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Triple {
    pub r1: usize,
    pub r2: usize,
    pub s: usize,
}

impl Triple {
    pub fn new(r1: usize, r2: usize, s: usize) -> Self {
        Triple { r1, r2, s }
    }
}

/// All triples of the Cartesian product, in lexicographic order.
pub fn grid_product(r1: &[usize], r2: &[usize], s: &[usize]) -> Vec<Triple> {
    let mut out = Vec::with_capacity(r1.len() * r2.len() * s.len());
    for &a in r1 {
        for &b in r2 {
            for &c in s {
                out.push(Triple::new(a, b, c));
            }
        }
    }
    out
}

/// One row of the selection table. `aic` and `loss` are empty for diverged fits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AicRow {
    pub r1: usize,
    pub r2: usize,
    pub s: usize,
    pub loss: Option<f64>,
    pub aic: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct AicSelection<T> {
    pub best: Triple,
    pub table: Vec<AicRow>,
    /// Fit at the selected triple.
    pub fit: FitResult<T>,
}

/// `log(loss) + c ((r1 + r2) N + log T0) s / T1`.
pub fn aic_value(loss: f64, triple: Triple, n: usize, t0: usize, t1: usize, c: f64) -> f64 {
    let dof = ((triple.r1 + triple.r2) * n) as f64 + (t0 as f64).ln();
    loss.ln() + c * dof * triple.s as f64 / t1 as f64
}

/// Fits every triple with hard thresholding and returns the AIC minimizer.
///
/// Ties go to the smaller `s`, then the smaller `r1 + r2`, then grid order.
/// Triples sharing `(r1, r2)` share one warm start, which leaves every fit
/// identical to a direct [`super::fit_agd`] call.
pub fn select_aic<T: Scalar>(
    d: &DesignMatrices<T>,
    grid: &[Triple],
    c: f64,
    base_cfg: &FitConfig<T>,
) -> Result<AicSelection<T>> {
    if grid.is_empty() {
        return Err(Error::Parameter("AIC grid is empty".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Parameter(format!("AIC constant must be positive, got {c}")));
    }
    let cfg_for = |t: Triple| FitConfig {
        t0: d.t0(),
        r1: t.r1,
        r2: t.r2,
        threshold: Threshold::Hard(t.s),
        ..base_cfg.clone()
    };
    for &t in grid {
        cfg_for(t).validate(d.n())?;
    }
    let mut rank_pairs: Vec<(usize, usize)> = grid.iter().map(|t| (t.r1, t.r2)).collect();
    rank_pairs.sort_unstable();
    rank_pairs.dedup();

    let per_pair: Vec<Vec<(usize, Option<FitResult<T>>)>> = rank_pairs
        .par_iter()
        .map(|&(r1, r2)| -> Result<Vec<(usize, Option<FitResult<T>>)>> {
            let members: Vec<usize> = (0..grid.len()).filter(|&i| (grid[i].r1, grid[i].r2) == (r1, r2)).collect();
            let cfg0 = cfg_for(grid[members[0]]);
            let init = init_factors(d.n(), r1, r2, d.t0(), cfg0.reg_b, cfg0.seed)?;
            let warm = match warm_start(d, &cfg0, init) {
                Ok(w) => w,
                Err(Error::Divergence { .. }) => return Ok(members.into_iter().map(|i| (i, None)).collect()),
                Err(e) => return Err(e),
            };
            members
                .into_iter()
                .map(|i| match fit_agd_after_warm_start(d, &cfg_for(grid[i]), &warm) {
                    Ok(f) => Ok((i, Some(f))),
                    Err(Error::Divergence { .. }) => Ok((i, None)),
                    Err(e) => Err(e),
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut fits: Vec<Option<FitResult<T>>> = (0..grid.len()).map(|_| None).collect();
    for (i, f) in per_pair.into_iter().flatten() {
        fits[i] = f;
    }
    let mut table = Vec::with_capacity(grid.len());
    for (t, fit) in grid.iter().zip(&fits) {
        let row = match fit {
            Some(f) => {
                let l = loss(&f.tensor(), d)?.as_f64();
                AicRow {
                    r1: t.r1,
                    r2: t.r2,
                    s: t.s,
                    loss: Some(l),
                    aic: Some(aic_value(l, *t, d.n(), d.t0(), d.t1(), c)),
                    diverged: false,
                }
            }
            None => AicRow {
                r1: t.r1,
                r2: t.r2,
                s: t.s,
                loss: None,
                aic: None,
                diverged: true,
            },
        };
        table.push(row);
    }
    let best_idx = (0..grid.len())
        .filter(|&i| table[i].aic.is_some_and(f64::is_finite))
        .min_by(|&a, &b| {
            let (ta, tb) = (grid[a], grid[b]);
            table[a]
                .aic
                .unwrap()
                .total_cmp(&table[b].aic.unwrap())
                .then(ta.s.cmp(&tb.s))
                .then((ta.r1 + ta.r2).cmp(&(tb.r1 + tb.r2)))
                .then(a.cmp(&b))
        })
        .ok_or_else(|| Error::Selection("every fit in the grid diverged".into()))?;
    let fit = fits[best_idx].take().expect("selected fit exists");
    Ok(AicSelection {
        best: grid[best_idx],
        table,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{build_design, fit_agd};
    use crate::process::simulate;
    use crate::simulation::{make_dgp, DgpKind, DgpSpec};

    fn design() -> DesignMatrices<f64> {
        let spec = DgpSpec {
            kind: DgpKind::SeasonalVar411,
            n: 5,
            r: 1,
            seed: 3,
        };
        let model = make_dgp::<f64>(&spec).unwrap();
        let data = simulate(&model, 200, 100, 4).unwrap();
        build_design(&data, 6).unwrap()
    }

    #[test]
    fn aic_formula() {
        let v = aic_value(2.0, Triple::new(1, 2, 3), 4, 5, 100, 0.5);
        let expect = 2.0f64.ln() + 0.5 * (12.0 + 5.0f64.ln()) * 3.0 / 100.0;
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn single_triple_grid_selects_it() {
        let d = design();
        let cfg = FitConfig::new(6, 1, 1, 1);
        let sel = select_aic(&d, &[Triple::new(1, 1, 2)], 1.0, &cfg).unwrap();
        assert_eq!(sel.best, Triple::new(1, 1, 2));
        assert_eq!(sel.table.len(), 1);
    }

    #[test]
    fn shared_warm_start_matches_direct_fit() {
        let d = design();
        let cfg = FitConfig::new(6, 1, 1, 1);
        let grid = grid_product(&[1, 2], &[1], &[1, 2, 3]);
        let sel = select_aic(&d, &grid, 0.3, &cfg).unwrap();
        for (t, row) in grid.iter().zip(&sel.table) {
            let direct = fit_agd(&d, &FitConfig::new(6, t.r1, t.r2, t.s)).unwrap();
            let l = loss(&direct.tensor(), &d).unwrap();
            assert_eq!(row.loss, Some(l));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let d = design();
        let cfg = FitConfig::new(6, 1, 1, 1);
        assert!(select_aic(&d, &[], 1.0, &cfg).is_err());
        assert!(select_aic(&d, &[Triple::new(1, 1, 1)], 0.0, &cfg).is_err());
        assert!(select_aic(&d, &[Triple::new(1, 1, 7)], 1.0, &cfg).is_err());
    }

    #[test]
    fn all_diverged_is_selection_error() {
        let d = design();
        let mut cfg = FitConfig::new(6, 1, 1, 1);
        cfg.step = crate::estimator::StepSize::Fixed(1e3);
        cfg.backtrack = false;
        let err = select_aic(&d, &[Triple::new(1, 1, 1)], 1.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Selection(_)), "{err}");
    }
}
