use crate::params::{Params, AIC_KEYS, CONVERT_KEYS, DATA_KEYS, FIT_KEYS, FORECAST_KEYS, SELECT_KEYS, SIM_KEYS};
use crate::CliError;
use clap::ArgMatches;
use nalgebra::DMatrix;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use tuckervar::estimator::{grid_product, select_aic, AicRow, Triple};
use tuckervar::simulation::{
    run_error_vs_sparsity, run_ht_vs_st, run_rate_scaling, write_rows, DgpKind, DgpSpec, ExperimentOutput,
    RateSetting, StabilityGrid, T0Rule,
};
use tuckervar::{
    ar_to_ma, build_design, fit_agd, ma_to_ar, rolling_evaluate, FitConfig, FitResult, PanelData, RollingPlan,
    StepSize, Threshold,
};

fn config_path(m: &ArgMatches) -> Option<&Path> {
    m.get_one::<PathBuf>("config").map(PathBuf::as_path)
}

fn path_arg<'a>(m: &'a ArgMatches, name: &str) -> &'a Path {
    m.get_one::<PathBuf>(name).expect("required argument").as_path()
}

fn quiet(m: &ArgMatches) -> bool {
    m.get_flag("quiet")
}

/// Reports library errors on a file with the file name attached.
fn with_path(path: &Path, e: tuckervar::Error) -> CliError {
    let mut err = CliError::from(e);
    if !err.message.contains(&path.display().to_string()) {
        err.message = format!("{}: {}", path.display(), err.message);
    }
    err
}

fn load_panel(path: &Path, standardize: bool) -> Result<PanelData<f64>, CliError> {
    let data = PanelData::<f64>::read_csv(path).map_err(|e| with_path(path, e))?;
    Ok(if standardize { data.standardize() } else { data })
}

/// `floor(1.5 sqrt(T))`.
fn default_t0(t_len: usize) -> usize {
    ((1.5 * (t_len as f64).sqrt()) + 1e-9).floor().max(1.0) as usize
}

fn fit_config(p: &Params, t_len: usize, default_rank: usize) -> Result<FitConfig<f64>, CliError> {
    let t0 = p.opt("t0")?.unwrap_or_else(|| default_t0(t_len));
    let r1 = p.opt("r1")?.unwrap_or(default_rank);
    let r2 = p.opt("r2")?.unwrap_or(default_rank);
    let s: usize = p.opt("s")?.unwrap_or(2);
    let threshold = match p.raw("threshold").unwrap_or("hard") {
        "hard" => Threshold::Hard(s),
        "soft" => Threshold::Soft(
            p.opt("lambda")?
                .ok_or_else(|| CliError::usage("threshold = soft needs lambda"))?,
        ),
        "none" => Threshold::None,
        other => {
            return Err(CliError::usage(format!(
                "invalid threshold '{other}', expected hard, soft or none"
            )))
        }
    };
    let step = match p.opt("step")? {
        Some(eta) => StepSize::Fixed(eta),
        None => StepSize::Auto(p.get("step_scale")?),
    };
    let mut cfg = FitConfig::new(t0, r1, r2, s.max(1));
    cfg.threshold = threshold;
    cfg.reg_a = p.get("reg_a")?;
    cfg.reg_b = p.get("reg_b")?;
    cfg.step = step;
    cfg.max_iter = p.get("max_iter")?;
    cfg.warm_start_iters = p.get("warm_start_iters")?;
    cfg.warm_start_tol = p.opt("warm_start_tol")?;
    cfg.tol = p.get("tol")?;
    cfg.backtrack = p.flag("backtrack")?;
    cfg.seed = p.get("seed")?;
    Ok(cfg)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("fit");
    out.with_file_name(format!("{stem}{suffix}"))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn loadings(out: &mut String, title: &str, names: &[String], u: &DMatrix<f64>) {
    let _ = writeln!(out, "{title}:");
    let width = names.iter().map(String::len).max().unwrap_or(0);
    for (name, row) in names.iter().zip(u.row_iter()) {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:>10.4}")).collect();
        let _ = writeln!(out, "  {name:<width$} {}", vals.join(" "));
    }
}

fn fit_summary(data: &PanelData<f64>, cfg: &FitConfig<f64>, fit: &FitResult<f64>) -> String {
    let mut out = String::new();
    let (r1, r2) = fit.factors.ranks();
    let lags: Vec<String> = fit.support.iter().map(|l| l.to_string()).collect();
    let _ = writeln!(out, "series: N = {}, T = {}, T0 = {}", data.n(), data.t_len(), cfg.t0);
    let _ = writeln!(out, "ranks: r1 = {r1}, r2 = {r2}");
    let _ = writeln!(out, "threshold: {:?}", cfg.threshold);
    let _ = writeln!(out, "selected lags: {}", lags.join(", "));
    let _ = writeln!(
        out,
        "converged: {} after {} iterations, objective {}",
        fit.converged,
        fit.iterations_used,
        fit.objective_trace.last().copied().unwrap_or(f64::NAN)
    );
    let norms = fit.tensor().group_norms();
    let _ = writeln!(out, "slice norms of active lags:");
    for l in fit.support.iter() {
        let _ = writeln!(out, "  lag {l}: {:.6}", norms[l - 1]);
    }
    loadings(&mut out, "response factor loadings (U1)", data.names(), &fit.factors.u1);
    loadings(&mut out, "predictor factor loadings (U2)", data.names(), &fit.factors.u2);
    out
}

fn write_fit(out: &Path, summary: &str, fit: &FitResult<f64>, quiet: bool) -> Result<(), CliError> {
    write_text(out, &fit.to_json()?)?;
    write_text(&sibling(out, ".summary.txt"), summary)?;
    if !quiet {
        print!("{summary}");
    }
    Ok(())
}

fn read_grid(path: &Path) -> Result<Vec<Triple>, CliError> {
    #[derive(serde::Deserialize)]
    struct Row {
        r1: usize,
        r2: usize,
        s: usize,
    }
    let file = std::fs::File::open(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut grid = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        grid.push(Triple::new(row.r1, row.r2, row.s));
    }
    if grid.is_empty() {
        return Err(CliError::usage(format!("{}: grid is empty", path.display())));
    }
    Ok(grid)
}

fn run_selection(
    data: &PanelData<f64>,
    cfg: &FitConfig<f64>,
    grid: &[Triple],
    c: f64,
    out: &Path,
    quiet: bool,
) -> Result<(), CliError> {
    let d = build_design(data, cfg.t0)?;
    let sel = select_aic(&d, grid, c, cfg)?;
    let table_path = sibling(out, "_aic.csv");
    write_rows(&table_path, &sel.table)?;
    let chosen = FitConfig {
        r1: sel.best.r1,
        r2: sel.best.r2,
        threshold: Threshold::Hard(sel.best.s),
        ..cfg.clone()
    };
    let mut summary = format!(
        "AIC selection over {} candidates (c = {c}): r1 = {}, r2 = {}, s = {}\n",
        grid.len(),
        sel.best.r1,
        sel.best.r2,
        sel.best.s
    );
    let diverged = sel.table.iter().filter(|r: &&AicRow| r.diverged).count();
    if diverged > 0 {
        let _ = writeln!(summary, "diverged candidates: {diverged}");
    }
    summary.push_str(&fit_summary(data, &chosen, &sel.fit));
    write_fit(out, &summary, &sel.fit, quiet)
}

pub fn fit(m: &ArgMatches) -> Result<(), CliError> {
    let p = Params::resolve(m, &[FIT_KEYS, DATA_KEYS, AIC_KEYS], config_path(m))?;
    let data = load_panel(path_arg(m, "input"), p.flag("standardize")?)?;
    let cfg = fit_config(&p, data.t_len(), 2)?;
    let out = path_arg(m, "out");
    if let Some(grid_path) = m.get_one::<PathBuf>("select") {
        let grid = read_grid(grid_path)?;
        return run_selection(&data, &cfg, &grid, p.get("aic_c")?, out, quiet(m));
    }
    let d = build_design(&data, cfg.t0)?;
    let fit = fit_agd(&d, &cfg)?;
    write_fit(out, &fit_summary(&data, &cfg, &fit), &fit, quiet(m))
}

pub fn select(m: &ArgMatches) -> Result<(), CliError> {
    let p = Params::resolve(m, &[FIT_KEYS, DATA_KEYS, SELECT_KEYS, AIC_KEYS], config_path(m))?;
    let data = load_panel(path_arg(m, "input"), p.flag("standardize")?)?;
    let cfg = fit_config(&p, data.t_len(), 2)?;
    let grid = grid_product(&p.list("r1_grid")?, &p.list("r2_grid")?, &p.list("s_grid")?);
    run_selection(&data, &cfg, &grid, p.get("aic_c")?, path_arg(m, "out"), quiet(m))
}

fn parse_settings(raw: &str) -> Result<Vec<RateSetting>, CliError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<usize> = item
                .split(':')
                .map(|v| v.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::usage(format!("invalid setting '{item}', expected N:r:T")))?;
            match parts[..] {
                [n, r, t_len] => Ok(RateSetting { n, r, t_len }),
                _ => Err(CliError::usage(format!("invalid setting '{item}', expected N:r:T"))),
            }
        })
        .collect()
}

pub fn simulate(m: &ArgMatches) -> Result<(), CliError> {
    let p = Params::resolve(m, &[FIT_KEYS, SIM_KEYS], config_path(m))?;
    let experiment = m.get_one::<String>("experiment").expect("required argument").as_str();
    let kind: DgpKind = p.get::<String>("dgp")?.parse()?;
    let r: usize = p.get("r")?;
    let t_len: usize = p.get("t_len")?;
    let reps: usize = p.get("reps")?;
    let seed: u64 = p.get("seed")?;
    let spec = DgpSpec {
        kind,
        n: p.get("n")?,
        r,
        seed,
    };
    let out = path_arg(m, "out");
    let summary = match experiment {
        "error_vs_sparsity" => {
            let cfg = fit_config(&p, t_len, r)?;
            let report = run_error_vs_sparsity(&spec, t_len, cfg.t0, &p.list("s_grid")?, reps, &cfg)?;
            report.write_outputs(out, experiment)?;
            serde_json::to_string_pretty(&report.summary)?
        }
        "rate_scaling" => {
            let settings = parse_settings(p.raw("settings").unwrap_or(""))?;
            let rule: T0Rule = p.get::<String>("t0_rule")?.parse()?;
            let s = p.opt("s")?.unwrap_or(match kind {
                DgpKind::SeasonalVar411 => 5,
                DgpKind::Varma411 => 10,
            });
            let cfg = fit_config(&p, t_len, r)?;
            let report = run_rate_scaling(kind, &settings, rule, s, reps, seed, &cfg)?;
            report.write_outputs(out, experiment)?;
            serde_json::json!({
                "correlation": report.correlation(),
                "summary": report.summary,
            })
            .to_string()
        }
        "ht_vs_st" => {
            let grid = match p.opt::<String>("t0_grid")? {
                Some(_) => StabilityGrid::RunningOrder {
                    t_len,
                    t0_grid: p.list("t0_grid")?,
                },
                None => {
                    let t_grid: Vec<usize> = p.list("t_grid")?;
                    let shortest = t_grid.iter().copied().min().unwrap_or(t_len);
                    StabilityGrid::SampleSize {
                        t0: p.opt("t0")?.unwrap_or_else(|| default_t0(shortest)),
                        t_grid,
                    }
                }
            };
            let first_t0 = grid.settings()[0].1;
            let mut cfg = fit_config(&p, t_len, r)?;
            cfg.t0 = first_t0;
            let report = run_ht_vs_st(&spec, &grid, &p.list("s_grid")?, &p.list("lambda_grid")?, reps, &cfg)?;
            report.write_outputs(out, experiment)?;
            serde_json::to_string_pretty(&report.summary)?
        }
        other => return Err(CliError::usage(format!("unknown experiment '{other}'"))),
    };
    if !quiet(m) {
        println!("{summary}");
    }
    Ok(())
}

pub fn forecast(m: &ArgMatches) -> Result<(), CliError> {
    let p = Params::resolve(m, &[FIT_KEYS, DATA_KEYS, FORECAST_KEYS], config_path(m))?;
    let data = load_panel(path_arg(m, "input"), p.flag("standardize")?)?;
    let t_len = data.t_len();
    let cfg = fit_config(&p, t_len, 2)?;
    let refit_every: usize = p.get("refit_every")?;
    let mut plan = match p.opt::<usize>("first_origin")? {
        Some(first) => RollingPlan::new(first, t_len.saturating_sub(1), refit_every),
        None => RollingPlan::trailing(t_len, p.get("origins")?, refit_every),
    };
    if let Some(last) = p.opt("last_origin")? {
        plan.last_origin = last;
    }
    plan.original_units = p.flag("original_units")?;
    let metrics = rolling_evaluate(&data, &plan, &cfg)?;
    let out = path_arg(m, "out");
    metrics.write_outputs(out, "forecast")?;
    if !quiet(m) {
        println!("{}", serde_json::to_string(&metrics.summary())?);
    }
    Ok(())
}

fn read_coefficients(path: &Path) -> Result<(usize, Vec<DMatrix<f64>>), CliError> {
    #[derive(serde::Deserialize)]
    struct Entry {
        lag: usize,
        row: usize,
        col: usize,
        value: f64,
    }
    let file = std::fs::File::open(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut entries = Vec::new();
    for e in rdr.deserialize::<Entry>() {
        let e = e.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if e.lag == 0 || e.row == 0 || e.col == 0 {
            return Err(CliError::usage(format!("{}: lag, row and col are 1-based", path.display())));
        }
        entries.push(e);
    }
    let n = entries.iter().map(|e| e.row.max(e.col)).max().unwrap_or(0);
    let lags = entries.iter().map(|e| e.lag).max().unwrap_or(0);
    if n == 0 {
        return Err(CliError::usage(format!("{}: no coefficients", path.display())));
    }
    let mut mats = vec![DMatrix::zeros(n, n); lags];
    for e in entries {
        mats[e.lag - 1][(e.row - 1, e.col - 1)] = e.value;
    }
    Ok((n, mats))
}

fn write_coefficients(path: &Path, mats: &[DMatrix<f64>]) -> Result<(), CliError> {
    let mut text = String::from("lag,row,col,value\n");
    for (k, m) in mats.iter().enumerate() {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let _ = writeln!(text, "{},{},{},{}", k + 1, i + 1, j + 1, m[(i, j)]);
            }
        }
    }
    write_text(path, &text)
}

pub fn convert(m: &ArgMatches) -> Result<(), CliError> {
    let p = Params::resolve(m, &[CONVERT_KEYS], config_path(m))?;
    let (n, mats) = read_coefficients(path_arg(m, "input"))?;
    let horizon: usize = p.get("horizon")?;
    let converted = match p.raw("from").unwrap_or("ma") {
        "ma" => ma_to_ar(&mats, n, horizon)?,
        "ar" => ar_to_ma(&mats, n, horizon)?,
        other => return Err(CliError::usage(format!("invalid value '{other}' for from, expected ma or ar"))),
    };
    write_coefficients(path_arg(m, "out"), &converted)
}
