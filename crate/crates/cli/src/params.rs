//! Option table shared by flags and config files.

use clap::parser::ValueSource;
use clap::{Arg, ArgMatches, Command};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
    pub default: Option<&'static str>,
}

const fn key(name: &'static str, help: &'static str, default: Option<&'static str>) -> Key {
    Key { name, help, default }
}

pub const FIT_KEYS: &[Key] = &[
    key("t0", "running order T0 [default: floor(1.5 sqrt(T))]", None),
    key("r1", "response rank [default: 2; simulate: r]", None),
    key("r2", "predictor rank [default: 2; simulate: r]", None),
    key("s", "active lags kept by hard thresholding [default: 2; rate_scaling: 5 seasonal, 10 varma]", None),
    key("threshold", "hard, soft or none", Some("hard")),
    key("lambda", "soft-threshold level (with threshold = soft)", None),
    key("reg_a", "weight a of the factor balance penalty", Some("1")),
    key("reg_b", "target scale b of the factor balance penalty", Some("1")),
    key("step_scale", "automatic step: eta = scale / max(b^4 L, a b^2)", Some("1")),
    key("step", "fixed step size; overrides step_scale", None),
    key("max_iter", "iteration cap", Some("2000")),
    key("warm_start_iters", "unthresholded iterations before thresholding", Some("10")),
    key("warm_start_tol", "also warm up until the relative change is below this", None),
    key("tol", "stop when the relative change of the tensor is below this", Some("1e-6")),
    key("backtrack", "halve the step when the objective increases (true/false)", Some("true")),
    key("seed", "random seed (factor initialization; master seed for simulate)", Some("0")),
];

pub const DATA_KEYS: &[Key] = &[key(
    "standardize",
    "standardize each series to zero mean and unit variance before fitting (true/false)",
    Some("true"),
)];

pub const SELECT_KEYS: &[Key] = &[
    key("r1_grid", "comma-separated r1 candidates", Some("1,2,3")),
    key("r2_grid", "comma-separated r2 candidates", Some("1,2,3")),
    key("s_grid", "comma-separated s candidates", Some("1,2,3,4")),
];

pub const AIC_KEYS: &[Key] = &[key("aic_c", "constant c of the AIC penalty", Some("0.004"))];

pub const SIM_KEYS: &[Key] = &[
    key("dgp", "data generating process: varma or seasonal", Some("seasonal")),
    key("n", "dimension N", Some("10")),
    key("r", "rank of the coefficient row/column space", Some("2")),
    key("t_len", "sample size T", Some("800")),
    key("reps", "replications", Some("10")),
    key("s_grid", "comma-separated sparsity levels (a-b for a range)", Some("3-12")),
    key("lambda_grid", "comma-separated soft-threshold levels", Some("0.01,0.02,0.05,0.1,0.2")),
    key("t_grid", "comma-separated sample sizes (ht_vs_st)", Some("400,800")),
    key("t0_grid", "comma-separated running orders (ht_vs_st); overrides t_grid", None),
    key("settings", "rate_scaling settings as N:r:T triples, comma-separated", Some("10:2:300,10:2:400,10:2:600,10:2:800")),
    key("t0_rule", "rate_scaling running order: quarter, third, half or fixed:K", Some("half")),
];

pub const FORECAST_KEYS: &[Key] = &[
    key("first_origin", "first forecast origin (observations used by the first fit)", None),
    key("last_origin", "last forecast origin [default: T - 1]", None),
    key("origins", "number of trailing origins when first_origin is not set", Some("20")),
    key("refit_every", "refit interval in origins; 0 fits once", Some("1")),
    key("original_units", "report errors in original units (true/false)", Some("false")),
];

pub const CONVERT_KEYS: &[Key] = &[
    key("from", "coefficients in the input file: ma or ar", Some("ma")),
    key("horizon", "number of output lags", Some("20")),
];

/// Adds one `--kebab-case` flag per key.
pub fn add_keys(mut cmd: Command, keys: &[Key]) -> Command {
    for k in keys {
        let mut help = k.help.to_string();
        if let Some(d) = k.default {
            help.push_str(&format!(" [default: {d}]"));
        }
        cmd = cmd.arg(
            Arg::new(k.name)
                .long(k.name.replace('_', "-"))
                .value_name("VALUE")
                .help(help),
        );
    }
    cmd
}

/// Effective key values: flags over config file over defaults.
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    pub fn resolve(matches: &ArgMatches, keys: &[&[Key]], config: Option<&Path>) -> Result<Self, CliError> {
        let all: Vec<&Key> = keys.iter().flat_map(|k| k.iter()).collect();
        let mut values = BTreeMap::new();
        for k in &all {
            if let Some(d) = k.default {
                values.insert(k.name.to_string(), d.to_string());
            }
        }
        if let Some(path) = config {
            for (name, value) in read_config(path)? {
                if !all.iter().any(|k| k.name == name) {
                    return Err(CliError::usage(format!(
                        "{}: unknown key '{name}' for this command",
                        path.display()
                    )));
                }
                values.insert(name, value);
            }
        }
        for k in &all {
            if matches.value_source(k.name) == Some(ValueSource::CommandLine) {
                if let Some(v) = matches.get_one::<String>(k.name) {
                    values.insert(k.name.to_string(), v.clone());
                }
            }
        }
        Ok(Params { values })
    }

    pub fn raw(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }

    pub fn opt<T: FromStr>(&self, name: &str) -> Result<Option<T>, CliError> {
        match self.raw(name) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| CliError::usage(format!("invalid value '{v}' for {name}"))),
        }
    }

    pub fn get<T: FromStr>(&self, name: &str) -> Result<T, CliError> {
        self.opt(name)?
            .ok_or_else(|| CliError::usage(format!("missing value for {name}")))
    }

    pub fn flag(&self, name: &str) -> Result<bool, CliError> {
        match self.raw(name).map(str::trim) {
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") | None => Ok(false),
            Some(v) => Err(CliError::usage(format!("invalid value '{v}' for {name}, expected true or false"))),
        }
    }

    /// Comma-separated list; `a-b` expands to an inclusive integer range.
    pub fn list<T: FromStr>(&self, name: &str) -> Result<Vec<T>, CliError> {
        let raw = self.raw(name).unwrap_or("");
        let bad = |v: &str| CliError::usage(format!("invalid entry '{v}' in {name}"));
        let mut out = Vec::new();
        for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let range = item
                .split_once('-')
                .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)));
            match range {
                Some((a, b)) => {
                    for v in a..=b {
                        out.push(v.to_string().parse().map_err(|_| bad(item))?);
                    }
                }
                None => out.push(item.parse().map_err(|_| bad(item))?),
            }
        }
        if out.is_empty() {
            return Err(CliError::usage(format!("{name} is empty")));
        }
        Ok(out)
    }
}

/// Reads `key = value` lines; `#` starts a comment. Keys may use `-` or `_`.
pub fn read_config(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::usage(format!(
                "{}:{}: expected key = value",
                path.display(),
                no + 1
            )));
        };
        out.push((k.trim().replace('-', "_"), v.trim().to_string()));
    }
    Ok(out)
}
