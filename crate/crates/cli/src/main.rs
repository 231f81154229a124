mod commands;
mod params;

use clap::{Arg, ArgAction, ArgMatches, Command};
use params::{add_keys, AIC_KEYS, CONVERT_KEYS, DATA_KEYS, FIT_KEYS, FORECAST_KEYS, SELECT_KEYS, SIM_KEYS};
use std::path::PathBuf;
use std::process::ExitCode;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

const AFTER_HELP: &str = "\
Options can also be set in a config file of `key = value` lines (--config);
keys are the long flag names with '-' or '_'. Flags override the file, the
file overrides the defaults.

Exit codes:
  0  success
  2  usage, input/output or parse error
  3  numerical failure (fit diverged, model selection failed)";

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<tuckervar::Error> for CliError {
    fn from(e: tuckervar::Error) -> Self {
        let code = match e {
            tuckervar::Error::Divergence { .. } | tuckervar::Error::Selection(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::usage(format!("JSON error: {e}"))
    }
}

fn input_arg() -> Arg {
    Arg::new("input")
        .value_name("CSV")
        .required(true)
        .value_parser(clap::value_parser!(PathBuf))
        .help("panel CSV: header of series names, one row per time step")
}

fn out_arg(default: &'static str, help: &'static str) -> Arg {
    Arg::new("out")
        .long("out")
        .short('o')
        .value_name("PATH")
        .default_value(default)
        .value_parser(clap::value_parser!(PathBuf))
        .help(help)
}

pub fn cli() -> Command {
    let fit = Command::new("fit")
        .about("Fit the sparse low-rank VAR sieve to a panel")
        .arg(input_arg())
        .arg(out_arg("fit.json", "fit JSON; the summary goes next to it as <stem>.summary.txt"))
        .arg(
            Arg::new("select")
                .long("select")
                .value_name("GRID")
                .value_parser(clap::value_parser!(PathBuf))
                .help("choose (r1, r2, s) by AIC over a CSV grid with columns r1,r2,s; the table goes to <stem>_aic.csv"),
        );
    let fit = add_keys(add_keys(add_keys(fit, FIT_KEYS), DATA_KEYS), AIC_KEYS);

    let select = Command::new("select")
        .about("Choose (r1, r2, s) by AIC over a rank and sparsity grid")
        .arg(input_arg())
        .arg(out_arg("select.json", "fit JSON at the selected triple; the table goes to <stem>_aic.csv"));
    let select = add_keys(add_keys(add_keys(add_keys(select, FIT_KEYS), DATA_KEYS), SELECT_KEYS), AIC_KEYS);

    let simulate = Command::new("simulate")
        .about("Run a simulation experiment and write tidy CSV and JSON results")
        .arg(
            Arg::new("experiment")
                .required(true)
                .value_parser(["error_vs_sparsity", "rate_scaling", "ht_vs_st"])
                .help("experiment to run"),
        )
        .arg(out_arg("sim_out", "output directory"));
    let simulate = add_keys(add_keys(simulate, FIT_KEYS), SIM_KEYS);

    let forecast = Command::new("forecast")
        .about("Rolling one-step-ahead forecast evaluation (MSFE, MAFE)")
        .arg(input_arg())
        .arg(out_arg("forecast_out", "output directory"));
    let forecast = add_keys(add_keys(add_keys(forecast, FIT_KEYS), DATA_KEYS), FORECAST_KEYS);

    let convert = Command::new("convert")
        .about("Convert MA coefficients to VAR(inf) coefficients or back")
        .arg(
            Arg::new("input")
                .value_name("COEF_CSV")
                .required(true)
                .value_parser(clap::value_parser!(PathBuf))
                .help("coefficient CSV with columns lag,row,col,value (1-based)"),
        )
        .arg(out_arg("converted.csv", "output coefficient CSV"));
    let convert = add_keys(convert, CONVERT_KEYS);

    Command::new("tuckervar")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Sparse, low Tucker-rank VAR sieve estimation for high-dimensional time series")
        .after_help(AFTER_HELP)
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("threads")
                .long("threads")
                .global(true)
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .help("worker threads; falls back to TUCKERVAR_THREADS, then all cores. Results do not depend on it"),
        )
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value config file"),
        )
        .arg(
            Arg::new("quiet")
                .long("quiet")
                .short('q')
                .global(true)
                .action(ArgAction::SetTrue)
                .help("do not print summaries to stdout"),
        )
        .subcommands([fit, select, simulate, forecast, convert].map(|c| c.after_help(AFTER_HELP)))
}

fn thread_count(m: &ArgMatches) -> Result<Option<usize>, CliError> {
    if let Some(n) = m.get_one::<usize>("threads") {
        return Ok(Some(*n));
    }
    match std::env::var("TUCKERVAR_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::usage(format!("TUCKERVAR_THREADS must be a positive integer, got '{v}'"))),
        _ => Ok(None),
    }
}

fn run(m: &ArgMatches) -> Result<(), CliError> {
    if let Some(n) = thread_count(m)? {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot configure threads: {e}")))?;
    }
    match m.subcommand() {
        Some(("fit", sub)) => commands::fit(sub),
        Some(("select", sub)) => commands::select(sub),
        Some(("simulate", sub)) => commands::simulate(sub),
        Some(("forecast", sub)) => commands::forecast(sub),
        Some(("convert", sub)) => commands::convert(sub),
        _ => Err(CliError::usage("missing subcommand")),
    }
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
