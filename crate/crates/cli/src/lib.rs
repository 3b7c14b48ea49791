//! `stable-cir` command-line front end.
//!
//! Every subcommand reads a versioned JSON config, validates it completely and
//! only then computes. Output files are rendered in memory and moved into
//! place at the end, so a failed run leaves nothing behind.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stable_cir::experiments::{run_experiment, ExperimentConfig, ExperimentResult, RepRow};
use stable_cir::inference::{mle_b, EstimateReport, Method};
use stable_cir::io::{path_to_csv, read_path, sidecar_path, write_atomically, PathMeta};
use stable_cir::oracle::{run_oracle_suite, OracleRow};
use stable_cir::simulate::{simulate_path_with, Path, SimOptions, DEFAULT_KAPPA};
use stable_cir::transforms::{joint_laplace, laplace_v, laplace_y, stationary_laplace, TransformResult};
use stable_cir::{Error as CoreError, ModelParams};

pub const CONFIG_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "stable-cir", version, about = "Simulate, transform and estimate the stable CIR process")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one path and write it as CSV plus a JSON sidecar.
    Simulate(Flags),
    /// Estimate b from a path file.
    Estimate(Flags),
    /// Evaluate a Laplace transform.
    Laplace(Flags),
    /// Run a Monte Carlo experiment.
    Experiment(Flags),
    /// Compare the α = 3/2 closed forms with the numeric engines.
    OracleCheck(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Progress messages on stderr.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Numeric(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        if e.is_numeric_fault() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(format!("json error: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Validation(msg.into()))
}

/// Parses `argv`, runs the subcommand and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return EXIT_VALIDATION;
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(f) => simulate(f),
        Command::Estimate(f) => estimate(f),
        Command::Laplace(f) => laplace(f),
        Command::Experiment(f) => experiment(f),
        Command::OracleCheck(f) => oracle_check(f),
    };
    match outcome {
        Ok(code) => code,
        Err(CliError::Validation(m)) => {
            eprintln!("error: validation: {}", one_line(&m));
            EXIT_VALIDATION
        }
        Err(CliError::Numeric(m)) => {
            eprintln!("error: numeric: {}", one_line(&m));
            EXIT_NUMERIC
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn read_config<C: DeserializeOwned>(flags: &Flags) -> CliResult<C> {
    let Some(path) = &flags.config else {
        return invalid("--config is required");
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(CONFIG_VERSION) => {}
        Some(v) => return invalid(format!("unsupported config version {v} (expected {CONFIG_VERSION})")),
        None => return invalid("config must carry an integer \"version\" field"),
    }
    Ok(serde_json::from_value(value)?)
}

fn reject(flag_set: bool, name: &str, sub: &str) -> CliResult<()> {
    if flag_set {
        return invalid(format!("{name} does not apply to `{sub}`"));
    }
    Ok(())
}

/// Writes to `--out` when given, otherwise to stdout.
fn emit(out: Option<&FsPath>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(p: &FsPath, text: &str) -> CliResult<()> {
    write_atomically(p, text.as_bytes()).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", p.display())))
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn note(flags: &Flags, msg: impl AsRef<str>) {
    if flags.verbose {
        eprintln!("{}", msg.as_ref());
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    #[allow(dead_code)]
    version: u32,
    params: ModelParams,
    #[serde(rename = "T")]
    horizon: f64,
    n_steps: usize,
    seed: Option<u64>,
    #[serde(default = "default_kappa")]
    kappa: f64,
    #[serde(default = "yes")]
    brownian: bool,
    #[serde(default = "yes")]
    stable: bool,
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

fn yes() -> bool {
    true
}

#[derive(Serialize)]
struct PathDocument<'a> {
    meta: PathMeta,
    t: &'a [f64],
    y: &'a [f64],
    #[serde(rename = "dW")]
    dw: Option<&'a [f64]>,
    #[serde(rename = "dL")]
    dl: Option<&'a [f64]>,
    jump_steps: Vec<usize>,
}

fn simulate(flags: &Flags) -> CliResult<i32> {
    reject(flags.workers.is_some(), "--workers", "simulate")?;
    let cfg: SimulateConfig = read_config(flags)?;
    let Some(seed) = flags.seed.or(cfg.seed) else {
        return invalid("a seed is required (config \"seed\" or --seed)");
    };
    let format = flags.format.unwrap_or(Format::Csv);
    if format == Format::Csv && flags.out.is_none() {
        return invalid("--out is required for CSV output");
    }
    if !(cfg.kappa >= 0.0) {
        return invalid("kappa must be >= 0");
    }
    let opts = SimOptions {
        kappa: cfg.kappa,
        brownian: cfg.brownian,
        stable: cfg.stable,
    };
    let path = simulate_path_with(&cfg.params, cfg.horizon, cfg.n_steps, seed, opts)?;
    note(flags, format!("simulated {} steps, {} projections", path.n_steps(), path.projections));
    match format {
        Format::Csv => {
            let out = flags.out.as_deref().expect("checked above");
            let csv = path_to_csv(&path);
            let meta = to_json(&PathMeta::of(&path))?;
            write_file(out, &csv)?;
            write_file(&sidecar_path(out), &meta)?;
        }
        Format::Json => emit(flags.out.as_deref(), &to_json(&path_document(&path))?)?,
    }
    Ok(EXIT_OK)
}

fn path_document(path: &Path) -> PathDocument<'_> {
    PathDocument {
        meta: PathMeta::of(path),
        t: &path.times,
        y: &path.values,
        dw: path.brownian_increments.as_deref(),
        dl: path.stable_increments.as_deref(),
        jump_steps: path.jump_records.iter().map(|j| j.step).collect(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateConfig {
    #[allow(dead_code)]
    version: u32,
    /// Path CSV; relative paths are taken from the config file's directory.
    path: PathBuf,
    #[serde(default = "full_information")]
    method: Method,
    /// Parameters assumed by the estimator; defaults to the sidecar's.
    params: Option<ModelParams>,
    /// Fills the scaled errors when given.
    true_b: Option<f64>,
}

fn full_information() -> Method {
    Method::FullInformation
}

fn estimate(flags: &Flags) -> CliResult<i32> {
    reject(flags.workers.is_some(), "--workers", "estimate")?;
    reject(flags.seed.is_some(), "--seed", "estimate")?;
    if flags.format == Some(Format::Csv) {
        return invalid("`estimate` writes JSON only");
    }
    let cfg: EstimateConfig = read_config(flags)?;
    let file = match (&flags.config, cfg.path.is_relative()) {
        (Some(c), true) => c.parent().unwrap_or(FsPath::new(".")).join(&cfg.path),
        _ => cfg.path.clone(),
    };
    if let Some(b) = cfg.true_b {
        if !b.is_finite() {
            return invalid("true_b must be finite");
        }
    }
    let path = read_path(&file)?;
    let params = cfg.params.unwrap_or(path.params);
    let report: EstimateReport = mle_b(&path, cfg.method, &params, cfg.true_b)?;
    emit(flags.out.as_deref(), &to_json(&report)?)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
enum LaplaceQuery {
    /// `E e^{-λ Y_t}`
    Y { lambda: f64, t: f64 },
    /// `E exp{u Y_t + v ∫_0^t Y}`
    #[serde(rename = "joint")]
    Joint { u: f64, v: f64, t: f64 },
    /// `∫ e^{-λ y} π(dy)`
    #[serde(rename = "stationary")]
    Stationary { lambda: f64 },
    /// `E e^{uV}`
    V { u: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaplaceConfig {
    #[allow(dead_code)]
    version: u32,
    params: ModelParams,
    query: LaplaceQuery,
}

#[derive(Serialize)]
struct LaplaceOutput {
    query: LaplaceQuery,
    value: f64,
    diagnostics: stable_cir::transforms::Diagnostics,
}

fn laplace(flags: &Flags) -> CliResult<i32> {
    reject(flags.workers.is_some(), "--workers", "laplace")?;
    reject(flags.seed.is_some(), "--seed", "laplace")?;
    if flags.format == Some(Format::Csv) {
        return invalid("`laplace` writes JSON only");
    }
    let cfg: LaplaceConfig = read_config(flags)?;
    let p = &cfg.params;
    let nonneg = |name: &str, x: f64| -> CliResult<()> {
        if !(x >= 0.0) || !x.is_finite() {
            return invalid(format!("{name} must be finite and >= 0, got {x}"));
        }
        Ok(())
    };
    let result: TransformResult = match cfg.query {
        LaplaceQuery::Y { lambda, t } => {
            nonneg("lambda", lambda)?;
            nonneg("t", t)?;
            laplace_y(p, lambda, t)?
        }
        LaplaceQuery::Joint { u, v, t } => {
            if !(u <= 0.0 && v <= 0.0) {
                return invalid("joint transform needs u <= 0 and v <= 0");
            }
            nonneg("t", t)?;
            joint_laplace(p, u, v, t)?
        }
        LaplaceQuery::Stationary { lambda } => stationary_laplace(p, lambda)?,
        LaplaceQuery::V { u } => laplace_v(p, u)?,
    };
    let out = LaplaceOutput {
        query: cfg.query,
        value: result.value,
        diagnostics: result.diagnostics,
    };
    emit(flags.out.as_deref(), &to_json(&out)?)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct FullExperiment<'a> {
    #[serde(flatten)]
    result: &'a ExperimentResult,
    rows: &'a [RepRow],
}

fn experiment(flags: &Flags) -> CliResult<i32> {
    let mut cfg: ExperimentConfig = read_config(flags)?;
    if let Some(seed) = flags.seed {
        cfg.base_seed = seed;
    }
    cfg.validate()?;
    if flags.workers == Some(0) {
        return invalid("--workers must be >= 1");
    }
    let Some(out) = flags.out.as_deref() else {
        return invalid("--out is required for `experiment`");
    };
    let res = run_experiment(&cfg, flags.workers)?;
    note(
        flags,
        format!(
            "{} replications in {:.2} s on {} workers",
            res.rows.len(),
            res.runtime.seconds,
            res.runtime.workers
        ),
    );
    match flags.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let csv = res.rows_csv();
            let summary = to_json(&res)?;
            write_file(out, &csv)?;
            write_file(&sidecar_path(out), &summary)?;
        }
        Format::Json => {
            let doc = FullExperiment {
                result: &res,
                rows: &res.rows,
            };
            write_file(out, &to_json(&doc)?)?;
        }
    }
    Ok(EXIT_OK)
}

fn oracle_table(rows: &[OracleRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<24} {:<36} {:>24} {:>24} {:>9} {:>6}", "form", "argument", "closed_form", "numeric", "error", "result");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<24} {:<36} {:>24.16e} {:>24.16e} {:>9.2e} {:>6}",
            r.form,
            r.argument,
            r.closed_form,
            r.numeric,
            r.error,
            if r.pass { "pass" } else { "fail" }
        );
    }
    s
}

fn oracle_csv(rows: &[OracleRow]) -> String {
    use stable_cir::io::fmt_f64;
    let mut s = String::from("form,argument,closed_form,numeric,error,tolerance,result\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.form,
            r.argument.replace(',', ";"),
            fmt_f64(r.closed_form),
            fmt_f64(r.numeric),
            fmt_f64(r.error),
            fmt_f64(r.tolerance),
            if r.pass { "pass" } else { "fail" }
        );
    }
    s
}

fn oracle_check(flags: &Flags) -> CliResult<i32> {
    reject(flags.workers.is_some(), "--workers", "oracle-check")?;
    reject(flags.seed.is_some(), "--seed", "oracle-check")?;
    reject(flags.config.is_some(), "--config", "oracle-check")?;
    let rows = run_oracle_suite()?;
    let text = match flags.format {
        None => oracle_table(&rows),
        Some(Format::Csv) => oracle_csv(&rows),
        Some(Format::Json) => to_json(&rows)?,
    };
    emit(flags.out.as_deref(), &text)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        eprintln!("error: numeric: {failed} of {} oracle rows failed", rows.len());
        return Ok(EXIT_NUMERIC);
    }
    note(flags, format!("all {} oracle rows pass", rows.len()));
    Ok(EXIT_OK)
}
