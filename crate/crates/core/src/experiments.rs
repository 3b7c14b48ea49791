//! Monte Carlo harness: replicated simulate → estimate runs with
//! Kolmogorov–Smirnov, moment, consistency and `V`-limit diagnostics.
//!
//! Every replication draws its own seed from `(base_seed, rep, T index)`, and
//! results are gathered in index order, so the output does not depend on the
//! worker count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::inference::{auxiliary_supercritical_estimators, mle_b, Method};
use crate::io::fmt_f64;
use crate::model::{mean_y, ModelParams};
use crate::simulate::{integrate_path, simulate_path_with, SimOptions, DEFAULT_KAPPA};
use crate::transforms::{laplace_v, laplace_y};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticFlags {
    #[serde(default)]
    pub ks_normal: bool,
    #[serde(default)]
    pub moment_table: bool,
    #[serde(default)]
    pub consistency_curve: bool,
    #[serde(default)]
    pub v_transform: bool,
}

fn default_method() -> Method {
    Method::FullInformation
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub params: ModelParams,
    #[serde(rename = "T_grid")]
    pub horizons: Vec<f64>,
    pub dt: f64,
    pub n_reps: usize,
    pub base_seed: u64,
    #[serde(default = "default_method")]
    pub estimator_method: Method,
    #[serde(default)]
    pub diagnostics: DiagnosticFlags,
    /// Transform arguments for the `V`-limit check.
    #[serde(default)]
    pub u_grid: Vec<f64>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Validation(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.params.validate()?;
        if self.n_reps < 2 {
            return Err(Error::Validation("n_reps must be >= 2".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Validation(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.horizons.is_empty() {
            return Err(Error::Validation("T_grid must not be empty".into()));
        }
        if !(self.horizons[0] > 0.0) || self.horizons.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("T_grid must be positive and strictly increasing".into()));
        }
        for &t in &self.horizons {
            self.steps_for(t)?;
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Validation("kappa must be >= 0".into()));
        }
        if self.u_grid.iter().any(|u| !(*u <= 0.0) || !u.is_finite()) {
            return Err(Error::Validation("u_grid entries must be finite and <= 0".into()));
        }
        if self.diagnostics.v_transform && self.params.b >= 0.0 {
            return Err(Error::Validation("the V-limit check needs b < 0".into()));
        }
        Ok(())
    }

    /// Number of steps of size `dt` in `T`; `T` must be a multiple of `dt`.
    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        let n = (horizon / self.dt).round();
        if n < 1.0 || (n * self.dt - horizon).abs() > 1e-9 * horizon {
            return Err(Error::Validation(format!(
                "T = {horizon} is not a positive multiple of dt = {}",
                self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn max_horizon(&self) -> f64 {
        *self.horizons.last().expect("validated non-empty")
    }
}

/// Per-replication seed from a splitmix64 chain over `(base, rep, T index)`.
pub fn rep_seed(base_seed: u64, rep: usize, t_index: usize) -> u64 {
    fn splitmix64(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix64(splitmix64(splitmix64(base_seed) ^ rep as u64) ^ t_index as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepRow {
    pub rep: usize,
    pub t_index: usize,
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub b_hat: Option<f64>,
    pub scaled_error_deterministic: Option<f64>,
    pub scaled_error_random: Option<f64>,
    pub sigma2_hat: Option<f64>,
    pub y_t: Option<f64>,
    pub integral_y: Option<f64>,
    /// `-log(Y_T / Y_{T-1})`
    pub aux_log_ratio: Option<f64>,
    /// `-Y_T / ∫Y`
    pub aux_ratio: Option<f64>,
    pub error: Option<String>,
}

pub const ROW_HEADER: &str = "rep,t_index,seed,T,b_hat,scaled_error_deterministic,scaled_error_random,sigma2_hat,y_T,integral_y,aux_log_ratio,aux_ratio,error";

impl RepRow {
    fn failed(rep: usize, t_index: usize, seed: u64, horizon: f64, err: &Error) -> Self {
        Self {
            rep,
            t_index,
            seed,
            horizon,
            b_hat: None,
            scaled_error_deterministic: None,
            scaled_error_random: None,
            sigma2_hat: None,
            y_t: None,
            integral_y: None,
            aux_log_ratio: None,
            aux_ratio: None,
            error: Some(err.to_string()),
        }
    }

    pub fn to_csv_line(&self) -> String {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        let err = self
            .error
            .as_deref()
            .unwrap_or("")
            .replace([',', '\n', '\r'], ";");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.rep,
            self.t_index,
            self.seed,
            fmt_f64(self.horizon),
            opt(self.b_hat),
            opt(self.scaled_error_deterministic),
            opt(self.scaled_error_random),
            opt(self.sigma2_hat),
            opt(self.y_t),
            opt(self.integral_y),
            opt(self.aux_log_ratio),
            opt(self.aux_ratio),
            err
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRow {
    pub mc_mean: f64,
    pub standard_error: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonSummary {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_b_hat: f64,
    pub var_b_hat: f64,
    pub mean_scaled_deterministic: Option<f64>,
    pub var_scaled_deterministic: Option<f64>,
    pub mean_scaled_random: Option<f64>,
    pub var_scaled_random: Option<f64>,
    pub median_abs_error: f64,
    pub ks_random_scaled: Option<KsResult>,
    pub moment: Option<MomentRow>,
    /// Fractions of replications whose auxiliary estimators lie within 0.1 of `b`.
    pub aux_within_tenth: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyRow {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub median_abs_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VRow {
    pub u: f64,
    /// Mean of `exp{u e^{bT} Y_T}` over replications.
    pub mc_mean: f64,
    pub standard_error: f64,
    /// `E e^{uV}`
    pub limit: f64,
    /// `E exp{u e^{bT} Y_T}` for the exact process at the finite horizon.
    pub finite_horizon: f64,
    pub bias_budget: f64,
    pub within_budget: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VLimitReport {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub rows: Vec<VRow>,
    /// Share of replications with `|e^{bT}∫Y + e^{bT}Y_T/b| / max(e^{bT}Y_T, 0.01) < 0.05`.
    pub identity_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Runtime {
    pub seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub rows: Vec<RepRow>,
    pub summaries: Vec<HorizonSummary>,
    pub consistency: Option<Vec<ConsistencyRow>>,
    pub v_limit: Option<VLimitReport>,
    /// Wall-clock metadata; kept out of the serialized summary so that
    /// summaries are byte-identical across runs.
    #[serde(skip)]
    pub runtime: Runtime,
}

impl ExperimentResult {
    pub fn rows_csv(&self) -> String {
        let mut out = String::with_capacity(200 * (self.rows.len() + 1));
        out.push_str(ROW_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn rows_for(&self, t_index: usize) -> impl Iterator<Item = &RepRow> {
        self.rows.iter().filter(move |r| r.t_index == t_index)
    }
}

fn run_one(cfg: &ExperimentConfig, rep: usize, t_index: usize) -> RepRow {
    let horizon = cfg.horizons[t_index];
    let seed = rep_seed(cfg.base_seed, rep, t_index);
    let p = &cfg.params;
    let outcome = (|| -> Result<RepRow> {
        let n = cfg.steps_for(horizon)?;
        let opts = SimOptions {
            kappa: cfg.kappa,
            ..SimOptions::default()
        };
        let path = simulate_path_with(p, horizon, n, seed, opts)?;
        let report = mle_b(&path, cfg.estimator_method, p, Some(p.b))?;
        let aux = if p.b < 0.0 {
            auxiliary_supercritical_estimators(&path).ok()
        } else {
            None
        };
        Ok(RepRow {
            rep,
            t_index,
            seed,
            horizon,
            b_hat: Some(report.b_hat),
            scaled_error_deterministic: report.scaled_error_deterministic,
            scaled_error_random: report.scaled_error_random,
            sigma2_hat: Some(report.sigma2_hat),
            y_t: Some(path.terminal()),
            integral_y: Some(integrate_path(&path)),
            aux_log_ratio: aux.map(|a| a.0),
            aux_ratio: aux.map(|a| a.1),
            error: None,
        })
    })();
    outcome.unwrap_or_else(|e| RepRow::failed(rep, t_index, seed, horizon, &e))
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        f64::NAN
    };
    (m, v)
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn collect(rows: &[&RepRow], f: impl Fn(&RepRow) -> Option<f64>) -> Vec<f64> {
    rows.iter().filter_map(|r| f(r)).filter(|x| x.is_finite()).collect()
}

fn summarize(cfg: &ExperimentConfig, rows: &[RepRow], t_index: usize) -> Result<HorizonSummary> {
    let horizon = cfg.horizons[t_index];
    let b = cfg.params.b;
    let here: Vec<&RepRow> = rows.iter().filter(|r| r.t_index == t_index).collect();
    let ok: Vec<&RepRow> = here.iter().copied().filter(|r| r.error.is_none()).collect();
    let b_hats = collect(&ok, |r| r.b_hat);
    let (mean_b_hat, var_b_hat) = mean_var(&b_hats);
    let det = collect(&ok, |r| r.scaled_error_deterministic);
    let rnd = collect(&ok, |r| r.scaled_error_random);
    let opt_stats = |xs: &[f64]| {
        if xs.is_empty() {
            (None, None)
        } else {
            let (m, v) = mean_var(xs);
            (Some(m), Some(v))
        }
    };
    let (mean_det, var_det) = opt_stats(&det);
    let (mean_rnd, var_rnd) = opt_stats(&rnd);
    let mut abs_err: Vec<f64> = b_hats.iter().map(|x| (x - b).abs()).collect();
    let ks = if cfg.diagnostics.ks_normal && rnd.len() >= KS_MIN_SAMPLES {
        Some(ks_normal(&rnd)?)
    } else {
        None
    };
    let moment = if cfg.diagnostics.moment_table {
        let ys = collect(&ok, |r| r.y_t);
        let (m, v) = mean_var(&ys);
        Some(MomentRow {
            mc_mean: m,
            standard_error: (v / ys.len() as f64).sqrt(),
            exact: mean_y(&cfg.params, horizon),
        })
    } else {
        None
    };
    let aux_within_tenth = if b < 0.0 {
        let frac = |f: &dyn Fn(&RepRow) -> Option<f64>| {
            let hits = ok.iter().filter(|r| f(r).is_some_and(|x| (x - b).abs() <= 0.1)).count();
            hits as f64 / here.len().max(1) as f64
        };
        Some((frac(&|r| r.aux_log_ratio), frac(&|r| r.aux_ratio)))
    } else {
        None
    };
    Ok(HorizonSummary {
        horizon,
        n_ok: ok.len(),
        n_failed: here.len() - ok.len(),
        mean_b_hat,
        var_b_hat,
        mean_scaled_deterministic: mean_det,
        var_scaled_deterministic: var_det,
        mean_scaled_random: mean_rnd,
        var_scaled_random: var_rnd,
        median_abs_error: median(&mut abs_err),
        ks_random_scaled: ks,
        moment,
        aux_within_tenth,
    })
}

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<(T, usize)> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Validation("workers must be >= 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::NumericFault(format!("cannot start worker pool: {e}")))?;
    let n = pool.current_num_threads();
    Ok((pool.install(job), n))
}

/// Runs every `(rep, T)` replication and the requested diagnostics.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let n_t = cfg.horizons.len();
    let tasks = cfg.n_reps * n_t;
    let (rows, used) = with_pool(workers, || {
        (0..tasks)
            .into_par_iter()
            .map(|i| run_one(cfg, i / n_t, i % n_t))
            .collect::<Vec<_>>()
    })?;
    let summaries = (0..n_t)
        .map(|j| summarize(cfg, &rows, j))
        .collect::<Result<Vec<_>>>()?;
    let consistency = cfg.diagnostics.consistency_curve.then(|| consistency_from_summaries(&summaries));
    let v_limit = if cfg.diagnostics.v_transform {
        Some(v_limit_from_rows(cfg, &rows)?)
    } else {
        None
    };
    Ok(ExperimentResult {
        config: cfg.clone(),
        rows,
        summaries,
        consistency,
        v_limit,
        runtime: Runtime {
            seconds: start.elapsed().as_secs_f64(),
            workers: used,
        },
    })
}

fn consistency_from_summaries(summaries: &[HorizonSummary]) -> Vec<ConsistencyRow> {
    summaries
        .iter()
        .map(|s| ConsistencyRow {
            horizon: s.horizon,
            median_abs_error: s.median_abs_error,
        })
        .collect()
}

/// `(T, median |b̂_T - b|)` for every horizon of the grid.
pub fn consistency_curve(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<ConsistencyRow>> {
    let res = run_experiment(cfg, workers)?;
    Ok(consistency_from_summaries(&res.summaries))
}

fn v_limit_from_rows(cfg: &ExperimentConfig, rows: &[RepRow]) -> Result<VLimitReport> {
    let p = &cfg.params;
    let horizon = cfg.max_horizon();
    let last = cfg.horizons.len() - 1;
    let scale = (p.b * horizon).exp();
    let finals: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t_index == last && r.error.is_none())
        .filter_map(|r| Some((r.y_t? * scale, r.integral_y? * scale)))
        .collect();
    let n = finals.len();
    if n < 2 {
        return Err(Error::NotComputable("too few successful replications".into()));
    }
    // Weak Euler error of e^{bT}Y_T: the discrete mean grows like (1 - b dt)^n
    // instead of e^{-bT}, a relative shift of b²T dt/2, and |u x e^{ux}| <= 1/e.
    let euler = p.b * p.b * horizon * cfg.dt / std::f64::consts::E;
    let mut out = Vec::with_capacity(cfg.u_grid.len());
    for &u in &cfg.u_grid {
        let samples: Vec<f64> = finals.iter().map(|(v, _)| (u * v).exp()).collect();
        let (m, var) = mean_var(&samples);
        let se = (var / n as f64).sqrt();
        let limit = laplace_v(p, u)?.value;
        let finite_horizon = if u == 0.0 {
            1.0
        } else {
            laplace_y(p, -u * scale, horizon)?.value
        };
        let bias_budget = (finite_horizon - limit).abs() + euler;
        out.push(VRow {
            u,
            mc_mean: m,
            standard_error: se,
            limit,
            finite_horizon,
            bias_budget,
            within_budget: (m - limit).abs() <= 3.0 * se + bias_budget,
        });
    }
    let hits = finals
        .iter()
        .filter(|(v, i)| (i + v / p.b).abs() / v.max(0.01) < 0.05)
        .count();
    Ok(VLimitReport {
        horizon,
        rows: out,
        identity_fraction: hits as f64 / n as f64,
    })
}

/// Compares the Monte Carlo mean of `exp{u e^{bT} Y_T}` at the largest horizon
/// with `E e^{uV}`.
pub fn check_v_limit(cfg: &ExperimentConfig, u_grid: &[f64], workers: Option<usize>) -> Result<VLimitReport> {
    let mut cfg = cfg.clone();
    cfg.u_grid = u_grid.to_vec();
    cfg.diagnostics.v_transform = true;
    cfg.horizons = vec![cfg.max_horizon()];
    let res = run_experiment(&cfg, workers)?;
    res.v_limit
        .ok_or_else(|| Error::NotComputable("V-limit check did not run".into()))
}

pub const KS_MIN_SAMPLES: usize = 20;

/// One-sample Kolmogorov–Smirnov test against `N(0, 1)` with the asymptotic
/// Kolmogorov p-value (Stephens' small-sample adjustment of `√n D`).
pub fn ks_normal(samples: &[f64]) -> Result<KsResult> {
    let n = samples.len();
    if n < KS_MIN_SAMPLES {
        return Err(Error::Validation(format!(
            "KS test needs at least {KS_MIN_SAMPLES} samples, got {n}"
        )));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Validation("KS samples contain NaN".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let nf = n as f64;
    let statistic = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = normal.cdf(*x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic;
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_survival(lambda),
        n,
    })
}

/// `P(K > λ) = 2 Σ_{k>=1} (-1)^{k-1} exp(-2k²λ²)`.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
