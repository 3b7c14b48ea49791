//! Maximum likelihood estimation of `b` from a discretely sampled path, with
//! the quadratic-variation statistic for `σ²` and the supercritical
//! auxiliary estimators.
//!
//! `b̂_T = -(Y_T - y₀ - aT - δ∫Y_{s-}^{1/α} dL_s) / ∫Y_s ds`, with every integral
//! replaced by its left-endpoint sum on the simulation grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::StableLaw;
use crate::model::ModelParams;
use crate::simulate::{integrate_path, jump_threshold, stable_coefficient, Path};

/// How the stable-noise integral `δ∫Y^{1/α}dL` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Uses the stored increments `ΔL_k`.
    FullInformation,
    /// Reconstructs the integral from the observed values only.
    PathOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub b_hat: f64,
    pub sigma2_hat: f64,
    pub integral_y: f64,
    pub jump_integral: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub scaled_error_deterministic: Option<f64>,
    pub scaled_error_random: Option<f64>,
    pub method: Method,
}

const MAX_DRIFT_ITERATIONS: usize = 50;

fn positive_integral(path: &Path) -> Result<f64> {
    let integral = integrate_path(path);
    if !(integral > 0.0) {
        return Err(Error::ZeroIntegral);
    }
    Ok(integral)
}

/// Per-step jump detection level on the `L` scale, combining the stable cutoff
/// with a `κ`-standard-deviation guard against Brownian moves.
fn detection_level(p: &ModelParams, y: f64, dt: f64, kappa: f64) -> f64 {
    let base = jump_threshold(dt, p.alpha, kappa);
    let coeff = stable_coefficient(p, y);
    if p.sigma == 0.0 || coeff == 0.0 {
        return base;
    }
    base.max(kappa * p.sigma * (y * dt).sqrt() / coeff)
}

/// Steps whose increment, net of the drift `(a - b y) dt`, exceeds the
/// detection level.
fn detected_jumps(path: &Path, drift_b: f64) -> impl Iterator<Item = usize> + '_ {
    let p = &path.params;
    let kappa = effective_kappa(path);
    (0..path.n_steps()).filter(move |&k| {
        let y = path.values[k];
        let coeff = stable_coefficient(p, y);
        coeff > 0.0
            && path.values[k + 1] - y - (p.a - drift_b * y) * path.dt
                > coeff * detection_level(p, y, path.dt, kappa)
    })
}

fn effective_kappa(path: &Path) -> f64 {
    if path.kappa > 0.0 {
        path.kappa
    } else {
        crate::simulate::DEFAULT_KAPPA
    }
}

/// `(Σ(ΔY_k)² - Σ(recorded jumps)²) / (dt ΣY_k)`, clamped at 0.
///
/// Paths carrying their noise use the recorded jump sizes; observation-only
/// paths drop the increments classified as jumps.
pub fn estimate_sigma2(path: &Path) -> Result<f64> {
    if path.values.len() < 2 {
        return Err(Error::Validation("a path needs at least two points".into()));
    }
    let integral = positive_integral(path)?;
    let qv: f64 = path
        .values
        .windows(2)
        .map(|w| (w[1] - w[0]).powi(2))
        .sum();
    let jumps: f64 = if path.stable_increments.is_some() {
        path.jump_records.iter().map(|j| j.delta_y * j.delta_y).sum()
    } else {
        detected_jumps(path, path.params.b)
            .map(|k| (path.values[k + 1] - path.values[k]).powi(2))
            .sum()
    };
    Ok(((qv - jumps) / integral).max(0.0))
}

/// `δ∫_0^T Y_{s-}^{1/α} dL_s`.
///
/// With stored increments this is the exact left-endpoint sum used by the
/// scheme. Otherwise the detected jump increments (net of drift) are summed
/// and the compensator of the jumps above each step's detection level is
/// subtracted.
pub fn reconstruct_jump_integral(path: &Path, use_stored_increments: bool) -> Result<f64> {
    let p = &path.params;
    let n = path.n_steps();
    if use_stored_increments {
        let Some(dls) = &path.stable_increments else {
            return Err(Error::Validation(
                "full-information estimation needs stored stable increments".into(),
            ));
        };
        if dls.len() != n {
            return Err(Error::Validation("increment count does not match the path".into()));
        }
        return Ok(path.values[..n]
            .iter()
            .zip(dls)
            .map(|(y, dl)| stable_coefficient(p, *y) * dl)
            .sum());
    }
    let law = StableLaw::new(p.alpha)?;
    let kappa = effective_kappa(path);
    // Expected detected mass per step: the jumps above the level, plus the
    // second-order excess from Brownian moves pushing increments across it,
    // `f(cε) σ²y dt (1 + α/2)` with `f` the density of `c ΔL` at the level.
    let diffusion_excess = 1.0 + 0.5 * p.alpha;
    let mut compensator = 0.0;
    for &y in &path.values[..n] {
        let coeff = stable_coefficient(p, y);
        if coeff > 0.0 {
            let eps = detection_level(p, y, path.dt, kappa);
            let density = law.levy_constant() * eps.powf(-1.0 - p.alpha) / coeff;
            compensator += coeff * law.compensator_above(eps)
                + density * p.sigma * p.sigma * y * path.dt * diffusion_excess;
        }
    }
    compensator *= path.dt;
    let integral = positive_integral(path)?;
    let drift_time = path.dt * n as f64;
    let increment = path.terminal() - path.values[0];
    // The drift inside the detected increments depends on the unknown b, so
    // iterate the plug-in estimate to its fixed point.
    let mut b = 0.0;
    let mut jump_integral = 0.0;
    for _ in 0..MAX_DRIFT_ITERATIONS {
        let detected: f64 = detected_jumps(path, b)
            .map(|k| {
                let y = path.values[k];
                path.values[k + 1] - y - (p.a - b * y) * path.dt
            })
            .sum();
        jump_integral = detected - compensator;
        let next = -(increment - p.a * drift_time - jump_integral) / integral;
        if (next - b).abs() <= 1e-14 * next.abs().max(1.0) {
            break;
        }
        b = next;
    }
    Ok(jump_integral)
}

/// The MLE of `b` with the other parameters taken from `p`. `true_b` fills
/// the scaled errors.
pub fn mle_b(path: &Path, method: Method, p: &ModelParams, true_b: Option<f64>) -> Result<EstimateReport> {
    let view = Path {
        params: *p,
        ..path.clone()
    };
    let integral = positive_integral(&view)?;
    let jump_integral = reconstruct_jump_integral(&view, method == Method::FullInformation)?;
    let n = view.n_steps();
    let drift_time = view.dt * n as f64;
    let increment = view.terminal() - view.values[0];
    let b_hat = -(increment - p.a * drift_time - jump_integral) / integral;
    let sigma2_hat = estimate_sigma2(&view)?;
    let horizon = view.horizon();
    let (det, rnd) = match true_b {
        None => (None, None),
        Some(b) => {
            let err = b_hat - b;
            let det = if b > 0.0 {
                Some(horizon.sqrt() * err)
            } else if b < 0.0 {
                Some((-b * horizon / 2.0).exp() * err)
            } else {
                None
            };
            let rnd = (p.sigma > 0.0).then(|| integral.sqrt() * err / p.sigma);
            (det, rnd)
        }
    };
    Ok(EstimateReport {
        b_hat,
        sigma2_hat,
        integral_y: integral,
        jump_integral,
        horizon,
        scaled_error_deterministic: det,
        scaled_error_random: rnd,
        method,
    })
}

/// `-σ Σ√Y_k ΔW_k / (dt ΣY_k)`: the error `b̂ - b` implied by the stored Brownian increments.
pub fn brownian_error_term(path: &Path) -> Result<f64> {
    let Some(dws) = &path.brownian_increments else {
        return Err(Error::Validation("path carries no Brownian increments".into()));
    };
    let integral = positive_integral(path)?;
    let n = path.n_steps();
    let ito: f64 = path.values[..n]
        .iter()
        .zip(dws)
        .map(|(y, dw)| y.sqrt() * dw)
        .sum();
    Ok(-path.params.sigma * ito / integral)
}

/// `(-log(Y_T / Y_{T-1}), -Y_T / ∫_0^T Y)`, both consistent for `b < 0`.
pub fn auxiliary_supercritical_estimators(path: &Path) -> Result<(f64, f64)> {
    let n = path.n_steps();
    let lag = (1.0 / path.dt).round() as usize;
    if lag == 0 || lag > n {
        return Err(Error::NotComputable("the path is shorter than one time unit".into()));
    }
    let y_t = path.terminal();
    let y_prev = path.values[n - lag];
    if !(y_t > 0.0 && y_prev > 0.0) {
        return Err(Error::NotComputable(
            "Y must be positive at T - 1 and T".into(),
        ));
    }
    let integral = positive_integral(path)?;
    Ok((-(y_t / y_prev).ln(), -y_t / integral))
}
