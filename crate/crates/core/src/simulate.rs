//! Euler–Maruyama paths of the stable CIR SDE with full noise bookkeeping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::StableLaw;
use crate::model::ModelParams;

/// Default multiplier in the jump cutoff `κ dt^{1/α}`.
pub const DEFAULT_KAPPA: f64 = 6.0;

/// A step whose stable increment exceeded the jump cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    /// Step index `k`: the step from `times[k]` to `times[k + 1]`.
    pub step: usize,
    /// `δ Y_{t_k}^{1/α} ΔL_k`
    pub delta_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub brownian_increments: Option<Vec<f64>>,
    pub stable_increments: Option<Vec<f64>>,
    pub jump_records: Vec<JumpRecord>,
    pub params: ModelParams,
    pub dt: f64,
    pub kappa: f64,
    pub seed: Option<u64>,
    /// Steps where the positivity projection `max(0, ·)` was active.
    pub projections: usize,
}

impl Path {
    pub fn n_steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    /// Builds an observation-only path on a uniform grid (no noise, no jump records).
    pub fn from_values(params: ModelParams, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Validation(format!("dt must be > 0, got {dt}")));
        }
        if values.len() < 2 {
            return Err(Error::Validation("a path needs at least two points".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation("path values must be finite and >= 0".into()));
        }
        let times = uniform_grid(dt, values.len() - 1);
        Ok(Self {
            times,
            values,
            brownian_increments: None,
            stable_increments: None,
            jump_records: Vec::new(),
            params,
            dt,
            kappa: DEFAULT_KAPPA,
            seed: None,
            projections: 0,
        })
    }
}

/// Noise switches and the jump-cutoff multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub kappa: f64,
    pub brownian: bool,
    pub stable: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            brownian: true,
            stable: true,
        }
    }
}

/// Cutoff `κ dt^{1/α}` on `|ΔL|` above which a step is recorded as a jump.
/// `κ = 0` records every step.
pub fn jump_threshold(dt: f64, alpha: f64, kappa: f64) -> f64 {
    kappa * dt.powf(1.0 / alpha)
}

pub(crate) fn uniform_grid(dt: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|k| k as f64 * dt).collect()
}

/// One scheme step: `max(0, y + (a - b y) dt + σ √y dW + δ y^{1/α} dL)`.
#[inline]
pub(crate) fn scheme_step(p: &ModelParams, y: f64, dt: f64, dw: f64, dl: f64) -> (f64, bool) {
    let coeff = stable_coefficient(p, y);
    let raw = y + (p.a - p.b * y) * dt + p.sigma * y.sqrt() * dw + coeff * dl;
    if raw < 0.0 {
        (0.0, true)
    } else {
        (raw, false)
    }
}

/// `δ y^{1/α}`
#[inline]
pub(crate) fn stable_coefficient(p: &ModelParams, y: f64) -> f64 {
    if y > 0.0 {
        p.delta * y.powf(1.0 / p.alpha)
    } else {
        0.0
    }
}

pub fn simulate_path(p: &ModelParams, horizon: f64, n_steps: usize, seed: u64) -> Result<Path> {
    simulate_path_with(p, horizon, n_steps, seed, SimOptions::default())
}

pub fn simulate_path_with(
    p: &ModelParams,
    horizon: f64,
    n_steps: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<Path> {
    p.validate()?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Validation(format!("T must be > 0, got {horizon}")));
    }
    if n_steps == 0 {
        return Err(Error::Validation("n_steps must be >= 1".into()));
    }
    if !(opts.kappa >= 0.0) {
        return Err(Error::Validation("kappa must be >= 0".into()));
    }
    let law = StableLaw::new(p.alpha)?;
    let dt = horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let stable_scale = dt.powf(1.0 / p.alpha);
    let threshold = jump_threshold(dt, p.alpha, opts.kappa);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut values = Vec::with_capacity(n_steps + 1);
    let mut dws = Vec::with_capacity(n_steps);
    let mut dls = Vec::with_capacity(n_steps);
    let mut jumps = Vec::new();
    let mut projections = 0;
    let mut y = p.y0;
    values.push(y);
    for k in 0..n_steps {
        let z: f64 = rng.sample(StandardNormal);
        let l = law.sample_unit(&mut rng);
        let dw = if opts.brownian { sqrt_dt * z } else { 0.0 };
        let dl = if opts.stable { stable_scale * l } else { 0.0 };
        if opts.stable && (dl.abs() > threshold || opts.kappa == 0.0) {
            jumps.push(JumpRecord {
                step: k,
                delta_y: stable_coefficient(p, y) * dl,
            });
        }
        let (next, projected) = scheme_step(p, y, dt, dw, dl);
        if !next.is_finite() {
            return Err(Error::NumericFault(format!(
                "non-finite state at step {k} (previous value {y})"
            )));
        }
        projections += projected as usize;
        y = next;
        values.push(y);
        dws.push(dw);
        dls.push(dl);
    }
    let mut times = uniform_grid(dt, n_steps);
    times[n_steps] = horizon;
    Ok(Path {
        times,
        values,
        brownian_increments: Some(dws),
        stable_increments: Some(dls),
        jump_records: jumps,
        params: *p,
        dt,
        kappa: opts.kappa,
        seed: Some(seed),
        projections,
    })
}

/// Recomputes the state sequence from the stored increments.
pub fn replay(path: &Path) -> Result<Vec<f64>> {
    let (Some(dws), Some(dls)) = (&path.brownian_increments, &path.stable_increments) else {
        return Err(Error::Validation("path carries no noise increments".into()));
    };
    let p = &path.params;
    let mut out = Vec::with_capacity(path.values.len());
    let mut y = path.values[0];
    out.push(y);
    for (dw, dl) in dws.iter().zip(dls) {
        y = scheme_step(p, y, path.dt, *dw, *dl).0;
        out.push(y);
    }
    Ok(out)
}

/// Re-runs the scheme with step `factor * dt`, driven by the sums of
/// `factor` consecutive stored increments. Sums of stable increments are again
/// stable with the right scale, so the coarse path is an exact draw of the
/// coarse scheme coupled to the fine one.
pub fn coarsen(path: &Path, factor: usize) -> Result<Path> {
    let (Some(dws), Some(dls)) = (&path.brownian_increments, &path.stable_increments) else {
        return Err(Error::Validation("path carries no noise increments".into()));
    };
    let n = path.n_steps();
    if factor == 0 || !n.is_multiple_of(factor) {
        return Err(Error::Validation(format!(
            "coarsening factor {factor} must divide the step count {n}"
        )));
    }
    let p = &path.params;
    let m = n / factor;
    let dt = path.dt * factor as f64;
    let threshold = jump_threshold(dt, p.alpha, path.kappa);
    let mut values = Vec::with_capacity(m + 1);
    let mut cdws = Vec::with_capacity(m);
    let mut cdls = Vec::with_capacity(m);
    let mut jumps = Vec::new();
    let mut projections = 0;
    let mut y = path.values[0];
    values.push(y);
    for k in 0..m {
        let dw: f64 = dws[k * factor..(k + 1) * factor].iter().sum();
        let dl: f64 = dls[k * factor..(k + 1) * factor].iter().sum();
        if dl.abs() > threshold || path.kappa == 0.0 {
            jumps.push(JumpRecord {
                step: k,
                delta_y: stable_coefficient(p, y) * dl,
            });
        }
        let (next, projected) = scheme_step(p, y, dt, dw, dl);
        projections += projected as usize;
        y = next;
        values.push(y);
        cdws.push(dw);
        cdls.push(dl);
    }
    let mut times = uniform_grid(dt, m);
    times[m] = path.horizon();
    Ok(Path {
        times,
        values,
        brownian_increments: Some(cdws),
        stable_increments: Some(cdls),
        jump_records: jumps,
        params: *p,
        dt,
        kappa: path.kappa,
        seed: path.seed,
        projections,
    })
}

/// Left-endpoint Riemann sum of `∫_0^T Y_s ds`.
pub fn integrate_path(path: &Path) -> f64 {
    let n = path.n_steps();
    path.values[..n].iter().sum::<f64>() * path.dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mean_y;

    fn params(a: f64, b: f64, sigma: f64, delta: f64, alpha: f64, y0: f64) -> ModelParams {
        ModelParams::new(a, b, sigma, delta, alpha, y0).unwrap()
    }

    #[test]
    fn validation() {
        let p = params(1.0, 1.0, 1.0, 1.0, 1.5, 1.0);
        assert!(simulate_path(&p, 0.0, 10, 1).is_err());
        assert!(simulate_path(&p, 1.0, 0, 1).is_err());
    }

    #[test]
    fn zero_start_without_immigration_stays_zero() {
        let p = params(0.0, 0.3, 1.0, 1.0, 1.5, 0.0);
        let path = simulate_path(&p, 2.0, 500, 9).unwrap();
        assert!(path.values.iter().all(|v| *v == 0.0));
        assert!(path.jump_records.iter().all(|j| j.delta_y == 0.0));
    }

    #[test]
    fn deterministic_skeleton_follows_the_ode() {
        let p = params(1.0, 1.0, 1.0, 1.0, 1.5, 0.0);
        let opts = SimOptions {
            brownian: false,
            stable: false,
            ..SimOptions::default()
        };
        let path = simulate_path_with(&p, 1.0, 10_000, 4, opts).unwrap();
        let exact = 1.0 - (-1f64).exp();
        assert!((path.terminal() - exact).abs() < 1e-4);
        assert!(path.jump_records.is_empty());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = params(1.0, 1.0, 1.0, 1.0, 1.5, 1.0);
        let a = simulate_path(&p, 3.0, 3000, 77).unwrap();
        let b = simulate_path(&p, 3.0, 3000, 77).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&p, 3.0, 3000, 78).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn positivity_replay_and_jump_identity() {
        let p = params(0.2, 0.5, 1.5, 1.0, 1.3, 0.05);
        let path = simulate_path(&p, 5.0, 5000, 12).unwrap();
        assert!(path.values.iter().all(|v| *v >= 0.0));
        assert_eq!(replay(&path).unwrap(), path.values);
        let dls = path.stable_increments.as_ref().unwrap();
        for j in &path.jump_records {
            let expected = p.delta * path.values[j.step].powf(1.0 / p.alpha) * dls[j.step];
            let y = path.values[j.step];
            if y > 0.0 {
                assert_eq!(j.delta_y, expected);
            } else {
                assert_eq!(j.delta_y, 0.0);
            }
        }
    }

    #[test]
    fn coarsening_by_one_is_identity_and_sums_noise() {
        let p = params(1.0, 0.5, 1.0, 1.0, 1.5, 1.0);
        let path = simulate_path(&p, 2.0, 1000, 5).unwrap();
        let same = coarsen(&path, 1).unwrap();
        assert_eq!(same.values, path.values);
        assert_eq!(same.jump_records, path.jump_records);
        let coarse = coarsen(&path, 10).unwrap();
        assert_eq!(coarse.n_steps(), 100);
        assert_eq!(coarse.horizon(), 2.0);
        let fine_sum: f64 = path.stable_increments.as_ref().unwrap().iter().sum();
        let coarse_sum: f64 = coarse.stable_increments.as_ref().unwrap().iter().sum();
        assert!((fine_sum - coarse_sum).abs() < 1e-12);
        assert!(coarsen(&path, 3).is_err());
    }

    #[test]
    fn kappa_zero_records_every_step() {
        let p = params(1.0, 1.0, 1.0, 1.0, 1.5, 1.0);
        let opts = SimOptions {
            kappa: 0.0,
            ..SimOptions::default()
        };
        let path = simulate_path_with(&p, 1.0, 100, 3, opts).unwrap();
        assert_eq!(path.jump_records.len(), 100);
    }

    #[test]
    fn threshold_scaling() {
        let t = jump_threshold(1e-4, 1.5, DEFAULT_KAPPA);
        assert!((t - 1e-4f64.powf(2.0 / 3.0) * 6.0).abs() < 1e-15);
        let ratio = jump_threshold(0.5e-4, 1.5, 6.0) / t;
        assert!((ratio - 2f64.powf(-1.0 / 1.5)).abs() < 1e-14);
        assert_eq!(jump_threshold(1e-4, 1.5, 0.0), 0.0);
    }

    #[test]
    fn riemann_sums() {
        let p = params(1.0, 1.0, 1.0, 1.0, 1.5, 0.0);
        let zero = Path::from_values(p, 0.1, vec![0.0; 11]).unwrap();
        assert_eq!(integrate_path(&zero), 0.0);
        let c = Path::from_values(p, 0.25, vec![2.0; 9]).unwrap();
        assert!((integrate_path(&c) - 4.0).abs() < 1e-15);
        let n = 40;
        let ramp: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let r = Path::from_values(p, 1.0 / n as f64, ramp).unwrap();
        let expected = (n as f64 - 1.0) / (2.0 * n as f64);
        assert!((integrate_path(&r) - expected).abs() < 1e-14);
    }

    #[test]
    fn weak_error_shrinks_with_dt() {
        // Supercritical drift makes the O(dt) mean bias visible.
        let p = params(1.0, -0.5, 0.5, 0.3, 1.5, 1.0);
        let t = 2.0;
        let exact = mean_y(&p, t);
        let mut gaps = Vec::new();
        for n in [20usize, 2000] {
            let reps = 4000;
            let mean: f64 = (0..reps)
                .map(|s| simulate_path(&p, t, n, s as u64).unwrap().terminal())
                .sum::<f64>()
                / reps as f64;
            gaps.push((mean - exact).abs());
        }
        assert!(gaps[1] < gaps[0], "{gaps:?}");
    }
}
