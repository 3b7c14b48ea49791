//! Dormand–Prince 5(4) embedded Runge–Kutta pair with adaptive step control.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Keep every accepted `(t, y[0])` pair.
    pub record_trajectory: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 2_000_000,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdeRun<const N: usize> {
    pub y: [f64; N],
    pub trajectory: Option<Vec<(f64, f64)>>,
    pub steps: usize,
    /// Largest scaled local error estimate among accepted steps.
    pub max_error: f64,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])], h: f64) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `y' = rhs(t, y)` from `t = 0` to `t_end`.
///
/// `project` is applied to every stage argument and accepted state; it keeps
/// the solution inside its invariant set (e.g. `v >= 0`).
pub fn integrate<const N: usize, F, P>(
    rhs: F,
    project: P,
    y0: [f64; N],
    t_end: f64,
    opts: OdeOptions,
) -> Result<OdeRun<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    P: Fn(&mut [f64; N]),
{
    let mut y = y0;
    project(&mut y);
    let mut trajectory = opts.record_trajectory.then(|| vec![(0.0, y[0])]);
    if t_end <= 0.0 {
        return Ok(OdeRun {
            y,
            trajectory,
            steps: 0,
            max_error: 0.0,
        });
    }

    let stage = |t: f64, mut arg: [f64; N]| {
        project(&mut arg);
        rhs(t, &arg)
    };

    let mut t = 0.0;
    let mut k1 = stage(t, y);
    // Initial step from the size of the derivative.
    let scale0 = (0..N)
        .map(|i| opts.abs_tol + opts.rel_tol * y[i].abs())
        .fold(f64::INFINITY, f64::min);
    let dnorm = k1.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut h = if dnorm > 0.0 {
        (0.01 * (scale0 / opts.rel_tol).max(1e-6) / dnorm).min(t_end)
    } else {
        t_end
    };
    h = h.clamp(1e-12 * t_end, t_end);

    let mut steps = 0;
    let mut max_error: f64 = 0.0;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::StepUnderflow { t });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let k2 = stage(t + C2 * h, axpy(&y, &[(A21, &k1)], h));
        let k3 = stage(t + C3 * h, axpy(&y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = stage(
            t + C4 * h,
            axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h),
        );
        let k5 = stage(
            t + C5 * h,
            axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h),
        );
        let k6 = stage(
            t + h,
            axpy(
                &y,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                h,
            ),
        );
        let mut y_new = axpy(
            &y,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            h,
        );
        project(&mut y_new);
        let k7 = stage(t + h, y_new);

        let mut err_sq = 0.0;
        for i in 0..N {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc).powi(2);
        }
        let err = (err_sq / N as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
            if h < 1e-15 * (1.0 + t) {
                return Err(Error::StepUnderflow { t });
            }
            continue;
        }

        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            y = y_new;
            k1 = k7;
            steps += 1;
            max_error = max_error.max(err);
            if let Some(tr) = trajectory.as_mut() {
                tr.push((t, y[0]));
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= if err <= 1.0 { factor } else { factor.min(1.0) };
        if h < 1e-15 * (1.0 + t) && t < t_end {
            return Err(Error::StepUnderflow { t });
        }
    }
    Ok(OdeRun {
        y,
        trajectory,
        steps,
        max_error,
    })
}
