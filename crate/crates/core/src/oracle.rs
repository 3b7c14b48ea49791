//! Closed-form `α = 3/2` oracles against the general numeric engines.

use serde::Serialize;

use crate::error::Result;
use crate::model::{theta0, ModelParams};
use crate::transforms::{alpha32, k_fun, laplace_v, solve_psi, stationary_laplace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub form: &'static str,
    pub params: ModelParams,
    /// Argument of the form, e.g. `lambda=0.5`.
    pub argument: String,
    pub closed_form: f64,
    pub numeric: f64,
    /// Relative error, or the absolute residual for implicit equations.
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleRow {
    fn relative(form: &'static str, params: ModelParams, argument: String, closed: f64, numeric: f64, tol: f64) -> Self {
        let error = (closed - numeric).abs() / numeric.abs().max(f64::MIN_POSITIVE);
        Self {
            form,
            params,
            argument,
            closed_form: closed,
            numeric,
            error,
            tolerance: tol,
            pass: error <= tol,
        }
    }
}

pub const RELATIVE_TOLERANCE: f64 = 1e-8;
pub const RESIDUAL_TOLERANCE: f64 = 1e-7;

fn params(a: f64, b: f64, sigma: f64, delta: f64, y0: f64) -> Result<ModelParams> {
    ModelParams::new(a, b, sigma, delta, 1.5, y0)
}

/// Every closed form on a fixed grid of ten points.
pub fn run_oracle_suite() -> Result<Vec<OracleRow>> {
    let mut rows = Vec::new();
    let lambdas: Vec<f64> = (0..10).map(|k| 0.01 * 2.5f64.powi(k)).collect();
    // Threshold 2δ³/(9σ²) = 2/9 at σ = δ = 1.
    let stationary = [
        ("stationary b>threshold", 1.0, 1.0),
        ("stationary b=threshold", 2.0 / 9.0, 1.0),
        ("stationary b<threshold", 0.05, 1.0),
        ("stationary sigma=0 b>0", 0.7, 0.0),
        ("stationary sigma=0 b=0", 0.0, 0.0),
    ];
    for (form, b, sigma) in stationary {
        let p = params(1.3, b, sigma, 1.0, 1.0)?;
        for &l in &lambdas {
            rows.push(OracleRow::relative(
                form,
                p,
                format!("lambda={l}"),
                alpha32::stationary_laplace(&p, l)?,
                stationary_laplace(&p, l)?.value,
                RELATIVE_TOLERANCE,
            ));
        }
    }
    for (form_k, form_v, sigma) in [("K sigma=0", "V sigma=0", 0.0), ("K sigma>0", "V sigma>0", 1.0)] {
        let p = params(1.2, -0.9, sigma, 1.1, 0.7)?;
        let th = theta0(&p)?;
        for k in 1..=10 {
            let l = th * k as f64 / 11.0;
            rows.push(OracleRow::relative(
                form_k,
                p,
                format!("lambda={l}"),
                alpha32::k_fun(&p, l)?,
                k_fun(&p, l)?,
                RELATIVE_TOLERANCE,
            ));
        }
        for k in 0..10 {
            let u = -0.1 * 2f64.powi(k);
            rows.push(OracleRow::relative(
                form_v,
                p,
                format!("u={u}"),
                alpha32::laplace_v(&p, u)?,
                laplace_v(&p, u)?.value,
                RELATIVE_TOLERANCE,
            ));
        }
    }
    for (b, sigma) in [(1.0, 1.0), (0.0, 1.0), (-1.0, 1.0)] {
        let p = params(1.0, b, sigma, 1.0, 1.0)?;
        for k in 0..10 {
            let u = -0.2 - 0.5 * k as f64;
            let t = 0.3 + 0.4 * k as f64;
            let psi = solve_psi(&p, u, 0.0, t)?.terminal_value;
            let r = alpha32::psi_residual(&p, psi, t, u)?;
            rows.push(OracleRow {
                form: "psi implicit residual",
                params: p,
                argument: format!("u={u},t={t}"),
                closed_form: r,
                numeric: 0.0,
                error: r.abs(),
                tolerance: RESIDUAL_TOLERANCE,
                pass: r.abs() <= RESIDUAL_TOLERANCE,
            });
        }
    }
    Ok(rows)
}
