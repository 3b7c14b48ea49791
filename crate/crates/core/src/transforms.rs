//! Laplace transforms of `Y_t`, of `(Y_t, ∫Y)`, of the stationary law and of
//! the supercritical limit `V = lim e^{bt} Y_t`.
//!
//! Time-dependent transforms integrate the Riccati-type equations
//! `v' = -R(v)` and `ψ' = R(-ψ) + v` with the running integral carried as a
//! second state component. Stationary and `V` transforms use quadrature of
//! `F/R`, evaluated as `a / (R(z)/z)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{branching_mechanism, branching_over_z, theta0, ModelParams};
use crate::numerics::ode::{self, OdeOptions};
use crate::numerics::quadrature::{integrate, QuadOptions, QuadResult};
use crate::numerics::roots::bisect;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub ode_steps: usize,
    /// Largest scaled local error estimate accepted by the ODE solver.
    pub ode_max_error: f64,
    pub quad_error: f64,
    pub quad_intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeSolution {
    pub terminal_value: f64,
    /// `∫_0^t` of the solution, accumulated alongside it.
    pub integral: f64,
    pub trajectory: Option<Vec<(f64, f64)>>,
    pub steps_taken: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformResult {
    pub value: f64,
    pub diagnostics: Diagnostics,
}

impl TransformResult {
    fn exact(value: f64) -> Self {
        Self {
            value,
            diagnostics: Diagnostics::default(),
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Validation(format!("t must be finite and >= 0, got {t}")));
    }
    Ok(())
}

fn ode_options() -> OdeOptions {
    OdeOptions {
        record_trajectory: true,
        ..OdeOptions::default()
    }
}

fn to_solution(run: ode::OdeRun<2>) -> OdeSolution {
    OdeSolution {
        terminal_value: run.y[0],
        integral: run.y[1],
        trajectory: run.trajectory,
        steps_taken: run.steps,
        max_residual: run.max_error,
    }
}

/// `∫_lo^hi f(z) dz` under `z = s^p`, for `lo, hi >= 0`.
fn integrate_power<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, p: f64) -> Result<QuadResult> {
    integrate(
        |s| {
            if s <= 0.0 {
                return 0.0;
            }
            f(s.powf(p)) * p * s.powf(p - 1.0)
        },
        lo.powf(1.0 / p),
        hi.powf(1.0 / p),
        QuadOptions::default(),
    )
}

/// `F(z)/R(z)`
fn f_over_r(p: &ModelParams, z: f64) -> f64 {
    p.a / branching_over_z(p, z)
}

/// `∫_lo^hi F/R` with the substitution that flattens the `z^{1-α}` endpoint at 0.
fn integrate_f_over_r(p: &ModelParams, lo: f64, hi: f64) -> Result<QuadResult> {
    if p.a == 0.0 || lo == hi {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    integrate_power(|z| f_over_r(p, z), lo, hi, 1.0 / (2.0 - p.alpha))
}

/// Solves `v' = -R(v)`, `v_0 = λ`, on `[0, t]`, clamped to `[0, ∞)`.
pub fn solve_v(p: &ModelParams, lambda: f64, t: f64) -> Result<OdeSolution> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Validation(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    check_time(t)?;
    let run = ode::integrate(
        |_, y: &[f64; 2]| [-branching_mechanism(p, y[0]), y[0]],
        |y: &mut [f64; 2]| y[0] = y[0].max(0.0),
        [lambda, 0.0],
        t,
        ode_options(),
    )?;
    Ok(to_solution(run))
}

/// Solves `ψ' = R(-ψ) + v`, `ψ(0) = u`, clamped to `(-∞, 0]`.
pub fn solve_psi(p: &ModelParams, u: f64, v: f64, t: f64) -> Result<OdeSolution> {
    if !(u <= 0.0) || !(v <= 0.0) || !u.is_finite() || !v.is_finite() {
        return Err(Error::Validation(format!(
            "u and v must be finite and <= 0, got u={u}, v={v}"
        )));
    }
    check_time(t)?;
    if u == 0.0 && v == 0.0 {
        return Ok(OdeSolution {
            terminal_value: 0.0,
            integral: 0.0,
            trajectory: Some(vec![(0.0, 0.0), (t, 0.0)]),
            steps_taken: 0,
            max_residual: 0.0,
        });
    }
    let run = ode::integrate(
        |_, y: &[f64; 2]| [branching_mechanism(p, -y[0]) + v, y[0]],
        |y: &mut [f64; 2]| y[0] = y[0].min(0.0),
        [u, 0.0],
        t,
        ode_options(),
    )?;
    Ok(to_solution(run))
}

/// `E exp(-λ Y_t) = exp{-y₀ v_t(λ) - a ∫_0^t v_s(λ) ds}`.
pub fn laplace_y(p: &ModelParams, lambda: f64, t: f64) -> Result<TransformResult> {
    let sol = solve_v(p, lambda, t)?;
    if lambda == 0.0 {
        return Ok(TransformResult::exact(1.0));
    }
    Ok(TransformResult {
        value: (-p.y0 * sol.terminal_value - p.a * sol.integral).exp(),
        diagnostics: Diagnostics {
            ode_steps: sol.steps_taken,
            ode_max_error: sol.max_residual,
            ..Diagnostics::default()
        },
    })
}

/// The same transform through `exp{-y₀ v_t(λ) + ∫_λ^{v_t(λ)} F/R}`; undefined at `λ = θ₀`.
pub fn laplace_y_alt(p: &ModelParams, lambda: f64, t: f64) -> Result<TransformResult> {
    let sol = solve_v(p, lambda, t)?;
    if lambda == 0.0 || t == 0.0 {
        return Ok(TransformResult::exact((-p.y0 * sol.terminal_value).exp()));
    }
    if p.b < 0.0 && lambda == theta0(p)? {
        return Err(Error::Domain("the F/R route is undefined at lambda = theta0".into()));
    }
    let vt = sol.terminal_value;
    let q = integrate_f_over_r(p, lambda, vt)?;
    Ok(TransformResult {
        value: (-p.y0 * vt + q.value).exp(),
        diagnostics: Diagnostics {
            ode_steps: sol.steps_taken,
            ode_max_error: sol.max_residual,
            quad_error: q.error,
            quad_intervals: q.intervals,
        },
    })
}

/// `E exp{u Y_t + v ∫_0^t Y_s ds} = exp{y₀ ψ(t) + a ∫_0^t ψ}`.
pub fn joint_laplace(p: &ModelParams, u: f64, v: f64, t: f64) -> Result<TransformResult> {
    let sol = solve_psi(p, u, v, t)?;
    Ok(TransformResult {
        value: (p.y0 * sol.terminal_value + p.a * sol.integral).exp(),
        diagnostics: Diagnostics {
            ode_steps: sol.steps_taken,
            ode_max_error: sol.max_residual,
            ..Diagnostics::default()
        },
    })
}

/// `∫_0^t ψ_{0,v}(s) ds` rewritten as `∫_0^{ψ_t} x / (R(-x) + v) dx`, for a
/// supplied terminal value `ψ_t` of the trajectory started at `u = 0`.
pub fn psi_integral_by_substitution(p: &ModelParams, v: f64, psi_t: f64) -> Result<f64> {
    if !(v < 0.0) || !(psi_t <= 0.0) {
        return Err(Error::Validation(format!(
            "need v < 0 and psi_t <= 0, got v={v}, psi_t={psi_t}"
        )));
    }
    let r = integrate(
        |x| x / (branching_mechanism(p, -x) + v),
        0.0,
        psi_t,
        QuadOptions::default(),
    )?;
    Ok(r.value)
}

/// `∫ e^{-λy} π(dy) = exp{-∫_0^λ F/R}` for the stationary law `π` (`b >= 0`).
pub fn stationary_laplace(p: &ModelParams, lambda: f64) -> Result<TransformResult> {
    if p.b < 0.0 {
        return Err(Error::Domain("the stationary law exists only for b >= 0".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Validation(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let q = integrate_f_over_r(p, 0.0, lambda)?;
    Ok(TransformResult {
        value: (-q.value).exp(),
        diagnostics: Diagnostics {
            quad_error: q.error,
            quad_intervals: q.intervals,
            ..Diagnostics::default()
        },
    })
}

/// Mean of the stationary law; `+∞` when `a > 0 = b`.
pub fn stationary_mean(p: &ModelParams) -> Result<f64> {
    if p.b < 0.0 {
        return Err(Error::Domain("the stationary law exists only for b >= 0".into()));
    }
    Ok(if p.a == 0.0 {
        0.0
    } else if p.b == 0.0 {
        f64::INFINITY
    } else {
        p.a / p.b
    })
}

fn check_k_domain(p: &ModelParams, lambda: f64) -> Result<f64> {
    if p.b >= 0.0 {
        return Err(Error::Domain("K is defined only for b < 0".into()));
    }
    let th = theta0(p)?;
    if !(lambda > 0.0 && lambda < th) {
        return Err(Error::Domain(format!(
            "K needs lambda in (0, theta0 = {th}), got {lambda}"
        )));
    }
    Ok(th)
}

/// `log K(λ) = log λ + ∫_0^λ (b/R(z) - 1/z) dz`.
fn log_k(p: &ModelParams, lambda: f64) -> Result<f64> {
    let da = p.delta_pow_alpha();
    let g = |z: f64| {
        -(0.5 * p.sigma * p.sigma + da * z.powf(p.alpha - 2.0) / p.alpha) / branching_over_z(p, z)
    };
    let half = 0.5 * lambda;
    let lower = integrate_power(g, 0.0, half, 1.0 / (p.alpha - 1.0))?;
    let upper = integrate(g, half, lambda, QuadOptions::default())?;
    Ok(lambda.ln() + lower.value + upper.value)
}

/// `K(λ) = λ exp{∫_0^λ (b/R(z) - 1/z) dz}` on `(0, θ₀)`, for `b < 0`.
pub fn k_fun(p: &ModelParams, lambda: f64) -> Result<f64> {
    check_k_domain(p, lambda)?;
    Ok(log_k(p, lambda)?.exp())
}

/// Inverts an increasing map of `(0, θ₀)` onto `(0, ∞)` given in log form.
fn invert_on_theta0<F>(log_f: F, x: f64, th: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Validation(format!("K inverse needs x > 0, got {x}")));
    }
    let target = x.ln();
    let mut lo = 0.5 * th;
    let mut hi = 0.5 * th;
    for _ in 0..2000 {
        if log_f(lo)? < target {
            break;
        }
        lo *= 0.5;
    }
    for _ in 0..2000 {
        if log_f(hi)? > target {
            break;
        }
        let next = th - 0.5 * (th - hi);
        if next >= th {
            return Ok(hi);
        }
        hi = next;
    }
    // Errors inside the closure surface as NaN and are reported by `bisect`.
    bisect(|l| log_f(l).map_or(f64::NAN, |v| v - target), lo, hi, 0.0)
}

/// `K^{-1}(x)` in `(0, θ₀)`.
pub fn k_inverse(p: &ModelParams, x: f64) -> Result<f64> {
    if p.b >= 0.0 {
        return Err(Error::Domain("K is defined only for b < 0".into()));
    }
    let th = theta0(p)?;
    invert_on_theta0(|l| log_k(p, l), x, th)
}

/// `E e^{uV} = exp{y₀ ψ* + ∫_0^{-ψ*} F/R}` with `ψ* = -K^{-1}(-u)`, for `b < 0`.
pub fn laplace_v(p: &ModelParams, u: f64) -> Result<TransformResult> {
    if p.b >= 0.0 {
        return Err(Error::Domain("V exists only for b < 0".into()));
    }
    if !(u <= 0.0) || !u.is_finite() {
        return Err(Error::Validation(format!("u must be finite and <= 0, got {u}")));
    }
    if u == 0.0 {
        return Ok(TransformResult::exact(1.0));
    }
    let x = k_inverse(p, -u)?;
    let q = integrate_f_over_r(p, 0.0, x * (1.0 - 1e-14))?;
    Ok(TransformResult {
        value: (-p.y0 * x + q.value).exp(),
        diagnostics: Diagnostics {
            quad_error: q.error,
            quad_intervals: q.intervals,
            ..Diagnostics::default()
        },
    })
}

/// Closed forms available when `α = 3/2`, written in `y = z^{1/2}`.
///
/// With `s = σ²`, `D = δ^{3/2}`, `p = 4D/(3s)`, `h = p/2` and `q = 2b/s`, every
/// `F/R` and `K` integral reduces to `∫ dy/(y² + p y + q)`, whose antiderivative
/// has an arctan, rational or log branch depending on the sign of `q - h²`.
pub mod alpha32 {
    use serde::{Deserialize, Serialize};

    use super::invert_on_theta0;
    use crate::error::{Error, Result};
    use crate::model::{theta0, ModelParams};

    #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
    pub enum Query {
        /// Stationary transform at `λ`.
        Stationary { lambda: f64 },
        /// Residual of the implicit equation for `ψ_{u,0}(t)`.
        PsiResidual { psi: f64, t: f64, u: f64 },
        K { lambda: f64 },
        LaplaceV { u: f64 },
    }

    pub fn evaluate(p: &ModelParams, query: Query) -> Result<f64> {
        match query {
            Query::Stationary { lambda } => stationary_laplace(p, lambda),
            Query::PsiResidual { psi, t, u } => psi_residual(p, psi, t, u),
            Query::K { lambda } => k_fun(p, lambda),
            Query::LaplaceV { u } => laplace_v(p, u),
        }
    }

    fn check(p: &ModelParams) -> Result<()> {
        if p.alpha != 1.5 {
            return Err(Error::Domain(format!(
                "closed forms need alpha = 1.5, got {}",
                p.alpha
            )));
        }
        Ok(())
    }

    struct Quad {
        p: f64,
        h: f64,
        q: f64,
        disc: f64,
    }

    impl Quad {
        fn new(m: &ModelParams) -> Self {
            let s = m.sigma * m.sigma;
            let p = 4.0 * m.delta.powf(1.5) / (3.0 * s);
            let q = 2.0 * m.b / s;
            let h = 0.5 * p;
            let mut disc = q - h * h;
            if disc.abs() <= 1e-14 * (h * h).max(q.abs()) {
                disc = 0.0;
            }
            Self { p, h, q, disc }
        }

        /// An antiderivative of `1/(y² + p y + q)`.
        fn inv_antiderivative(&self, y: f64) -> f64 {
            if self.disc > 0.0 {
                let r = self.disc.sqrt();
                ((y + self.h) / r).atan() / r
            } else if self.disc == 0.0 {
                -1.0 / (y + self.h)
            } else {
                let r = (-self.disc).sqrt();
                ((y + self.h - r) / (y + self.h + r)).abs().ln() / (2.0 * r)
            }
        }

        /// `∫_0^y dy/(y² + p y + q)` in a form without cancellation at small `y`.
        fn inv_from_zero(&self, y: f64) -> f64 {
            if self.disc > 0.0 {
                let r = self.disc.sqrt();
                (r * y / (self.q + self.h * y)).atan() / r
            } else if self.disc == 0.0 {
                y / (self.h * (y + self.h))
            } else {
                let r = (-self.disc).sqrt();
                ((y * (self.h + r) + self.q) / (y * (self.h - r) + self.q)).ln() / (2.0 * r)
            }
        }

        /// `(y² + p y + q)/q`
        fn normalised(&self, y: f64) -> f64 {
            y * y / self.q + self.p * y / self.q + 1.0
        }
    }

    /// Stationary transform: the three `b` versus `2δ³/(9σ²)` branches and the `σ = 0` / `b = 0` cases.
    pub fn stationary_laplace(m: &ModelParams, lambda: f64) -> Result<f64> {
        check(m)?;
        if m.b < 0.0 {
            return Err(Error::Domain("the stationary law exists only for b >= 0".into()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Validation(format!("lambda must be >= 0, got {lambda}")));
        }
        let (a, b, d) = (m.a, m.b, m.delta.powf(1.5));
        let y = lambda.sqrt();
        if m.sigma == 0.0 {
            let base = (-3.0 * a * y / d).exp();
            if b == 0.0 {
                return Ok(base);
            }
            let pow = 9.0 * b * a / (2.0 * d * d);
            return Ok(base * (1.0 + 2.0 * d * y / (3.0 * b)).powf(pow));
        }
        let s = m.sigma * m.sigma;
        if b == 0.0 {
            return Ok((3.0 * s * y / (4.0 * d) + 1.0).powf(-4.0 * a / s));
        }
        let qd = Quad::new(m);
        let power = qd.normalised(y).powf(-2.0 * a / s);
        let coeff = 8.0 * a * d / (3.0 * s * s);
        Ok(power * (coeff * qd.inv_from_zero(y)).exp())
    }

    /// `Φ(g_t) - Φ(g_0) + t` where `Φ' = 1/(g (σ²g²/4 + δ^{3/2} g/3 + b/2))`,
    /// `g = (-ψ)^{1/2}`; zero exactly when `ψ = ψ_{u,0}(t)`.
    pub fn psi_residual(m: &ModelParams, psi: f64, t: f64, u: f64) -> Result<f64> {
        check(m)?;
        if !(u < 0.0) || !(psi < 0.0) {
            return Err(Error::Domain(format!(
                "the implicit equation needs u < 0 and psi < 0, got u={u}, psi={psi}"
            )));
        }
        let phi = implicit_antiderivative(m);
        Ok(phi((-psi).sqrt()) - phi((-u).sqrt()) + t)
    }

    fn implicit_antiderivative(m: &ModelParams) -> Box<dyn Fn(f64) -> f64> {
        let (b, d) = (m.b, m.delta.powf(1.5));
        if m.sigma == 0.0 {
            if b == 0.0 {
                return Box::new(move |g| -3.0 / (d * g));
            }
            return Box::new(move |g: f64| (2.0 / b) * (g / (d * g / 3.0 + 0.5 * b)).abs().ln());
        }
        let s = m.sigma * m.sigma;
        let qd = Quad::new(m);
        if b == 0.0 {
            let p = qd.p;
            return Box::new(move |g: f64| {
                (4.0 / s) * (-1.0 / (p * g) + ((g + p) / g).ln() / (p * p))
            });
        }
        Box::new(move |g: f64| {
            (2.0 / b)
                * (g.ln()
                    - 0.5 * (g * g + qd.p * g + qd.q).abs().ln()
                    - 0.5 * qd.p * qd.inv_antiderivative(g))
        })
    }

    fn check_k(m: &ModelParams) -> Result<f64> {
        check(m)?;
        if m.b >= 0.0 {
            return Err(Error::Domain("K is defined only for b < 0".into()));
        }
        theta0(m)
    }

    fn log_k(m: &ModelParams, lambda: f64) -> f64 {
        let d = m.delta.powf(1.5);
        let y = lambda.sqrt();
        if m.sigma == 0.0 {
            return -2.0 * (2.0 * d / (3.0 * m.b) + 1.0 / y).ln();
        }
        let qd = Quad::new(m);
        lambda.ln() - qd.normalised(y).ln() - qd.p * qd.inv_from_zero(y)
    }

    /// `K(λ)`; for `σ > 0` this is
    /// `(x + c₁ - c₂)^{-1-E}(x + c₁ + c₂)^{-1+E}` with `x = λ^{-1/2}`.
    pub fn k_fun(m: &ModelParams, lambda: f64) -> Result<f64> {
        let th = check_k(m)?;
        if !(lambda > 0.0 && lambda < th) {
            return Err(Error::Domain(format!(
                "K needs lambda in (0, theta0 = {th}), got {lambda}"
            )));
        }
        Ok(log_k(m, lambda).exp())
    }

    pub fn k_inverse(m: &ModelParams, x: f64) -> Result<f64> {
        let th = check_k(m)?;
        if m.sigma == 0.0 {
            if !(x > 0.0) {
                return Err(Error::Validation(format!("K inverse needs x > 0, got {x}")));
            }
            let d = m.delta.powf(1.5);
            return Ok((x.powf(-0.5) - 2.0 * d / (3.0 * m.b)).powi(-2));
        }
        invert_on_theta0(|l| Ok(log_k(m, l)), x, th)
    }

    /// `E e^{uV}`.
    pub fn laplace_v(m: &ModelParams, u: f64) -> Result<f64> {
        check_k(m)?;
        if !(u <= 0.0) {
            return Err(Error::Validation(format!("u must be <= 0, got {u}")));
        }
        if u == 0.0 {
            return Ok(1.0);
        }
        let (a, b, d) = (m.a, m.b, m.delta.powf(1.5));
        if m.sigma == 0.0 {
            let big_x = (-u).powf(-0.5) - 2.0 * d / (3.0 * b);
            let pow = 9.0 * b * a / (2.0 * d * d);
            return Ok((-m.y0 / (big_x * big_x)).exp()
                * (3.0 * a / (d * big_x)).exp()
                * (1.0 - 2.0 * d * (-u).sqrt() / (3.0 * b)).powf(pow));
        }
        let x = k_inverse(m, -u)?;
        let s = m.sigma * m.sigma;
        let qd = Quad::new(m);
        let y = x.sqrt();
        let integral = (2.0 * a / s) * qd.normalised(y).ln()
            - (8.0 * a * d / (3.0 * s * s)) * qd.inv_from_zero(y);
        Ok((-m.y0 * x + integral).exp())
    }
}
