//! Model parameters, branching and immigration mechanisms, regimes and
//! the scalar roots `theta0` and `c_v`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::roots::{bisect, expand_upward, INNER_EPS, MAX_EXPANSIONS};

/// Parameters of `dY = (a - bY) dt + σ √Y dW + δ Y^{1/α} dL`, plus `Y_0 = y0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawParams")]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub delta: f64,
    pub alpha: f64,
    pub y0: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    a: f64,
    b: f64,
    sigma: f64,
    delta: f64,
    alpha: f64,
    y0: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(r: RawParams) -> Result<Self> {
        ModelParams::new(r.a, r.b, r.sigma, r.delta, r.alpha, r.y0)
    }
}

impl ModelParams {
    pub fn new(a: f64, b: f64, sigma: f64, delta: f64, alpha: f64, y0: f64) -> Result<Self> {
        let p = Self {
            a,
            b,
            sigma,
            delta,
            alpha,
            y0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.a, self.b, self.sigma, self.delta, self.alpha, self.y0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation("parameters must be finite".into()));
        }
        if self.a < 0.0 {
            return Err(Error::Validation(format!("a must be >= 0, got {}", self.a)));
        }
        if self.sigma < 0.0 {
            return Err(Error::Validation(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.delta <= 0.0 {
            return Err(Error::Validation(format!(
                "delta must be > 0, got {}",
                self.delta
            )));
        }
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::Validation(format!(
                "alpha must lie in (1, 2), got {}",
                self.alpha
            )));
        }
        if self.y0 < 0.0 {
            return Err(Error::Validation(format!("y0 must be >= 0, got {}", self.y0)));
        }
        Ok(())
    }

    pub fn with_b(mut self, b: f64) -> Self {
        self.b = b;
        self
    }

    /// `δ^α`
    #[inline]
    pub fn delta_pow_alpha(&self) -> f64 {
        self.delta.powf(self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

pub fn classify(p: &ModelParams) -> Regime {
    if p.b > 0.0 {
        Regime::Subcritical
    } else if p.b == 0.0 {
        Regime::Critical
    } else {
        Regime::Supercritical
    }
}

/// `R(z) = σ²z²/2 + δ^α z^α/α + b z` for `z >= 0`.
pub fn branching_mechanism(p: &ModelParams, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    0.5 * p.sigma * p.sigma * z * z + p.delta_pow_alpha() * z.powf(p.alpha) / p.alpha + p.b * z
}

/// `R(z)/z = σ²z/2 + δ^α z^{α-1}/α + b`, strictly increasing on `(0, ∞)`.
///
/// Every ratio `F/R` and `b/R - 1/z` is evaluated through this form so that
/// the removable `0/0` at the origin never appears.
pub fn branching_over_z(p: &ModelParams, z: f64) -> f64 {
    let zp = if z > 0.0 {
        z.powf(p.alpha - 1.0)
    } else {
        0.0
    };
    0.5 * p.sigma * p.sigma * z + p.delta_pow_alpha() * zp / p.alpha + p.b
}

/// `F(z) = a z`
pub fn immigration_mechanism(p: &ModelParams, z: f64) -> f64 {
    p.a * z
}

/// Largest root of `R` on `[0, ∞)`: zero unless `b < 0`.
pub fn theta0(p: &ModelParams) -> Result<f64> {
    if p.b >= 0.0 {
        return Ok(0.0);
    }
    if p.sigma == 0.0 {
        return Ok((-p.b * p.alpha / p.delta_pow_alpha()).powf(1.0 / (p.alpha - 1.0)));
    }
    let g = |z: f64| branching_over_z(p, z);
    let hi = expand_upward(g, 1.0)?;
    bisect(g, INNER_EPS, hi, 0.0)
}

/// Unique `x < 0` with `R(-x) = -v`, for `v < 0` and `b >= 0`.
pub fn c_v_root(p: &ModelParams, v: f64) -> Result<f64> {
    if !(v < 0.0) {
        return Err(Error::Validation(format!("c_v requires v < 0, got {v}")));
    }
    if p.b < 0.0 {
        return Err(Error::Validation(format!("c_v requires b >= 0, got {}", p.b)));
    }
    // G(x) = R(-x) + v is strictly decreasing on x <= 0 with G(0) = v < 0.
    let g = |x: f64| branching_mechanism(p, -x) + v;
    let mut lo = -1.0;
    let mut found = false;
    for _ in 0..MAX_EXPANSIONS {
        if g(lo) > 0.0 {
            found = true;
            break;
        }
        lo *= 2.0;
    }
    if !found {
        return Err(Error::BracketFailure {
            expansions: MAX_EXPANSIONS,
        });
    }
    bisect(g, lo, -INNER_EPS, 0.0)
}

/// `E(Y_t)`; the critical branch is used when `|b|` is negligible against the
/// other scales to avoid cancellation in `(e^{-bt} - 1)/b`.
pub fn mean_y(p: &ModelParams, t: f64) -> f64 {
    let scale = 1f64.max(p.a.abs()).max(p.y0);
    if p.b.abs() < 1e-12 * scale {
        return p.y0 + p.a * t;
    }
    let ratio = p.a / p.b;
    (-p.b * t).exp() * (p.y0 - ratio) + ratio
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(a: f64, b: f64, sigma: f64, delta: f64, alpha: f64, y0: f64) -> ModelParams {
        ModelParams::new(a, b, sigma, delta, alpha, y0).unwrap()
    }

    #[test]
    fn validation_rejects_out_of_range() {
        assert!(ModelParams::new(-1.0, 0.0, 1.0, 1.0, 1.5, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, -1.0, 1.0, 1.5, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0, 0.0, 1.5, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0, 1.0, 2.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 1.0, 1.0, 1.5, -0.1).is_err());
        assert!(ModelParams::new(f64::NAN, 0.0, 1.0, 1.0, 1.5, 0.0).is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_field() {
        let p = params(1.0, -0.5, 1.0, 1.0, 1.5, 2.0);
        let s = serde_json::to_string(&p).unwrap();
        let back: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        let bad = r#"{"a":1,"b":1,"sigma":1,"delta":1,"alpha":1.5,"y0":1,"extra":3}"#;
        assert!(serde_json::from_str::<ModelParams>(bad).is_err());
        let invalid = r#"{"a":1,"b":1,"sigma":1,"delta":1,"alpha":2.5,"y0":1}"#;
        assert!(serde_json::from_str::<ModelParams>(invalid).is_err());
    }

    #[test]
    fn branching_examples() {
        let p = params(1.0, 1.0, 1.0, 1.0, 1.5, 0.0);
        assert_eq!(branching_mechanism(&p, 0.0), 0.0);
        assert!((branching_mechanism(&p, 1.0) - 13.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn immigration_examples() {
        assert_eq!(immigration_mechanism(&params(0.0, 1.0, 1.0, 1.0, 1.5, 0.0), 7.0), 0.0);
        assert_eq!(immigration_mechanism(&params(1.0, 1.0, 1.0, 1.0, 1.5, 0.0), 2.0), 2.0);
        assert_eq!(immigration_mechanism(&params(0.5, 1.0, 1.0, 1.0, 1.5, 0.0), 4.0), 2.0);
    }

    #[test]
    fn theta0_examples() {
        assert_eq!(theta0(&params(1.0, 1.0, 1.0, 1.0, 1.5, 0.0)).unwrap(), 0.0);
        let t = theta0(&params(1.0, -1.0, 0.0, 1.0, 1.5, 0.0)).unwrap();
        assert!((t - 2.25).abs() < 1e-14);
        let p = params(1.0, -1.0, 1.0, 1.0, 1.5, 0.0);
        let t = theta0(&p).unwrap();
        let expected = (-2.0 / 3.0 + (4.0f64 / 9.0 + 2.0).sqrt()).powi(2);
        assert!((t - expected).abs() < 1e-12);
        assert!(branching_mechanism(&p, t).abs() < 1e-10);
    }

    #[test]
    fn theta0_sign_structure() {
        let p = params(1.0, -0.7, 0.8, 1.3, 1.4, 0.0);
        let t = theta0(&p).unwrap();
        for k in 1..50 {
            let z = t * k as f64 / 50.0;
            assert!(branching_mechanism(&p, z) < 0.0);
            assert!(branching_mechanism(&p, t * (1.0 + k as f64 / 10.0)) > 0.0);
        }
        assert!(branching_mechanism(&p, t).abs() < 1e-10);
    }

    #[test]
    fn c_v_examples() {
        let p = params(1.0, 0.0, 0.0, 1.0, 1.5, 0.0);
        let c = c_v_root(&p, -2.0 / 3.0).unwrap();
        assert!((c + 1.0).abs() < 1e-12);

        let p = params(1.0, 0.0, 2.0, 1.0, 1.5, 0.0);
        let c = c_v_root(&p, -1e-12).unwrap();
        assert!(c < 0.0 && c > -1e-5);

        // Independent brute-force oracle: dense grid scan then secant refinement.
        let p = params(1.0, 0.0, 1.0, 1.0, 1.5, 0.0);
        let g = |x: f64| x * x / 2.0 + (2.0 / 3.0) * (-x).powf(1.5) - 1.0;
        let mut lo = 0.0;
        let mut x = 0.0;
        while g(x) < 0.0 {
            lo = x;
            x -= 1e-4;
        }
        let (mut x0, mut x1) = (lo, x);
        for _ in 0..50 {
            let (g0, g1) = (g(x0), g(x1));
            if g1 == g0 {
                break;
            }
            let x2 = x1 - g1 * (x1 - x0) / (g1 - g0);
            x0 = x1;
            x1 = x2;
        }
        let c = c_v_root(&p, -1.0).unwrap();
        assert!((c - x1).abs() < 1e-12, "{c} vs {x1}");
    }

    #[test]
    fn c_v_rejects_bad_inputs() {
        let p = params(1.0, 0.0, 1.0, 1.0, 1.5, 0.0);
        assert!(c_v_root(&p, 0.0).is_err());
        assert!(c_v_root(&p.with_b(-1.0), -1.0).is_err());
    }

    #[test]
    fn mean_examples() {
        let p = params(1.0, 1.0, 1.0, 1.0, 1.5, 1.0);
        for t in [0.0, 1.0, 7.5] {
            assert!((mean_y(&p, t) - 1.0).abs() < 1e-15);
        }
        let p = params(1.0, 0.0, 1.0, 1.0, 1.5, 0.0);
        assert_eq!(mean_y(&p, 5.0), 5.0);
        let p = params(1.0, 1.0, 1.0, 1.0, 1.5, 0.0);
        assert!((mean_y(&p, 1.0) - (1.0 - (-1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn mean_is_continuous_across_critical() {
        let p = params(1.0, 0.0, 1.0, 1.0, 1.5, 2.0);
        let base = mean_y(&p, 3.0);
        for b in [1e-9, -1e-9] {
            let m = mean_y(&p.with_b(b), 3.0);
            assert!(((m - base) / base).abs() < 1e-6);
        }
    }

    #[test]
    fn regimes() {
        let p = params(1.0, 1.0, 1.0, 1.0, 1.5, 0.0);
        assert_eq!(classify(&p), Regime::Subcritical);
        assert_eq!(classify(&p.with_b(0.0)), Regime::Critical);
        assert_eq!(classify(&p.with_b(-0.5)), Regime::Supercritical);
    }

    proptest! {
        #[test]
        fn branching_is_strictly_convex(
            sigma in 0.0f64..3.0, delta in 0.1f64..3.0, alpha in 1.05f64..1.95,
            b in -3.0f64..3.0, z1 in 0.01f64..10.0, gap in 0.01f64..10.0,
        ) {
            let p = params(1.0, b, sigma, delta, alpha, 0.0);
            let z2 = z1 + gap;
            let mid = branching_mechanism(&p, 0.5 * (z1 + z2));
            let chord = 0.5 * (branching_mechanism(&p, z1) + branching_mechanism(&p, z2));
            prop_assert!(mid < chord);
        }

        #[test]
        fn c_v_solves_its_equation(
            sigma in 0.0f64..3.0, delta in 0.1f64..3.0, alpha in 1.05f64..1.95,
            b in 0.0f64..3.0, v in -50.0f64..-1e-3,
        ) {
            let p = params(1.0, b, sigma, delta, alpha, 0.0);
            let c = c_v_root(&p, v).unwrap();
            prop_assert!(c < 0.0);
            prop_assert!((branching_mechanism(&p, -c) + v).abs() < 1e-10);
        }

        #[test]
        fn theta0_is_a_root(
            sigma in 0.0f64..3.0, delta in 0.1f64..3.0, alpha in 1.05f64..1.95, b in -3.0f64..-0.01,
        ) {
            let p = params(1.0, b, sigma, delta, alpha, 0.0);
            let t = theta0(&p).unwrap();
            prop_assert!(t > 0.0);
            prop_assert!(branching_mechanism(&p, t).abs() < 1e-10 * (1.0 + t * t));
        }
    }
}
