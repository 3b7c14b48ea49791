//! The driving spectrally positive, strictly α-stable Lévy process `L`.
//!
//! Normalization: the Lévy measure is `m(dz) = C_α z^{-1-α} dz` on `(0, ∞)`
//! with `C_α = 1/(α Γ(-α))`, and `L` is a martingale, so
//! `log E[exp(-λ L_1)] = λ^α / α` for `λ >= 0`.
//!
//! Increments are drawn with the Chambers–Mallows–Stuck generator for a
//! totally skewed (`β = 1`) stable law `S_α(c, 1, 0)`. For that family
//! `E[exp(-λX)] = exp(c^α λ^α / |cos(πα/2)|)` when `1 < α < 2`, so matching
//! the exponent `λ^α/α` fixes `c = (|cos(πα/2)| / α)^{1/α}`. The Monte Carlo
//! tests lock this constant.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::Exp1;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableLaw {
    alpha: f64,
    /// `C_α`
    levy_constant: f64,
    /// Scale of the CMS draw that yields the exponent `λ^α/α`.
    cms_scale: f64,
    cms_shift: f64,
    cms_factor: f64,
}

impl StableLaw {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(Error::Validation(format!(
                "stable index must lie in (1, 2), got {alpha}"
            )));
        }
        // Γ(-α) = Γ(2-α) / (α(α-1)) for α in (1, 2).
        let gamma_neg_alpha = gamma(2.0 - alpha) / (alpha * (alpha - 1.0));
        let levy_constant = 1.0 / (alpha * gamma_neg_alpha);
        let cos_term = (PI * alpha / 2.0).cos().abs();
        let cms_scale = (cos_term / alpha).powf(1.0 / alpha);
        let tan_term = (PI * alpha / 2.0).tan();
        let cms_shift = tan_term.atan() / alpha;
        let cms_factor = (1.0 + tan_term * tan_term).powf(1.0 / (2.0 * alpha));
        Ok(Self {
            alpha,
            levy_constant,
            cms_scale,
            cms_shift,
            cms_factor,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `C_α = 1/(α Γ(-α))`
    pub fn levy_constant(&self) -> f64 {
        self.levy_constant
    }

    /// Drift `γ = C_α/(1-α)` in the truncated Lévy–Itô decomposition.
    pub fn drift(&self) -> f64 {
        self.levy_constant / (1.0 - self.alpha)
    }

    pub fn cms_scale(&self) -> f64 {
        self.cms_scale
    }

    /// `λ^α/α`
    pub fn laplace_exponent(&self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        lambda.powf(self.alpha) / self.alpha
    }

    /// `m((threshold, ∞)) = C_α threshold^{-α}/α`
    pub fn tail_mass(&self, threshold: f64) -> f64 {
        self.levy_constant * threshold.powf(-self.alpha) / self.alpha
    }

    /// `∫_{(ε, ∞)} z m(dz) = C_α ε^{1-α}/(α-1)`: the compensator rate of jumps above `ε`.
    pub fn compensator_above(&self, eps: f64) -> f64 {
        self.levy_constant * eps.powf(1.0 - self.alpha) / (self.alpha - 1.0)
    }

    /// One draw of `L_1`.
    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        let v = PI * (u - 0.5);
        let w: f64 = rng.sample(Exp1);
        let a = self.alpha;
        let shifted = a * (v + self.cms_shift);
        let x = self.cms_factor * shifted.sin() / v.cos().powf(1.0 / a)
            * ((v - shifted).cos() / w).powf((1.0 - a) / a);
        self.cms_scale * x
    }

    /// One draw of `L_{t+dt} - L_t`, distributed as `dt^{1/α} L_1`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Result<f64> {
        if !(dt > 0.0) {
            return Err(Error::Validation(format!("dt must be > 0, got {dt}")));
        }
        Ok(dt.powf(1.0 / self.alpha) * self.sample_unit(rng))
    }
}
