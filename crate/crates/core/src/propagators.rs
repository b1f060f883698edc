//! Exact multiplier solution operators for the linear short-wave
//! (dispersive) and long-wave (heat) flows.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sobolev::{InequalityReport, INEQUALITY_SLACK};
use crate::spectral::{Field, FracOrder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorSpec {
    pub eps: f64,
    /// Exponent of the dispersive regularization `ε^a ∂²`.
    pub a: u32,
    /// Exponent of the viscous regularization `ε^b ∂²`.
    pub b: u32,
    pub s: FracOrder,
}

impl PropagatorSpec {
    pub const DEFAULT_A: u32 = 4;
    pub const DEFAULT_B: u32 = 7;

    pub fn new(eps: f64, a: u32, b: u32, s: FracOrder) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(format!("ε must lie in (0, 1), got {eps}")));
        }
        Ok(Self { eps, a, b, s })
    }

    pub fn with_default_exponents(eps: f64, s: FracOrder) -> Result<Self> {
        Self::new(eps, Self::DEFAULT_A, Self::DEFAULT_B, s)
    }

    pub fn dispersion(&self) -> f64 {
        self.eps.powi(self.a as i32)
    }

    pub fn viscosity(&self) -> f64 {
        self.eps.powi(self.b as i32)
    }

    /// Frequency `|k|^{2s} + ε^a k²` of the dispersive flow.
    pub fn frequency(&self, k: f64) -> f64 {
        let fr = if k == 0.0 { 0.0 } else { k.abs().powf(2.0 * self.s.value()) };
        fr + self.dispersion() * k * k
    }
}

/// `U_ε(t) u`: multiplier `exp(-i(|k|^{2s} + ε^a k²) t)`.
///
/// The Nyquist slot uses the same symbol as the rest of the spectrum; the
/// fractional part of the frequency is dropped there, consistent with the
/// multiplier convention of [`Field::frac_power`].
pub fn schrodinger_group_apply(u: &Field, t: f64, p: &PropagatorSpec) -> Field {
    let nyq = u.grid().wavenumber(u.grid().nyquist_slot());
    u.apply_symbol(false, |k| {
        let w = if k == nyq {
            p.dispersion() * k * k
        } else {
            p.frequency(k)
        };
        Complex64::from_polar(1.0, -w * t)
    })
}

/// `W_ε(t) v`: multiplier `exp(-ε^b k² t)`, `t ≥ 0`.
pub fn heat_semigroup_apply(v: &Field, t: f64, p: &PropagatorSpec) -> Result<Field> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "heat semigroup needs t ≥ 0, got {t}"
        )));
    }
    let nu = p.viscosity();
    Ok(v.apply_symbol(false, |k| Complex64::new((-nu * k * k * t).exp(), 0.0)))
}

/// Checks `‖∂_x W_ε(t) v‖₂ ≤ (π ε^b)^{-1/2} t^{-1/2} ‖v‖₂`.
pub fn check_heat_smoothing(v: &Field, t: f64, p: &PropagatorSpec) -> Result<InequalityReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "smoothing check needs t > 0, got {t}"
        )));
    }
    let constant = 1.0 / (std::f64::consts::PI * p.viscosity()).sqrt();
    let lhs = heat_semigroup_apply(v, t, p)?.derivative().l2_norm();
    let rhs = constant * t.powf(-0.5) * v.l2_norm();
    Ok(InequalityReport {
        name: "heat_smoothing".into(),
        s: p.s.value(),
        lhs,
        rhs,
        constant,
        margin: rhs - lhs,
        tolerance: INEQUALITY_SLACK * rhs.max(1.0),
        witness: format!("t = {t:e}"),
        seed: None,
    })
}
