//! Evolver-state coefficients from the top-hat resource.
//!
//! The ancilla is prepared in `φ(y) = T(y)·f(y/q)` with `f(u) =
//! exp(−i H₁(u) δt)` and `T` the top-hat of width `L` and height `1/L`.
//! Projected on the truncated Fock basis,
//!
//! ```text
//! A_n = (1/L) ∫_{−L/2}^{L/2} exp(−i H₁(y/q) δt) φ_n(y) dy .
//! ```
//!
//! The stored vector is renormalised; the captured squared norm before
//! renormalisation (which tends to `1/L` as `n_max → ∞`) is kept alongside.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::fock::{hermite_fill, QumodeState};
use crate::linalg::{C64, ZERO};
use crate::potential::NonGaussian;
use crate::quadrature::CompositeRule;

/// Default resource scale.
pub const DEFAULT_Q: f64 = 1.5;
/// Default top-hat width.
pub const DEFAULT_L: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolverSpec {
    pub q: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub delta_t: f64,
    pub n_max: usize,
    #[serde(with = "crate::cjson::vec")]
    pub coefficients: Vec<C64>,
    /// `L / (2q)`: the system positions on which the gadget applies `f`.
    pub validity_halfwidth: f64,
    /// `Σ|A_n|²` before renormalisation.
    pub captured_norm_sq: f64,
    pub quadrature_refinements: usize,
}

impl EvolverSpec {
    /// Coefficients before renormalisation.
    pub fn unnormalized(&self) -> Vec<C64> {
        let s = self.captured_norm_sq.sqrt();
        self.coefficients.iter().map(|a| a * s).collect()
    }

    pub fn ket(&self) -> Result<QumodeState> {
        build_evolver_ket(self)
    }
}

/// Computes the evolver coefficients for `h1` by composite Gauss–Legendre.
pub fn evolver_coefficients(
    h1: &dyn NonGaussian,
    delta_t: f64,
    q: f64,
    l: f64,
    n_max: usize,
    rule: &CompositeRule,
) -> Result<EvolverSpec> {
    if !(q.is_finite() && q > 0.0) {
        return config_err(format!("q must be positive, got {q}"));
    }
    if !(l.is_finite() && l > 0.0) {
        return config_err(format!("L must be positive, got {l}"));
    }
    if !(delta_t.is_finite() && delta_t >= 0.0) {
        return config_err(format!("delta_t must be non-negative, got {delta_t}"));
    }
    if n_max < 1 {
        return config_err("n_max must be at least 1");
    }
    let inv_l = 1.0 / l;
    let integral = rule.integrate(-0.5 * l, 0.5 * l, n_max + 1, |y, out: &mut [C64]| {
        let phase = C64::from_polar(inv_l, -h1.h1(y / q) * delta_t);
        let mut table = Vec::with_capacity(n_max + 1);
        hermite_fill(y, n_max, &mut table);
        for (o, h) in out.iter_mut().zip(&table) {
            *o = phase * *h;
        }
    })?;
    let mut coefficients = integral.values;
    let captured: f64 = coefficients.iter().map(|a| a.norm_sqr()).sum();
    let scale = captured.sqrt().recip();
    coefficients.iter_mut().for_each(|a| *a *= scale);
    Ok(EvolverSpec {
        q,
        l,
        delta_t,
        n_max,
        coefficients,
        validity_halfwidth: l / (2.0 * q),
        captured_norm_sq: captured,
        quadrature_refinements: integral.refinements,
    })
}

/// Single-mode ancilla state carrying the evolver coefficients.
pub fn build_evolver_ket(spec: &EvolverSpec) -> Result<QumodeState> {
    if spec.coefficients.len() != spec.n_max + 1 {
        return config_err(format!(
            "evolver has {} coefficients, expected n_max + 1 = {}",
            spec.coefficients.len(),
            spec.n_max + 1
        ));
    }
    let mut state = QumodeState::from_amplitudes(spec.n_max, 1, spec.coefficients.clone())?;
    state.normalize();
    Ok(state)
}

/// Position reconstruction `Σ A_n φ_n(y)` of raw (unnormalised) coefficients.
pub fn reconstruct(coefficients: &[C64], ys: &[f64]) -> Vec<C64> {
    let n_max = coefficients.len() - 1;
    let mut table = Vec::with_capacity(n_max + 1);
    ys.iter()
        .map(|&y| {
            hermite_fill(y, n_max, &mut table);
            coefficients
                .iter()
                .zip(&table)
                .fold(ZERO, |acc, (a, h)| acc + a * *h)
        })
        .collect()
}
