//! Homodyne projection and photon-number post-selection.
//!
//! Both measurements are deterministic conditioning: they return the
//! branch for a chosen outcome together with its weight, and remove the
//! measured mode from the tensor. Measuring the last remaining mode leaves
//! a zero-mode state holding a single scalar amplitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{hermite_table, QumodeState};
use crate::linalg::{C64, ZERO};
use crate::quadrature::CompositeRule;

/// Branches whose squared norm falls below this are rejected.
pub const ZERO_PROBABILITY: f64 = 1e-14;

/// Default variance of the squeezed-state homodyne projector.
pub const DEFAULT_SIGMA: f64 = 2e-4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum HomodyneScheme {
    /// Ideal position eigenstate `⟨x = value|`.
    #[default]
    Delta,
    /// Displaced Gaussian of position variance `sigma`.
    Squeezed { sigma: f64 },
}

impl HomodyneScheme {
    pub fn squeezed() -> Self {
        HomodyneScheme::Squeezed {
            sigma: DEFAULT_SIGMA,
        }
    }

    /// Real overlaps `⟨χ_value|n⟩` for `n = 0..=n_max`.
    pub fn projector(&self, value: f64, n_max: usize) -> Result<Vec<f64>> {
        if !value.is_finite() {
            return Err(Error::Config(format!(
                "homodyne value must be finite, got {value}"
            )));
        }
        match *self {
            HomodyneScheme::Delta => Ok(hermite_table(n_max, value)),
            HomodyneScheme::Squeezed { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::Config(format!(
                        "squeezed homodyne needs sigma > 0, got {sigma}"
                    )));
                }
                let width = 12.0 * sigma.sqrt();
                let norm = (2.0 * std::f64::consts::PI * sigma).powf(-0.25);
                let rule = CompositeRule {
                    nodes_per_unit: (64.0 / width).ceil() as usize,
                    ..CompositeRule::default()
                };
                let integral = rule.integrate(
                    value - width,
                    value + width,
                    n_max + 1,
                    |y, out: &mut [f64]| {
                        let g = norm * (-(y - value).powi(2) / (4.0 * sigma)).exp();
                        let table = hermite_table(n_max, y);
                        for (o, h) in out.iter_mut().zip(table) {
                            *o = g * h;
                        }
                    },
                )?;
                Ok(integral.values)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeasurementKind {
    Homodyne { value: f64, scheme: HomodyneScheme },
    Pnr { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub mode: usize,
    pub kind: MeasurementKind,
    /// Squared norm of the branch before renormalisation.
    pub weight: f64,
}

/// Projects `mode` onto the position outcome `value`.
pub fn homodyne(
    state: &QumodeState,
    mode: usize,
    value: f64,
    scheme: HomodyneScheme,
) -> Result<(QumodeState, MeasurementRecord)> {
    state.check_mode(mode)?;
    let w = scheme.projector(value, state.n_max())?;
    let w: Vec<C64> = w.into_iter().map(|v| C64::new(v, 0.0)).collect();
    let kind = MeasurementKind::Homodyne { value, scheme };
    condition(state, mode, &w, kind)
}

/// Keeps the branch with `m` photons in `mode`.
pub fn pnr_postselect(
    state: &QumodeState,
    mode: usize,
    m: usize,
) -> Result<(QumodeState, MeasurementRecord)> {
    state.check_mode(mode)?;
    if m > state.n_max() {
        return Err(Error::Config(format!(
            "photon number {m} exceeds truncation n_max = {}",
            state.n_max()
        )));
    }
    let mut w = vec![ZERO; state.dim()];
    w[m] = C64::new(1.0, 0.0);
    condition(state, mode, &w, MeasurementKind::Pnr { m })
}

/// Contracts `mode` with the bra whose components are `conj(bra)`, then
/// renormalises.
fn condition(
    state: &QumodeState,
    mode: usize,
    bra: &[C64],
    kind: MeasurementKind,
) -> Result<(QumodeState, MeasurementRecord)> {
    let shape = state.shape();
    let d = shape.d;
    let inner = shape.stride(mode);
    let outer = shape.outer(mode);
    let amps = state.amplitudes();
    let mut out = vec![ZERO; outer * inner];
    for o in 0..outer {
        for (n, b) in bra.iter().enumerate() {
            if *b == ZERO {
                continue;
            }
            let b = b.conj();
            let src = &amps[(o * d + n) * inner..(o * d + n + 1) * inner];
            for (dst, a) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *dst += b * a;
            }
        }
    }
    let weight: f64 = out.iter().map(|a| a.norm_sqr()).sum();
    if weight.is_nan() || weight < ZERO_PROBABILITY {
        return Err(Error::ZeroProbability {
            mode,
            weight,
            threshold: ZERO_PROBABILITY,
        });
    }
    let scale = weight.sqrt().recip();
    out.iter_mut().for_each(|a| *a *= scale);
    let next = QumodeState::from_parts(
        state.n_max(),
        state.num_modes() - 1,
        out,
        state.norm_weight() * weight,
    );
    Ok((next, MeasurementRecord { mode, kind, weight }))
}
