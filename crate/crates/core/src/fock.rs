//! Truncated Fock-space states, harmonic-oscillator eigenfunctions and
//! position-space views.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::linalg::{apply_dense_axis, TensorShape, C64, ONE, ZERO};

/// `π^(-1/4)`.
pub const PI_QUARTER_INV: f64 = 0.751_125_544_464_942_5;

/// The `n`th harmonic-oscillator eigenfunction `φ_n(x)` (ħ = m = ω = 1).
///
/// Uses the normalised three-term recurrence, which stays finite for all
/// `n` of interest without forming Hermite polynomials or factorials.
pub fn hermite_fn(n: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = PI_QUARTER_INV * (-0.5 * x * x).exp();
    for k in 1..=n {
        let next = (2.0 / k as f64).sqrt() * x * cur - ((k - 1) as f64 / k as f64).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Checked variant of [`hermite_fn`] taking a signed order.
pub fn hermite_fn_checked(n: i64, x: f64) -> Result<f64> {
    if n < 0 {
        return Err(Error::Domain(format!(
            "Hermite order must be non-negative, got {n}"
        )));
    }
    if !x.is_finite() {
        return Err(Error::Domain(format!(
            "Hermite argument must be finite, got {x}"
        )));
    }
    Ok(hermite_fn(n as usize, x))
}

/// `[φ_0(x), …, φ_{n_max}(x)]` in one pass.
pub fn hermite_table(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    hermite_fill(x, n_max, &mut out);
    out
}

pub(crate) fn hermite_fill(x: f64, n_max: usize, out: &mut Vec<f64>) {
    out.clear();
    let mut prev = 0.0;
    let mut cur = PI_QUARTER_INV * (-0.5 * x * x).exp();
    out.push(cur);
    for k in 1..=n_max {
        let next = (2.0 / k as f64).sqrt() * x * cur - ((k - 1) as f64 / k as f64).sqrt() * prev;
        prev = cur;
        cur = next;
        out.push(cur);
    }
}

/// Half-width beyond which the truncated basis no longer describes the
/// position wavefunction reliably.
pub fn reliable_halfwidth(n_max: usize) -> f64 {
    (2.0 * n_max as f64).sqrt() + 4.0
}

/// Uniform position grid (inclusive end points).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub num_points: usize,
}

impl Default for PositionGrid {
    fn default() -> Self {
        Self {
            x_min: -8.0,
            x_max: 8.0,
            num_points: 401,
        }
    }
}

impl PositionGrid {
    pub fn new(x_min: f64, x_max: f64, num_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return config_err(format!(
                "grid requires x_min < x_max, got [{x_min}, {x_max}]"
            ));
        }
        if num_points < 2 {
            return config_err(format!("grid needs at least 2 points, got {num_points}"));
        }
        Ok(Self {
            x_min,
            x_max,
            num_points,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.num_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.num_points).map(|i| self.point(i)).collect()
    }
}

/// A pure state of `num_modes` qumodes truncated at `n_max` photons each.
///
/// `norm_weight` accumulates the squared norms discarded by measurement
/// renormalisation, i.e. the joint probability (or probability density,
/// for position projections) of the branch this state represents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QumodeState {
    #[serde(with = "crate::cjson::vec")]
    amplitudes: Vec<C64>,
    n_max: usize,
    num_modes: usize,
    norm_weight: f64,
}

impl QumodeState {
    /// Product vacuum `|0,…,0⟩`.
    pub fn ground_state(n_max: usize, num_modes: usize) -> Result<Self> {
        validate_shape(n_max, num_modes)?;
        let len = (n_max + 1).pow(num_modes as u32);
        let mut amplitudes = vec![ZERO; len];
        amplitudes[0] = ONE;
        Ok(Self {
            amplitudes,
            n_max,
            num_modes,
            norm_weight: 1.0,
        })
    }

    pub fn from_amplitudes(n_max: usize, num_modes: usize, amplitudes: Vec<C64>) -> Result<Self> {
        validate_shape(n_max, num_modes)?;
        let len = (n_max + 1).pow(num_modes as u32);
        if amplitudes.len() != len {
            return Err(Error::Contract(format!(
                "expected {len} amplitudes for {num_modes} modes at n_max = {n_max}, got {}",
                amplitudes.len()
            )));
        }
        Ok(Self {
            amplitudes,
            n_max,
            num_modes,
            norm_weight: 1.0,
        })
    }

    /// Single-mode number state `|n⟩`.
    pub fn fock(n_max: usize, n: usize) -> Result<Self> {
        if n > n_max {
            return config_err(format!("Fock level {n} exceeds n_max = {n_max}"));
        }
        let mut s = Self::ground_state(n_max, 1)?;
        s.amplitudes[0] = ZERO;
        s.amplitudes[n] = ONE;
        Ok(s)
    }

    /// Single-mode coherent state from the analytic series, then normalised
    /// on the truncated space.
    pub fn coherent(n_max: usize, alpha: C64) -> Result<Self> {
        let mut amps = Vec::with_capacity(n_max + 1);
        let mut term = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        amps.push(term);
        for n in 1..=n_max {
            term = term * alpha / (n as f64).sqrt();
            amps.push(term);
        }
        let mut s = Self::from_amplitudes(n_max, 1, amps)?;
        s.normalize();
        Ok(s)
    }

    pub(crate) fn from_parts(
        n_max: usize,
        num_modes: usize,
        amplitudes: Vec<C64>,
        norm_weight: f64,
    ) -> Self {
        debug_assert_eq!(amplitudes.len(), (n_max + 1).pow(num_modes as u32));
        Self {
            amplitudes,
            n_max,
            num_modes,
            norm_weight,
        }
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn norm_weight(&self) -> f64 {
        self.norm_weight
    }

    pub fn set_norm_weight(&mut self, w: f64) {
        self.norm_weight = w;
    }

    pub fn shape(&self) -> TensorShape {
        TensorShape::new(self.dim(), self.num_modes)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rescales to unit norm and returns the squared norm before scaling.
    pub fn normalize(&mut self) -> f64 {
        let n2 = self.norm_sqr();
        if n2 > 0.0 {
            let s = 1.0 / n2.sqrt();
            self.amplitudes.iter_mut().for_each(|a| *a *= s);
        }
        n2
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let d = self.dim();
        let mut idx = vec![0; self.num_modes];
        let mut rest = flat;
        for k in (0..self.num_modes).rev() {
            idx[k] = rest % d;
            rest /= d;
        }
        idx
    }

    pub fn flat_index(&self, index: &[usize]) -> usize {
        index.iter().fold(0, |acc, &n| acc * self.dim() + n)
    }

    pub fn amplitude(&self, index: &[usize]) -> C64 {
        self.amplitudes[self.flat_index(index)]
    }

    /// Tensor product `self ⊗ other`; `other`'s modes are appended last.
    pub fn tensor(&self, other: &QumodeState) -> Result<QumodeState> {
        if self.n_max != other.n_max {
            return Err(Error::Contract(format!(
                "cannot combine truncations {} and {}",
                self.n_max, other.n_max
            )));
        }
        let mut amps = Vec::with_capacity(self.amplitudes.len() * other.amplitudes.len());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amps.push(a * b);
            }
        }
        Ok(QumodeState {
            amplitudes: amps,
            n_max: self.n_max,
            num_modes: self.num_modes + other.num_modes,
            norm_weight: self.norm_weight * other.norm_weight,
        })
    }

    /// Applies a dense single-mode operator to `mode`.
    pub fn apply_single_mode(&mut self, mode: usize, u: &nalgebra::DMatrix<C64>) -> Result<()> {
        self.check_mode(mode)?;
        let mut out = vec![ZERO; self.amplitudes.len()];
        apply_dense_axis(self.shape(), mode, u, &self.amplitudes, &mut out);
        self.amplitudes = out;
        Ok(())
    }

    pub(crate) fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.num_modes {
            return Err(Error::Contract(format!(
                "mode {mode} out of range for a {}-mode state",
                self.num_modes
            )));
        }
        Ok(())
    }

    /// Reduced photon-number distribution of one mode.
    pub fn photon_distribution(&self, mode: usize) -> Result<Vec<f64>> {
        self.check_mode(mode)?;
        let shape = self.shape();
        let inner = shape.stride(mode);
        let d = self.dim();
        let mut probs = vec![0.0; d];
        for (flat, a) in self.amplitudes.iter().enumerate() {
            probs[(flat / inner) % d] += a.norm_sqr();
        }
        Ok(probs)
    }

    /// `⟨x̂⟩` and `Var(x̂)` of one mode, from the truncated position operator.
    pub fn position_moments(&self, mode: usize) -> Result<(f64, f64)> {
        self.check_mode(mode)?;
        let x = crate::linalg::SparseOp::position(self.n_max);
        let x2 = {
            let mut buf = vec![ZERO; self.amplitudes.len()];
            x.apply_axis_add(self.shape(), mode, ONE, &self.amplitudes, &mut buf);
            buf
        };
        let n2 = self.norm_sqr();
        let mean: f64 = self
            .amplitudes
            .iter()
            .zip(&x2)
            .map(|(a, b)| (a.conj() * b).re)
            .sum::<f64>()
            / n2;
        let second: f64 = x2.iter().map(|b| b.norm_sqr()).sum::<f64>() / n2;
        Ok((mean, second - mean * mean))
    }

    /// `⟨ψ|x̂_a x̂_b|ψ⟩` for two distinct modes.
    pub fn position_correlation(&self, mode_a: usize, mode_b: usize) -> Result<f64> {
        self.check_mode(mode_a)?;
        self.check_mode(mode_b)?;
        let x = crate::linalg::SparseOp::position(self.n_max);
        let mut xa = vec![ZERO; self.amplitudes.len()];
        x.apply_axis_add(self.shape(), mode_a, ONE, &self.amplitudes, &mut xa);
        let mut xb = vec![ZERO; self.amplitudes.len()];
        x.apply_axis_add(self.shape(), mode_b, ONE, &self.amplitudes, &mut xb);
        Ok(xa
            .iter()
            .zip(&xb)
            .map(|(a, b)| (a.conj() * b).re)
            .sum::<f64>()
            / self.norm_sqr())
    }
}

fn validate_shape(n_max: usize, num_modes: usize) -> Result<()> {
    if n_max < 1 {
        return config_err(format!("truncation n_max must be at least 1, got {n_max}"));
    }
    if num_modes < 1 {
        return config_err("a state needs at least one mode");
    }
    Ok(())
}

/// Position density on a grid, with a flag for grids extending beyond the
/// reliable range of the truncated basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub grid: PositionGrid,
    pub rho: Vec<f64>,
    pub outside_reliable_range: bool,
}

impl DensityProfile {
    /// `Σ ρ_i Δx`.
    pub fn integral(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.spacing()
    }

    pub fn argmax(&self) -> f64 {
        let (i, _) =
            self.rho.iter().enumerate().fold(
                (0, f64::MIN),
                |best, (i, &v)| if v > best.1 { (i, v) } else { best },
            );
        self.grid.point(i)
    }
}

/// Marginal position density of `mode`.
///
/// For each configuration of the other modes the target mode is transformed
/// to the grid and `|·|²` is accumulated, which equals the reduced density
/// without forming a density matrix.
pub fn position_density(
    state: &QumodeState,
    mode: usize,
    grid: &PositionGrid,
) -> Result<DensityProfile> {
    state.check_mode(mode)?;
    let d = state.dim();
    let shape = state.shape();
    let inner = shape.stride(mode);
    let outer = shape.outer(mode);
    let mut table = Vec::with_capacity(d);
    let amps = state.amplitudes();
    let mut rho = Vec::with_capacity(grid.num_points);
    for i in 0..grid.num_points {
        hermite_fill(grid.point(i), state.n_max(), &mut table);
        let mut acc = 0.0;
        for o in 0..outer {
            let base = o * d * inner;
            for j in 0..inner {
                let mut psi = ZERO;
                for (n, h) in table.iter().enumerate() {
                    psi += amps[base + n * inner + j] * *h;
                }
                acc += psi.norm_sqr();
            }
        }
        rho.push(acc);
    }
    let limit = reliable_halfwidth(state.n_max());
    Ok(DensityProfile {
        grid: *grid,
        rho,
        outside_reliable_range: grid.x_min.abs() > limit || grid.x_max.abs() > limit,
    })
}

/// Single-mode position wavefunction `Σ A_n φ_n(x)` at the given points.
pub fn wavefunction(state: &QumodeState, xs: &[f64]) -> Result<Vec<C64>> {
    if state.num_modes() != 1 {
        return Err(Error::Contract(
            "wavefunction requires a single-mode state".into(),
        ));
    }
    let mut table = Vec::with_capacity(state.dim());
    Ok(xs
        .iter()
        .map(|&x| {
            hermite_fill(x, state.n_max(), &mut table);
            state
                .amplitudes()
                .iter()
                .zip(&table)
                .map(|(a, h)| a * *h)
                .sum()
        })
        .collect())
}

/// `⟨a|b⟩`.
pub fn inner_product(a: &QumodeState, b: &QumodeState) -> Result<C64> {
    if a.n_max() != b.n_max() || a.num_modes() != b.num_modes() {
        return Err(Error::Contract(format!(
            "shape mismatch: ({} modes, n_max {}) vs ({} modes, n_max {})",
            a.num_modes(),
            a.n_max(),
            b.num_modes(),
            b.n_max()
        )));
    }
    Ok(a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// `|⟨a|b⟩|²` for normalised states.
pub fn fidelity(a: &QumodeState, b: &QumodeState) -> Result<f64> {
    Ok(inner_product(a, b)?.norm_sqr())
}
