//! Classical references and comparison metrics.
//!
//! [`FockHamiltonian`] diagonalises `p²/2 + V(x)` in the truncated Fock
//! basis, using matrix elements projected from a much larger basis so the
//! only approximation is the truncation of the state itself.
//! [`GridSolver`] integrates the Schrödinger equation on a uniform grid by
//! Strang split-step with FFTs and knows nothing about Fock spaces.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{inner_product, position_density, QumodeState};
use crate::linalg::{momentum_matrix, PositionSpectrum, C64, ZERO};
use crate::trotter::EvolutionTrace;

/// Probability floor applied after grid normalisation.
pub const KL_FLOOR: f64 = 1e-12;

/// Extra levels used to project operator matrix elements.
const PROJECTION_MARGIN: usize = 40;

/// `H = p²/2 + V(x)` restricted to levels `0..=n_max`, with its
/// eigendecomposition.
#[derive(Debug, Clone)]
pub struct FockHamiltonian {
    pub matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl FockHamiltonian {
    pub fn new(potential: impl Fn(f64) -> f64, n_max: usize) -> Result<Self> {
        let big = 2 * n_max + PROJECTION_MARGIN;
        let spectrum = PositionSpectrum::new(big);
        if spectrum.nodes.iter().any(|&x| !potential(x).is_finite()) {
            return Err(Error::Domain(
                "potential is not finite on the projection nodes".into(),
            ));
        }
        let v = spectrum.function_matrix(&potential);
        let p = momentum_matrix(big);
        let p2 = (&p * &p).map(|z| z.re);
        let d = n_max + 1;
        let matrix = DMatrix::from_fn(d, d, |i, j| {
            let h = 0.5 * p2[(i, j)] + v[(i, j)];
            let ht = 0.5 * p2[(j, i)] + v[(j, i)];
            0.5 * (h + ht)
        });
        let eig = SymmetricEigen::new(matrix.clone());
        Ok(Self {
            matrix,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn n_max(&self) -> usize {
        self.matrix.nrows() - 1
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` for a single-mode state.
    pub fn energy(&self, state: &QumodeState) -> Result<f64> {
        self.check(state)?;
        let a = state.amplitudes();
        let mut e = 0.0;
        for (i, ai) in a.iter().enumerate() {
            let row: C64 = a
                .iter()
                .zip(self.matrix.row(i).iter())
                .map(|(aj, h)| aj * *h)
                .sum();
            e += (ai.conj() * row).re;
        }
        Ok(e / state.norm_sqr())
    }

    fn check(&self, state: &QumodeState) -> Result<()> {
        if state.num_modes() != 1 || state.n_max() != self.n_max() {
            return Err(Error::Contract(format!(
                "oracle needs a single-mode state at n_max = {}, got {} modes at n_max = {}",
                self.n_max(),
                state.num_modes(),
                state.n_max()
            )));
        }
        Ok(())
    }
}

/// `exp(−iHt)|ψ₀⟩` from the eigendecomposition.
pub fn exact_evolution(h: &FockHamiltonian, psi0: &QumodeState, t: f64) -> Result<QumodeState> {
    h.check(psi0)?;
    let d = h.matrix.nrows();
    let a = psi0.amplitudes();
    let v = &h.eigenvectors;
    let mut c = vec![ZERO; d];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut acc = ZERO;
        for i in 0..d {
            acc += a[i] * v[(i, k)];
        }
        *ck = acc * C64::from_polar(1.0, -h.eigenvalues[k] * t);
    }
    let out: Vec<C64> = (0..d)
        .map(|i| (0..d).fold(ZERO, |acc, k| acc + c[k] * v[(i, k)]))
        .collect();
    let mut s = QumodeState::from_amplitudes(h.n_max(), 1, out)?;
    s.set_norm_weight(psi0.norm_weight());
    Ok(s)
}

/// Periodic uniform grid for the split-step solver: `points` samples
/// starting at `x_min` with spacing `(x_max − x_min)/points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for FftGrid {
    fn default() -> Self {
        Self {
            x_min: -12.0,
            x_max: 12.0,
            points: 2048,
        }
    }
}

impl FftGrid {
    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / self.points as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.points)
            .map(|i| self.x_min + i as f64 * dx)
            .collect()
    }

    fn wavenumbers(&self) -> Vec<f64> {
        let n = self.points;
        let dk = 2.0 * std::f64::consts::PI / (n as f64 * self.spacing());
        (0..n)
            .map(|j| if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 } * dk)
            .collect()
    }
}

/// Strang split-step Fourier integrator for `p²/2 + V(x)`.
pub struct GridSolver {
    grid: FftGrid,
    potential: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Density above this at the first or last grid point is a domain error.
    pub edge_tolerance: f64,
    /// Largest time step.
    pub dt_max: f64,
}

impl GridSolver {
    pub fn new(potential: impl Fn(f64) -> f64, grid: FftGrid) -> Result<Self> {
        if grid.points < 2
            || !grid.x_min.is_finite()
            || !grid.x_max.is_finite()
            || grid.x_max <= grid.x_min
        {
            return Err(Error::Config(format!("invalid FFT grid {grid:?}")));
        }
        let values: Vec<f64> = grid.points().into_iter().map(potential).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("potential is not finite on the grid".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            forward: planner.plan_fft_forward(grid.points),
            inverse: planner.plan_fft_inverse(grid.points),
            grid,
            potential: values,
            edge_tolerance: 1e-8,
            dt_max: 1e-3,
        })
    }

    pub fn grid(&self) -> &FftGrid {
        &self.grid
    }

    fn check_edges(&self, psi: &[C64], t: f64) -> Result<()> {
        let edge = psi[0].norm_sqr().max(psi[psi.len() - 1].norm_sqr());
        if edge > self.edge_tolerance {
            return Err(Error::Domain(format!(
                "density {edge:.3e} at the grid boundary at t = {t} exceeds {:e}",
                self.edge_tolerance
            )));
        }
        Ok(())
    }

    /// Evolves `psi0` (sampled on the grid) and returns the wavefunction at
    /// each of the non-decreasing `times`.
    pub fn evolve(&self, psi0: &[C64], times: &[f64]) -> Result<Vec<Vec<C64>>> {
        if psi0.len() != self.grid.points {
            return Err(Error::Contract(format!(
                "initial state has {} samples, grid has {}",
                psi0.len(),
                self.grid.points
            )));
        }
        if !(self.dt_max > 0.0 && self.dt_max <= 1e-3) {
            return Err(Error::Config(format!(
                "grid time step must lie in (0, 1e-3], got {}",
                self.dt_max
            )));
        }
        self.check_edges(psi0, 0.0)?;
        let k2: Vec<f64> = self
            .grid
            .wavenumbers()
            .iter()
            .map(|k| 0.5 * k * k)
            .collect();
        let inv_n = 1.0 / self.grid.points as f64;
        let mut psi = psi0.to_vec();
        let mut scratch = vec![
            ZERO;
            self.forward
                .get_inplace_scratch_len()
                .max(self.inverse.get_inplace_scratch_len())
        ];
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            if target < now {
                return Err(Error::Config("output times must be non-decreasing".into()));
            }
            let span = target - now;
            let steps = (span / self.dt_max).ceil() as usize;
            if steps > 0 {
                let dt = span / steps as f64;
                let half_v: Vec<C64> = self
                    .potential
                    .iter()
                    .map(|v| C64::from_polar(1.0, -0.5 * dt * v))
                    .collect();
                let kin: Vec<C64> = k2.iter().map(|k| C64::from_polar(inv_n, -dt * k)).collect();
                for _ in 0..steps {
                    psi.iter_mut().zip(&half_v).for_each(|(p, v)| *p *= v);
                    self.forward.process_with_scratch(&mut psi, &mut scratch);
                    psi.iter_mut().zip(&kin).for_each(|(p, k)| *p *= k);
                    self.inverse.process_with_scratch(&mut psi, &mut scratch);
                    psi.iter_mut().zip(&half_v).for_each(|(p, v)| *p *= v);
                }
            }
            now = target;
            self.check_edges(&psi, now)?;
            out.push(psi.clone());
        }
        Ok(out)
    }
}

/// Densities `|ψ(x, t)|²` on the default FFT grid for each time.
pub fn grid_schrodinger(
    potential: impl Fn(f64) -> f64,
    psi0: &[C64],
    times: &[f64],
    dt_grid: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut solver = GridSolver::new(potential, FftGrid::default())?;
    solver.dt_max = dt_grid;
    Ok(solver
        .evolve(psi0, times)?
        .into_iter()
        .map(|psi| psi.iter().map(|z| z.norm_sqr()).collect())
        .collect())
}

/// `Σ p ln(p/q)` in nats after normalising both to probability vectors and
/// flooring at [`KL_FLOOR`].
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Contract(format!(
            "densities have different lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    if p.iter().chain(q).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Contract(
            "densities must be finite and non-negative".into(),
        ));
    }
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if sp <= 0.0 || sq <= 0.0 {
        return Err(Error::Contract("densities must have positive mass".into()));
    }
    Ok(p.iter()
        .zip(q)
        .map(|(a, b)| {
            let a = (a / sp).max(KL_FLOOR);
            let b = (b / sq).max(KL_FLOOR);
            a * (a / b).ln()
        })
        .sum())
}

/// `(Σ (p − q)² Δx)^{1/2}`.
pub fn l2_density_error(p: &[f64], q: &[f64], dx: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Contract("densities have different lengths".into()));
    }
    Ok((p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * dx).sqrt())
}

/// One row of a Trotter-versus-oracle comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: f64,
    pub n_max: usize,
    /// `KL(ρ_trotter ‖ ρ_exact)` on the trace grid.
    pub kl: f64,
    pub fidelity: f64,
    pub l2_error: f64,
}

/// Compares every recorded state of `trace` with exact evolution of `psi0`
/// under `h` (same truncation).
pub fn trace_metrics(
    trace: &EvolutionTrace,
    psi0: &QumodeState,
    h: &FockHamiltonian,
) -> Result<Vec<MetricRow>> {
    trace
        .records
        .iter()
        .map(|rec| {
            let state = rec
                .state
                .as_ref()
                .ok_or_else(|| Error::Contract("trace record carries no state".into()))?;
            let exact = exact_evolution(h, psi0, rec.time)?;
            let rho = position_density(&exact, 0, &trace.grid)?.rho;
            let overlap =
                inner_product(state, &exact)?.norm_sqr() / (state.norm_sqr() * exact.norm_sqr());
            Ok(MetricRow {
                t: rec.time,
                n_max: trace.n_max,
                kl: kl_divergence(&rec.density, &rho)?,
                fidelity: overlap,
                l2_error: l2_density_error(&rec.density, &rho, trace.grid.spacing())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{position_density, wavefunction, PositionGrid};
    use crate::potential::PotentialSpec;

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        let pq = kl_divergence(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        let qp = kl_divergence(&[0.9, 0.1], &[0.5, 0.5]).unwrap();
        assert!((pq - (0.5 * (5.0f64 / 9.0).ln() + 0.5 * 5f64.ln())).abs() < 1e-15);
        assert!((pq - 0.51083).abs() < 1e-5);
        assert!((qp - 0.36806).abs() < 1e-5);
        // Scale invariance from the normalisation.
        assert!((kl_divergence(&[1.0, 1.0], &[9.0, 1.0]).unwrap() - pq).abs() < 1e-15);
        assert!(kl_divergence(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn harmonic_vacuum_stationary() {
        let h = FockHamiltonian::new(|x| 0.5 * x * x, 30).unwrap();
        let vac = QumodeState::ground_state(30, 1).unwrap();
        for t in [0.0, 0.7, 3.0] {
            let out = exact_evolution(&h, &vac, t).unwrap();
            assert!((out.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
        }
        assert!((h.energy(&vac).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_time_is_identity() {
        let h = FockHamiltonian::new(|x| PotentialSpec::double_well(0.1).value(x), 20).unwrap();
        let psi = QumodeState::coherent(20, C64::new(0.3, 0.4)).unwrap();
        let out = exact_evolution(&h, &psi, 0.0).unwrap();
        for (a, b) in out.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn exact_evolution_conserves_norm_and_energy() {
        let v = PotentialSpec::cosh_shifted(1.0);
        let h = FockHamiltonian::new(|x| v.value(x), 40).unwrap();
        let psi = QumodeState::coherent(40, C64::new(0.5, 0.0)).unwrap();
        let e0 = h.energy(&psi).unwrap();
        for t in [1.0, 2.5, 5.0] {
            let out = exact_evolution(&h, &psi, t).unwrap();
            assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
            assert!((h.energy(&out).unwrap() - e0).abs() < 1e-10);
        }
    }

    #[test]
    fn hamiltonian_is_symmetric_and_exact_for_polynomials() {
        let h = FockHamiltonian::new(|x| x.powi(4), 10).unwrap();
        assert!((h.matrix.clone() - h.matrix.transpose()).abs().max() < 1e-12);
        // ⟨0|x⁴|0⟩ = 3/4, ⟨0|p²/2|0⟩ = 1/4.
        assert!((h.matrix[(0, 0)] - 1.0).abs() < 1e-12);
    }

    fn gaussian(xs: &[f64], centre: f64, sigma: f64) -> Vec<C64> {
        let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
        xs.iter()
            .map(|x| {
                C64::new(
                    norm * (-(x - centre).powi(2) / (4.0 * sigma * sigma)).exp(),
                    0.0,
                )
            })
            .collect()
    }

    fn moments(xs: &[f64], psi: &[C64], dx: f64) -> (f64, f64) {
        let w: Vec<f64> = psi.iter().map(|z| z.norm_sqr() * dx).collect();
        let mean: f64 = xs.iter().zip(&w).map(|(x, w)| x * w).sum();
        let var: f64 = xs.iter().zip(&w).map(|(x, w)| (x - mean).powi(2) * w).sum();
        (mean, var)
    }

    #[test]
    fn free_packet_spreads() {
        let grid = FftGrid::default();
        let xs = grid.points();
        let s0 = 0.5;
        let solver = GridSolver::new(|_| 0.0, grid).unwrap();
        let out = solver.evolve(&gaussian(&xs, 0.0, s0), &[0.5, 1.5]).unwrap();
        for (psi, t) in out.iter().zip([0.5, 1.5]) {
            let (_, var) = moments(&xs, psi, grid.spacing());
            let want = s0 * s0 + t * t / (4.0 * s0 * s0);
            assert!((var - want).abs() < 1e-8, "t={t}: {var} vs {want}");
        }
    }

    #[test]
    fn coherent_state_oscillates() {
        let grid = FftGrid::default();
        let xs = grid.points();
        let solver = GridSolver::new(|x| 0.5 * x * x, grid).unwrap();
        let psi0 = gaussian(&xs, 2f64.sqrt(), 0.5f64.sqrt());
        let times = [0.5, 1.0, 2.0, 3.0];
        let out = solver.evolve(&psi0, &times).unwrap();
        for (psi, t) in out.iter().zip(times) {
            let (mean, var) = moments(&xs, psi, grid.spacing());
            assert!((mean - 2f64.sqrt() * t.cos()).abs() < 1e-6);
            assert!((var - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn boundary_support_is_rejected() {
        let grid = FftGrid::default();
        let xs = grid.points();
        let solver = GridSolver::new(|_| 0.0, grid).unwrap();
        let wide = gaussian(&xs, 0.0, 4.0);
        assert!(matches!(
            solver.evolve(&wide, &[0.1]),
            Err(Error::Domain(_))
        ));
        let narrow = gaussian(&xs, 0.0, 0.3);
        assert!(matches!(
            solver.evolve(&narrow, &[3.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn oracles_agree_for_cosh() {
        let v = PotentialSpec::cosh_shifted(1.0);
        let n_max = 60;
        let h = FockHamiltonian::new(|x| v.value(x), n_max).unwrap();
        let vac = QumodeState::ground_state(n_max, 1).unwrap();
        let grid = FftGrid::default();
        let xs = grid.points();
        let psi0 = wavefunction(&vac, &xs).unwrap();
        let rho = grid_schrodinger(|x| v.value(x), &psi0, &[1.0], 1e-3).unwrap();
        let fock = wavefunction(&exact_evolution(&h, &vac, 1.0).unwrap(), &xs).unwrap();
        let fock_rho: Vec<f64> = fock.iter().map(|z| z.norm_sqr()).collect();
        assert!(kl_divergence(&fock_rho, &rho[0]).unwrap() < 1e-3);
        // Same comparison through the usual density path.
        let pg = PositionGrid::default();
        assert!(position_density(&vac, 0, &pg).unwrap().integral() > 0.999_999);
    }

    #[test]
    fn l2_error_basics() {
        assert_eq!(
            l2_density_error(&[1.0, 2.0], &[1.0, 2.0], 0.1).unwrap(),
            0.0
        );
        assert!((l2_density_error(&[1.0, 0.0], &[0.0, 0.0], 4.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn harmonic_trace_metrics_are_trivial() {
        use crate::potential::Harmonic;
        use crate::trotter::{evolve, StepMode, TrotterConfig};
        let psi = QumodeState::coherent(30, C64::new(1.0, 0.5)).unwrap();
        let cfg = TrotterConfig::new(0.1, 10, 1.5, 12.0, 1.0, StepMode::Direct)
            .unwrap()
            .with_record_every(5)
            .unwrap();
        let grid = PositionGrid::new(-6.0, 6.0, 121).unwrap();
        let trace = evolve(&psi, &cfg, &Harmonic, None, &grid).unwrap();
        let h = FockHamiltonian::new(|x| 0.5 * x * x, 30).unwrap();
        let rows = trace_metrics(&trace, &psi, &h).unwrap();
        assert_eq!(rows.len(), 2);
        for r in rows {
            assert_eq!(r.n_max, 30);
            assert!(
                r.kl < 1e-12 && r.l2_error < 1e-10 && (r.fidelity - 1.0).abs() < 1e-10,
                "{r:?}"
            );
        }
    }
}
