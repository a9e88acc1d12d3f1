//! Real scalar field on a periodic one-dimensional lattice.
//!
//! Site `k` carries one qumode with `φ(r_k) = x̂_k` and `π(r_k) = p̂_k / a`.
//! In units of the rescaled step `δt' = δt / a` the lattice Hamiltonian is
//!
//! ```text
//! ℋ = Σ_k [ p̂_k²/2 + x̂_k²/2 + H₁(x̂_k) ] − Σ_k x̂_{k+1} x̂_k,   H₁(x) = x²/2 + a² V(x)
//! ```
//!
//! with `k + 1` taken mod `M`. One Trotter step applies the single-site
//! evolver on every site followed by the ring of controlled-Z gates
//! `exp(+i δt' x̂_{k+1} x̂_k)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitProgram;
use crate::error::{config_err, Error, Result};
use crate::evolver::evolver_coefficients;
use crate::fock::{position_density, PositionGrid, QumodeState};
use crate::gates::{leakage, GateCache, GateOp, LEAKAGE_WARNING};
use crate::linalg::{position_matrix, C64, ZERO};
use crate::measure::HomodyneScheme;
use crate::oracle::FockHamiltonian;
use crate::potential::{NonGaussian, PotentialSpec};
use crate::quadrature::CompositeRule;
use crate::trotter::{DirectStep, StepMode, TrotterConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    /// Number of sites `M`.
    pub sites: usize,
    /// Lattice spacing `a`.
    pub a: f64,
    pub potential: PotentialSpec,
    pub delta_t: f64,
    pub n_max: usize,
    /// For `M = 2` the periodic sum visits the single edge twice; this flag
    /// must be set to accept that doubled coupling.
    #[serde(default)]
    pub doubled_edge: bool,
    /// Position of site 0; sites sit at `r_k = r0 + k a`. Metadata only.
    #[serde(default)]
    pub r0: f64,
}

impl LatticeConfig {
    pub fn new(
        sites: usize,
        a: f64,
        potential: PotentialSpec,
        delta_t: f64,
        n_max: usize,
    ) -> Result<Self> {
        let cfg = Self {
            sites,
            a,
            potential,
            delta_t,
            n_max,
            doubled_edge: false,
            r0: 0.0,
        };
        cfg.validate_basic()?;
        Ok(cfg)
    }

    /// Accepts the doubled coupling of the single `M = 2` edge.
    pub fn with_doubled_edge(mut self, on: bool) -> Result<Self> {
        self.doubled_edge = on;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_basic()?;
        if self.sites == 2 && !self.doubled_edge {
            return config_err(
                "M = 2 counts its single edge twice; set doubled_edge to accept this",
            );
        }
        Ok(())
    }

    /// Everything except the `M = 2` flag, which is set after construction.
    fn validate_basic(&self) -> Result<()> {
        if self.sites < 2 {
            return config_err(format!(
                "a periodic lattice needs M ≥ 2 sites (M = {} would couple a site to itself)",
                self.sites
            ));
        }
        if self.sites > 2 && self.doubled_edge {
            return config_err("doubled_edge only applies to M = 2");
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            return config_err(format!(
                "lattice spacing a must be positive, got {}",
                self.a
            ));
        }
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return config_err(format!("δt must be positive, got {}", self.delta_t));
        }
        if self.n_max < 1 {
            return config_err("n_max must be at least 1");
        }
        self.potential.validate()
    }

    /// `δt' = δt / a`.
    pub fn scaled_step(&self) -> f64 {
        self.delta_t / self.a
    }

    pub fn site_positions(&self) -> Vec<f64> {
        (0..self.sites)
            .map(|k| self.r0 + k as f64 * self.a)
            .collect()
    }

    pub fn h1(&self) -> LatticeH1 {
        lattice_h1(&self.potential, self.a)
    }

    /// Ring edges `(k, k+1 mod M)`; for `M = 2` the edge appears twice.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.sites).map(|k| (k, (k + 1) % self.sites)).collect()
    }

    /// The hopping layer: one `ControlZ(−δt')` per edge, i.e.
    /// `exp(+i δt' x̂_k x̂_{k+1})`.
    pub fn hopping_gates(&self) -> Vec<GateOp> {
        let s = -self.scaled_step();
        self.edges()
            .into_iter()
            .map(|(control, target)| GateOp::ControlZ { s, control, target })
            .collect()
    }

    /// Full step circuit with one ancilla per site (ancilla of site `k` is
    /// mode `M + k`). Gadgets are listed last-site first so each homodyne
    /// removes the current last mode.
    pub fn step_program(&self, site: &TrotterConfig) -> CircuitProgram {
        let m = self.sites;
        let mut p = CircuitProgram::new(2 * m);
        for k in (0..m).rev() {
            let gadget = site.gadget_program_on(m + k, k);
            p.instructions.extend(gadget.instructions);
        }
        for g in self.hopping_gates() {
            p.gate(g);
        }
        p
    }
}

/// Effective single-site non-Gaussian part `x²/2 + a² V(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeH1 {
    potential: PotentialSpec,
    a2: f64,
}

impl NonGaussian for LatticeH1 {
    fn h1(&self, x: f64) -> f64 {
        0.5 * x * x + self.a2 * self.potential.value(x)
    }
}

pub fn lattice_h1(potential: &PotentialSpec, a: f64) -> LatticeH1 {
    LatticeH1 {
        potential: potential.clone(),
        a2: a * a,
    }
}

/// How each site's non-Gaussian factor is realised.
#[derive(Debug, Clone)]
pub enum SiteEvolver {
    Direct(DirectStep),
    Circuit {
        ket: QumodeState,
        trotter: TrotterConfig,
    },
}

impl SiteEvolver {
    pub fn direct(cfg: &LatticeConfig) -> Result<Self> {
        Ok(SiteEvolver::Direct(DirectStep::new(
            &cfg.h1(),
            cfg.n_max,
            cfg.scaled_step(),
        )?))
    }

    /// Gadget with an evolver ket for `lattice_h1` at `δt'`.
    pub fn circuit(
        cfg: &LatticeConfig,
        q: f64,
        l: f64,
        s: f64,
        scheme: HomodyneScheme,
    ) -> Result<Self> {
        let trotter = TrotterConfig::new(cfg.scaled_step(), 1, q, l, s, StepMode::Circuit)?
            .with_scheme(scheme);
        let spec = evolver_coefficients(
            &cfg.h1(),
            cfg.scaled_step(),
            q,
            l,
            cfg.n_max,
            &CompositeRule::default(),
        )?;
        Ok(SiteEvolver::Circuit {
            ket: spec.ket()?,
            trotter,
        })
    }

    pub fn mode(&self) -> StepMode {
        match self {
            SiteEvolver::Direct(_) => StepMode::Direct,
            SiteEvolver::Circuit { .. } => StepMode::Circuit,
        }
    }
}

/// One lattice Trotter step; returns the new state and the product of the
/// per-site homodyne weights (1 in direct mode).
pub fn qft_trotter_step(
    state: &QumodeState,
    cfg: &LatticeConfig,
    site: &SiteEvolver,
    cache: Option<&GateCache>,
) -> Result<(QumodeState, f64)> {
    cfg.validate()?;
    if state.num_modes() != cfg.sites || state.n_max() != cfg.n_max {
        return Err(Error::Contract(format!(
            "lattice step expects {} modes at n_max {}, got {} modes at n_max {}",
            cfg.sites,
            cfg.n_max,
            state.num_modes(),
            state.n_max()
        )));
    }
    let mut current = state.clone();
    let mut weight = 1.0;
    for k in 0..cfg.sites {
        match site {
            SiteEvolver::Direct(step) => current.apply_single_mode(k, &step.step)?,
            SiteEvolver::Circuit { ket, trotter } => {
                let joint = current.tensor(ket)?;
                let (out, report) = trotter
                    .gadget_program_on(cfg.sites, k)
                    .run(joint, cache, false)?;
                current = out;
                weight *= report.joint_weight();
            }
        }
    }
    for g in cfg.hopping_gates() {
        crate::gates::apply_gate_mut(&mut current, &g, cache)?;
    }
    Ok((current, weight))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeRecord {
    pub step: usize,
    /// Physical time `step · δt`.
    pub time: f64,
    /// Lattice time `step · δt'`, the evolution parameter of `ℋ`.
    pub scaled_time: f64,
    pub norm: f64,
    pub leakage: f64,
    pub weight: f64,
    pub cumulative_weight: f64,
    pub mean_x: Vec<f64>,
    pub marginals: Vec<Vec<f64>>,
    #[serde(skip)]
    pub state: Option<QumodeState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeTrace {
    pub config: LatticeConfig,
    pub grid: PositionGrid,
    pub records: Vec<LatticeRecord>,
    pub warnings: Vec<String>,
}

impl LatticeTrace {
    pub fn final_state(&self) -> Option<&QumodeState> {
        self.records.last().and_then(|r| r.state.as_ref())
    }
}

fn record(
    state: &QumodeState,
    cfg: &LatticeConfig,
    grid: &PositionGrid,
    step: usize,
    weight: f64,
    cumulative_weight: f64,
) -> Result<LatticeRecord> {
    let mut mean_x = Vec::with_capacity(cfg.sites);
    let mut marginals = Vec::with_capacity(cfg.sites);
    for k in 0..cfg.sites {
        mean_x.push(state.position_moments(k)?.0);
        marginals.push(position_density(state, k, grid)?.rho);
    }
    Ok(LatticeRecord {
        step,
        time: step as f64 * cfg.delta_t,
        scaled_time: step as f64 * cfg.scaled_step(),
        norm: state.norm_sqr(),
        leakage: leakage(state),
        weight,
        cumulative_weight,
        mean_x,
        marginals,
        state: Some(state.clone()),
    })
}

/// Iterates [`qft_trotter_step`], recording step 0 and every step after.
pub fn qft_evolve(
    initial: &QumodeState,
    cfg: &LatticeConfig,
    steps: usize,
    site: &SiteEvolver,
    grid: &PositionGrid,
) -> Result<LatticeTrace> {
    cfg.validate()?;
    let cache = GateCache::new();
    let mut trace = LatticeTrace {
        config: cfg.clone(),
        grid: *grid,
        records: vec![record(initial, cfg, grid, 0, 1.0, 1.0)?],
        warnings: Vec::new(),
    };
    let mut current = initial.clone();
    let mut cumulative = 1.0;
    for step in 1..=steps {
        let (next, w) = qft_trotter_step(&current, cfg, site, Some(&cache))?;
        current = next;
        cumulative *= w;
        let rec = record(&current, cfg, grid, step, w, cumulative)?;
        if rec.leakage > LEAKAGE_WARNING {
            trace.warnings.push(format!(
                "step {step}: leakage {:.3e} exceeds {LEAKAGE_WARNING:e}",
                rec.leakage
            ));
        }
        trace.records.push(rec);
    }
    Ok(trace)
}

/// Product of identical single-site states.
pub fn uniform_product(site: &QumodeState, sites: usize) -> Result<QumodeState> {
    let mut out = site.clone();
    for _ in 1..sites {
        out = out.tensor(site)?;
    }
    Ok(out)
}

/// Relabels sites `k → k + 1 mod M`.
pub fn cyclic_shift(state: &QumodeState) -> QumodeState {
    let m = state.num_modes();
    let mut out = state.clone();
    let amps = out.amplitudes_mut();
    for (flat, a) in state.amplitudes().iter().enumerate() {
        let idx = state.multi_index(flat);
        let mut shifted = vec![0; m];
        for (k, &n) in idx.iter().enumerate() {
            shifted[(k + 1) % m] = n;
        }
        amps[state.flat_index(&shifted)] = *a;
    }
    out
}

/// The lattice Hamiltonian on the truncated product space, diagonalised.
///
/// Site terms come from [`FockHamiltonian`] (matrix elements projected from a
/// larger basis); the coupling uses the truncated `X ⊗ X`, which is exact.
#[derive(Debug, Clone)]
pub struct LatticeHamiltonian {
    pub matrix: DMatrix<f64>,
    sites: usize,
    n_max: usize,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl LatticeHamiltonian {
    pub fn new(cfg: &LatticeConfig) -> Result<Self> {
        cfg.validate()?;
        let h1 = cfg.h1();
        let site = FockHamiltonian::new(|x| 0.5 * x * x + h1.h1(x), cfg.n_max)?.matrix;
        let x = position_matrix(cfg.n_max);
        let d = cfg.n_max + 1;
        let m = cfg.sites;
        let dim = d.pow(m as u32);
        let stride = |k: usize| d.pow((m - 1 - k) as u32);
        let digit = |flat: usize, k: usize| (flat / stride(k)) % d;
        let mut h = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            for k in 0..m {
                let nk = digit(col, k);
                let base = col - nk * stride(k);
                for row_k in 0..d {
                    h[(base + row_k * stride(k), col)] += site[(row_k, nk)];
                }
            }
            for (i, j) in cfg.edges() {
                let (ni, nj) = (digit(col, i), digit(col, j));
                let base = col - ni * stride(i) - nj * stride(j);
                for mi in ni.saturating_sub(1)..=(ni + 1).min(d - 1) {
                    for mj in nj.saturating_sub(1)..=(nj + 1).min(d - 1) {
                        h[(base + mi * stride(i) + mj * stride(j), col)] -=
                            x[(mi, ni)] * x[(mj, nj)];
                    }
                }
            }
        }
        let eig = SymmetricEigen::new(h.clone());
        Ok(Self {
            matrix: h,
            sites: m,
            n_max: cfg.n_max,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    fn check(&self, state: &QumodeState) -> Result<()> {
        if state.num_modes() != self.sites || state.n_max() != self.n_max {
            return Err(Error::Contract(format!(
                "lattice oracle expects {} modes at n_max {}",
                self.sites, self.n_max
            )));
        }
        Ok(())
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `exp(−i ℋ τ)|ψ⟩` with `τ` in lattice time units.
    pub fn evolve(&self, state: &QumodeState, tau: f64) -> Result<QumodeState> {
        self.check(state)?;
        let v = &self.eigenvectors;
        let a = state.amplitudes();
        let coeffs: Vec<C64> = (0..a.len())
            .map(|k| {
                let c: C64 = v.column(k).iter().zip(a).map(|(vi, ai)| ai * *vi).sum();
                c * C64::from_polar(1.0, -self.eigenvalues[k] * tau)
            })
            .collect();
        let mut out = vec![ZERO; a.len()];
        for (k, c) in coeffs.iter().enumerate() {
            for (o, vi) in out.iter_mut().zip(v.column(k).iter()) {
                *o += c * *vi;
            }
        }
        let mut s = QumodeState::from_amplitudes(self.n_max, self.sites, out)?;
        s.set_norm_weight(state.norm_weight());
        Ok(s)
    }

    /// `⟨ψ|ℋ|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn energy(&self, state: &QumodeState) -> Result<f64> {
        self.check(state)?;
        let a = state.amplitudes();
        let mut e = 0.0;
        for (j, aj) in a.iter().enumerate() {
            let hj: C64 = self
                .matrix
                .column(j)
                .iter()
                .zip(a)
                .map(|(h, ai)| ai.conj() * *h)
                .sum();
            e += (hj * aj).re;
        }
        Ok(e / state.norm_sqr())
    }
}
