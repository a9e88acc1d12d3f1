//! Trotterised evolution: the measurement-based evolver gadget and its
//! direct (exact-injection) counterpart.
//!
//! One step realises `R(−δt)·exp(−i H₁(x̂) δt)`. The gadget attaches the
//! evolver ket `φ(y) = f(y/q)` as mode 1, squeezes it by `r`, couples it with
//! `ControlX(−s)` from the system, rotates the system and finally projects the
//! ancilla on `y = 0`, leaving `ψ(x)·φ(e^r s x) = ψ(x)·f(x)` when
//! `e^r s = q`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitProgram;
use crate::error::{config_err, Error, Result};
use crate::fock::{position_density, PositionGrid, QumodeState};
use crate::gates::{gate_matrix, leakage, GateCache, GateOp, LEAKAGE_WARNING};
use crate::linalg::{PositionSpectrum, C64};
use crate::measure::{HomodyneScheme, MeasurementRecord};
use crate::potential::NonGaussian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Full gadget with ancilla, gates and homodyne.
    Circuit,
    /// `exp(−i H₁(X) δt)` applied as a matrix function of truncated `X`.
    #[default]
    Direct,
}

impl std::str::FromStr for StepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circuit" => Ok(StepMode::Circuit),
            "direct" => Ok(StepMode::Direct),
            other => config_err(format!(
                "unknown step mode `{other}` (expected circuit or direct)"
            )),
        }
    }
}

/// Parameters of a Trotter run. The squeeze `r = ln(q/s)` is derived, so the
/// gadget constraint `e^r·s = q` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrotterConfigFields", into = "TrotterConfigFields")]
pub struct TrotterConfig {
    delta_t: f64,
    steps: usize,
    s: f64,
    r: f64,
    q: f64,
    l: f64,
    mode: StepMode,
    record_every: usize,
    scheme: HomodyneScheme,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrotterConfigFields {
    delta_t: f64,
    steps: usize,
    s: f64,
    #[serde(default)]
    r: Option<f64>,
    q: f64,
    #[serde(rename = "L")]
    l: f64,
    #[serde(default)]
    mode: StepMode,
    #[serde(default = "one")]
    record_every: usize,
    #[serde(default)]
    scheme: HomodyneScheme,
}

fn one() -> usize {
    1
}

impl TryFrom<TrotterConfigFields> for TrotterConfig {
    type Error = Error;

    fn try_from(f: TrotterConfigFields) -> Result<Self> {
        let c = TrotterConfig::new(f.delta_t, f.steps, f.q, f.l, f.s, f.mode)?
            .with_record_every(f.record_every)?
            .with_scheme(f.scheme);
        if let Some(r) = f.r {
            if (r.exp() * f.s - f.q).abs() > 1e-12 {
                return config_err(format!(
                    "e^r·s = {} violates e^r·s = q = {}",
                    r.exp() * f.s,
                    f.q
                ));
            }
        }
        Ok(c)
    }
}

impl From<TrotterConfig> for TrotterConfigFields {
    fn from(c: TrotterConfig) -> Self {
        Self {
            delta_t: c.delta_t,
            steps: c.steps,
            s: c.s,
            r: Some(c.r),
            q: c.q,
            l: c.l,
            mode: c.mode,
            record_every: c.record_every,
            scheme: c.scheme,
        }
    }
}

impl TrotterConfig {
    pub fn new(delta_t: f64, steps: usize, q: f64, l: f64, s: f64, mode: StepMode) -> Result<Self> {
        if !(delta_t.is_finite() && delta_t > 0.0) {
            return config_err(format!("delta_t must be positive, got {delta_t}"));
        }
        if steps == 0 {
            return config_err("steps must be at least 1");
        }
        if !(q.is_finite() && q > 0.0 && l.is_finite() && l > 0.0) {
            return config_err(format!("q and L must be positive, got q = {q}, L = {l}"));
        }
        if !(s.is_finite() && s > 0.0) {
            return config_err(format!(
                "s must be positive so that e^r·s = q has a solution, got {s}"
            ));
        }
        Ok(Self {
            delta_t,
            steps,
            s,
            r: (q / s).ln(),
            q,
            l,
            mode,
            record_every: 1,
            scheme: HomodyneScheme::Delta,
        })
    }

    pub fn with_record_every(mut self, every: usize) -> Result<Self> {
        if every == 0 {
            return config_err("record_every must be at least 1");
        }
        self.record_every = every;
        Ok(self)
    }

    pub fn with_scheme(mut self, scheme: HomodyneScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_mode(mut self, mode: StepMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn mode(&self) -> StepMode {
        self.mode
    }

    pub fn record_every(&self) -> usize {
        self.record_every
    }

    pub fn scheme(&self) -> HomodyneScheme {
        self.scheme
    }

    pub fn total_time(&self) -> f64 {
        self.delta_t * self.steps as f64
    }

    /// Positions on which the gadget reproduces `f(x)`.
    pub fn validity_halfwidth(&self) -> f64 {
        self.l / (2.0 * self.q)
    }

    /// The two-mode gadget: system is mode 0, ancilla mode 1.
    pub fn gadget_program(&self) -> CircuitProgram {
        self.gadget_program_on(1, 0)
    }

    /// The gadget acting on `site` of a `system_modes`-mode register, with
    /// the ancilla appended as the last mode.
    pub fn gadget_program_on(&self, system_modes: usize, site: usize) -> CircuitProgram {
        let ancilla = system_modes;
        let mut p = CircuitProgram::new(system_modes + 1);
        p.gate(GateOp::squeeze(ancilla, self.r))
            .gate(GateOp::ControlX {
                s: -self.s,
                control: site,
                target: ancilla,
            })
            .gate(GateOp::rotate(site, -self.delta_t))
            .homodyne(ancilla, 0.0, self.scheme);
        p
    }
}

fn require_single_mode(state: &QumodeState) -> Result<()> {
    if state.num_modes() != 1 {
        return Err(Error::Contract(format!(
            "Trotter steps act on single-mode states, got {} modes",
            state.num_modes()
        )));
    }
    Ok(())
}

/// One gadget step with a freshly attached evolver ket.
pub fn trotter_step_circuit(
    state: &QumodeState,
    evolver_ket: &QumodeState,
    config: &TrotterConfig,
    cache: Option<&GateCache>,
) -> Result<(QumodeState, MeasurementRecord)> {
    require_single_mode(state)?;
    require_single_mode(evolver_ket)?;
    if evolver_ket.n_max() != state.n_max() {
        return Err(Error::Contract(format!(
            "evolver truncation {} differs from state truncation {}",
            evolver_ket.n_max(),
            state.n_max()
        )));
    }
    let joint = state.tensor(evolver_ket)?;
    let (out, report) = config.gadget_program().run(joint, cache, false)?;
    Ok((out, report.measurements[0]))
}

/// Precomputed `R(−δt)·exp(−i H₁(X) δt)` on one truncated mode.
#[derive(Debug, Clone)]
pub struct DirectStep {
    /// `exp(−i H₁(X) δt)`.
    pub potential_factor: DMatrix<C64>,
    /// Rotation followed by the potential factor.
    pub step: DMatrix<C64>,
}

impl DirectStep {
    pub fn new(h1: &dyn NonGaussian, n_max: usize, delta_t: f64) -> Result<Self> {
        let spectrum = PositionSpectrum::new(n_max);
        Self::with_spectrum(h1, &spectrum, delta_t)
    }

    pub fn with_spectrum(
        h1: &dyn NonGaussian,
        spectrum: &PositionSpectrum,
        delta_t: f64,
    ) -> Result<Self> {
        let n_max = spectrum.nodes.len() - 1;
        let phases: Vec<f64> = spectrum.nodes.iter().map(|&x| h1.h1(x) * delta_t).collect();
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain(
                "H₁ is not finite on the truncated position spectrum".into(),
            ));
        }
        let potential_factor = spectrum.phase_matrix(&phases);
        let rotation = gate_matrix(&GateOp::rotate(0, -delta_t), n_max)?;
        let step = rotation * &potential_factor;
        Ok(Self {
            potential_factor,
            step,
        })
    }

    pub fn apply(&self, state: &QumodeState) -> Result<QumodeState> {
        require_single_mode(state)?;
        let mut out = state.clone();
        out.apply_single_mode(0, &self.step)?;
        Ok(out)
    }
}

/// Convenience wrapper building a [`DirectStep`] for one application.
pub fn trotter_step_direct(
    state: &QumodeState,
    h1: &dyn NonGaussian,
    delta_t: f64,
) -> Result<QumodeState> {
    DirectStep::new(h1, state.n_max(), delta_t)?.apply(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub time: f64,
    pub norm: f64,
    pub leakage: f64,
    /// Homodyne weight of this step (1 in direct mode).
    pub weight: f64,
    pub cumulative_weight: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl: Option<f64>,
    pub density: Vec<f64>,
    #[serde(skip)]
    pub state: Option<QumodeState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub grid: PositionGrid,
    pub n_max: usize,
    pub records: Vec<TraceRecord>,
    pub warnings: Vec<String>,
}

impl EvolutionTrace {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn final_state(&self) -> Option<&QumodeState> {
        self.records.last().and_then(|r| r.state.as_ref())
    }

    /// Fills `kl` for every record from reference densities on the same grid.
    pub fn attach_kl(&mut self, mut reference: impl FnMut(f64) -> Result<Vec<f64>>) -> Result<()> {
        for rec in &mut self.records {
            let q = reference(rec.time)?;
            rec.kl = Some(crate::oracle::kl_divergence(&rec.density, &q)?);
        }
        Ok(())
    }
}

/// Iterates the configured step `config.steps()` times from `state`.
pub fn evolve(
    state: &QumodeState,
    config: &TrotterConfig,
    h1: &dyn NonGaussian,
    evolver_ket: Option<&QumodeState>,
    grid: &PositionGrid,
) -> Result<EvolutionTrace> {
    require_single_mode(state)?;
    let direct = match config.mode() {
        StepMode::Direct => Some(DirectStep::new(h1, state.n_max(), config.delta_t())?),
        StepMode::Circuit => {
            if evolver_ket.is_none() {
                return config_err("circuit mode needs an evolver ket");
            }
            None
        }
    };
    let cache = GateCache::new();
    let mut current = state.clone();
    let mut cumulative = 1.0;
    let mut trace = EvolutionTrace {
        grid: *grid,
        n_max: state.n_max(),
        records: Vec::new(),
        warnings: Vec::new(),
    };
    for step in 1..=config.steps() {
        let weight = match &direct {
            Some(d) => {
                current = d.apply(&current)?;
                1.0
            }
            None => {
                let ket = evolver_ket.expect("checked above");
                let (next, rec) = trotter_step_circuit(&current, ket, config, Some(&cache))?;
                current = next;
                rec.weight
            }
        };
        cumulative *= weight;
        let leak = leakage(&current);
        if leak > LEAKAGE_WARNING {
            trace.warnings.push(format!(
                "step {step}: leakage {leak:.3e} exceeds {LEAKAGE_WARNING:e}"
            ));
        }
        if step % config.record_every() == 0 || step == config.steps() {
            let density = position_density(&current, 0, grid)?;
            trace.records.push(TraceRecord {
                step,
                time: step as f64 * config.delta_t(),
                norm: current.norm_sqr(),
                leakage: leak,
                weight,
                cumulative_weight: cumulative,
                kl: None,
                density: density.rho,
                state: Some(current.clone()),
            });
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolver::{evolver_coefficients, DEFAULT_L, DEFAULT_Q};
    use crate::fock::fidelity;
    use crate::potential::{Harmonic, PotentialSpec};
    use crate::quadrature::CompositeRule;

    fn config(dt: f64, steps: usize, mode: StepMode) -> TrotterConfig {
        TrotterConfig::new(dt, steps, DEFAULT_Q, DEFAULT_L, 1.0, mode).unwrap()
    }

    fn ket(h1: &dyn NonGaussian, dt: f64, n_max: usize) -> QumodeState {
        evolver_coefficients(
            h1,
            dt,
            DEFAULT_Q,
            DEFAULT_L,
            n_max,
            &CompositeRule::default(),
        )
        .unwrap()
        .ket()
        .unwrap()
    }

    #[test]
    fn constraint_holds_by_construction() {
        for (q, s) in [(0.25, 1.0), (1.5, 1.0), (2.0, 0.3)] {
            let c = TrotterConfig::new(0.1, 1, q, 10.0, s, StepMode::Direct).unwrap();
            assert!((c.r().exp() * c.s() - q).abs() < 1e-12);
        }
        assert!(TrotterConfig::new(0.1, 1, 1.0, 10.0, -1.0, StepMode::Direct).is_err());
        assert!(TrotterConfig::new(0.1, 0, 1.0, 10.0, 1.0, StepMode::Direct).is_err());
    }

    #[test]
    fn config_json_rejects_inconsistent_squeeze() {
        let good = config(0.1, 3, StepMode::Circuit);
        let s = serde_json::to_string(&good).unwrap();
        assert_eq!(serde_json::from_str::<TrotterConfig>(&s).unwrap(), good);
        let bad = s.replace(&format!("\"r\":{}", good.r()), "\"r\":0.9");
        assert!(serde_json::from_str::<TrotterConfig>(&bad).is_err());
    }

    #[test]
    fn harmonic_vacuum_is_stationary_in_circuit_mode() {
        let n_max = 25;
        let vac = QumodeState::ground_state(n_max, 1).unwrap();
        let c = config(0.1, 1, StepMode::Circuit);
        let (out, rec) = trotter_step_circuit(&vac, &ket(&Harmonic, 0.1, n_max), &c, None).unwrap();
        // Limited by the ripple of the truncated top-hat, not by the gates.
        assert!(fidelity(&out, &vac).unwrap() > 1.0 - 1e-4);
        assert!(rec.weight > 0.0);
    }

    #[test]
    fn small_step_is_near_identity() {
        let n_max = 25;
        let v = PotentialSpec::double_well(0.1);
        let psi = QumodeState::coherent(n_max, C64::new(0.4, 0.2)).unwrap();
        let c = config(1e-4, 1, StepMode::Circuit);
        let (out, _) = trotter_step_circuit(&psi, &ket(&v, 1e-4, n_max), &c, None).unwrap();
        assert!(fidelity(&out, &psi).unwrap() > 1.0 - 1e-4);
    }

    #[test]
    fn circuit_matches_direct_single_step() {
        let n_max = 25;
        for v in [
            PotentialSpec::double_well(0.1),
            PotentialSpec::cosh_shifted(1.0),
        ] {
            let vac = QumodeState::ground_state(n_max, 1).unwrap();
            let c = config(0.1, 1, StepMode::Circuit);
            let (circ, _) = trotter_step_circuit(&vac, &ket(&v, 0.1, n_max), &c, None).unwrap();
            let direct = trotter_step_direct(&vac, &v, 0.1).unwrap();
            assert!(fidelity(&circ, &direct).unwrap() > 0.999);
        }
    }

    #[test]
    fn direct_step_harmonic_is_rotation() {
        let psi = QumodeState::coherent(30, C64::new(0.5, -0.5)).unwrap();
        let out = trotter_step_direct(&psi, &Harmonic, 0.3).unwrap();
        let rot = crate::gates::apply_gate(&psi, &GateOp::rotate(0, -0.3)).unwrap();
        for (a, b) in out.amplitudes().iter().zip(rot.amplitudes()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn potential_factor_semigroup_and_unitarity() {
        let v = PotentialSpec::double_well(0.5);
        let half = DirectStep::new(&v, 40, 0.05).unwrap();
        let full = DirectStep::new(&v, 40, 0.1).unwrap();
        let twice = &half.potential_factor * &half.potential_factor;
        assert!((twice - &full.potential_factor)
            .iter()
            .all(|z| z.norm() < 1e-12));
        assert!(crate::linalg::unitarity_defect(&full.step) < 1e-12);
        let psi = QumodeState::coherent(40, C64::new(1.0, 0.0)).unwrap();
        let out = full.apply(&psi).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evolve_records_and_bookkeeping() {
        let v = PotentialSpec::double_well(0.1);
        let vac = QumodeState::ground_state(30, 1).unwrap();
        let grid = PositionGrid::default();
        let trace = evolve(&vac, &config(0.1, 10, StepMode::Direct), &v, None, &grid).unwrap();
        assert_eq!(trace.records.len(), 10);
        for (i, r) in trace.records.iter().enumerate() {
            assert!((r.time - 0.1 * (i + 1) as f64).abs() < 1e-12);
            assert_eq!(r.cumulative_weight, 1.0);
        }
        let sparse = evolve(
            &vac,
            &config(0.1, 10, StepMode::Direct)
                .with_record_every(4)
                .unwrap(),
            &v,
            None,
            &grid,
        )
        .unwrap();
        assert_eq!(
            sparse.records.iter().map(|r| r.step).collect::<Vec<_>>(),
            vec![4, 8, 10]
        );
    }

    #[test]
    fn circuit_mode_needs_ket_and_tracks_weight() {
        let v = PotentialSpec::cosh_shifted(1.0);
        let vac = QumodeState::ground_state(20, 1).unwrap();
        let grid = PositionGrid::default();
        let c = config(0.1, 3, StepMode::Circuit);
        assert!(evolve(&vac, &c, &v, None, &grid).is_err());
        let k = ket(&v, 0.1, 20);
        let trace = evolve(&vac, &c, &v, Some(&k), &grid).unwrap();
        let prod: f64 = trace.records.iter().map(|r| r.weight).product();
        assert!((trace.records[2].cumulative_weight - prod).abs() < 1e-15);
    }
}
