//! Truncated-Fock simulation of continuous-variable circuits: Gaussian and
//! two-mode gates, homodyne and photon-number measurements, the
//! measurement-based Trotter gadget, variational preparation of its resource
//! state, a lattice scalar field, and classical reference solvers.

pub mod circuit;
pub mod cjson;
pub mod error;
pub mod evolver;
pub mod fock;
pub mod gates;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod measure;
pub mod oracle;
pub mod potential;
pub mod prep;
pub mod quadrature;
pub mod trotter;
pub mod warmup;

pub use circuit::{CircuitProgram, Instruction, RunReport};
pub use error::{Error, Result};
pub use evolver::{evolver_coefficients, EvolverSpec};
pub use fock::{fidelity, position_density, DensityProfile, PositionGrid, QumodeState};
pub use gates::{apply_gate, GateCache, GateOp, GaussianFactory};
pub use lattice::{
    qft_evolve, qft_trotter_step, LatticeConfig, LatticeHamiltonian, LatticeTrace, SiteEvolver,
};
pub use linalg::C64;
pub use measure::{HomodyneScheme, MeasurementKind, MeasurementRecord};
pub use oracle::{
    exact_evolution, kl_divergence, trace_metrics, FockHamiltonian, GridSolver, MetricRow,
};
pub use potential::{NonGaussian, PotentialSpec};
pub use prep::{PrepArtifact, PrepCircuitConfig, TrainResult, TrainSettings};
pub use quadrature::CompositeRule;
pub use trotter::{evolve, EvolutionTrace, StepMode, TrotterConfig};
