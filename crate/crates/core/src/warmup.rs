//! The two single-gate demonstrations: squeezing the vacuum, and the
//! composite displacement built from a controlled-X and a homodyne
//! measurement on a vacuum ancilla.

use serde::{Deserialize, Serialize};

use crate::circuit::CircuitProgram;
use crate::error::Result;
use crate::fock::{position_density, PositionGrid, QumodeState};
use crate::gates::{apply_gate, GateOp};
use crate::measure::HomodyneScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmupStage {
    pub label: String,
    pub mean: f64,
    pub sigma: f64,
    /// Grid point of the largest density.
    pub peak: f64,
    /// Largest truncation leakage seen while producing this stage.
    pub leakage: f64,
    /// Homodyne weight (1 when nothing was measured).
    pub weight: f64,
    pub density: Vec<f64>,
}

fn stage(
    label: &str,
    state: &QumodeState,
    grid: &PositionGrid,
    leakage: f64,
    weight: f64,
) -> Result<WarmupStage> {
    let (mean, var) = state.position_moments(0)?;
    let density = position_density(state, 0, grid)?;
    Ok(WarmupStage {
        label: label.to_string(),
        mean,
        sigma: var.sqrt(),
        peak: density.argmax(),
        leakage,
        weight,
        density: density.rho,
    })
}

/// Vacuum, then `S(ln ½)`, then `S(ln 4)`.
pub fn squeeze_demo(n_max: usize, grid: &PositionGrid) -> Result<Vec<WarmupStage>> {
    let vac = QumodeState::ground_state(n_max, 1)?;
    let wide = apply_gate(&vac, &GateOp::squeeze(0, 0.5f64.ln()))?;
    let narrow = apply_gate(&wide, &GateOp::squeeze(0, 4f64.ln()))?;
    Ok(vec![
        stage("vacuum", &vac, grid, crate::gates::leakage(&vac), 1.0)?,
        stage(
            "squeeze(ln 1/2)",
            &wide,
            grid,
            crate::gates::leakage(&wide),
            1.0,
        )?,
        stage(
            "squeeze(ln 4)",
            &narrow,
            grid,
            crate::gates::leakage(&narrow),
            1.0,
        )?,
    ])
}

/// Vacuum, then `CX(2)` with a vacuum ancilla measured at `y = 1`, then
/// `CX(−4)` with a fresh ancilla measured at `y = 1`. Each round shifts the
/// system by `s·y`.
pub fn displacement_demo(
    n_max: usize,
    grid: &PositionGrid,
    scheme: HomodyneScheme,
) -> Result<Vec<WarmupStage>> {
    let vac = QumodeState::ground_state(n_max, 1)?;
    let mut stages = vec![stage(
        "vacuum",
        &vac,
        grid,
        crate::gates::leakage(&vac),
        1.0,
    )?];
    let mut current = vac.clone();
    for (label, s) in [("cx(2)+homodyne(1)", 2.0), ("cx(-4)+homodyne(1)", -4.0)] {
        let mut p = CircuitProgram::new(2);
        p.gate(GateOp::ControlX {
            s,
            control: 1,
            target: 0,
        })
        .homodyne(1, 1.0, scheme);
        let (out, report) = p.run(current.tensor(&vac)?, None, true)?;
        current = out;
        stages.push(stage(
            label,
            &current,
            grid,
            report.max_leakage,
            report.joint_weight(),
        )?);
    }
    Ok(stages)
}
