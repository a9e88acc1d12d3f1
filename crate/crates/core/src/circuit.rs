//! Serialisable gate and measurement sequences.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fock::QumodeState;
use crate::gates::{apply_gate_mut, leakage, GateCache, GateOp};
use crate::measure::{homodyne, pnr_postselect, HomodyneScheme, MeasurementRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Instruction {
    Gate(GateOp),
    /// Position projection of `mode`; later indices shift down by one.
    Homodyne {
        mode: usize,
        value: f64,
        #[serde(default)]
        scheme: HomodyneScheme,
    },
    /// Photon-number post-selection of `mode`; later indices shift down by one.
    Pnr {
        mode: usize,
        m: usize,
    },
}

/// Ordered instructions acting on a state of `num_modes` modes. Measurement
/// removes the measured mode, so indices always refer to the current state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CircuitProgram {
    pub num_modes: usize,
    pub instructions: Vec<Instruction>,
}

/// What a run produced besides the output state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub measurements: Vec<MeasurementRecord>,
    /// Largest leakage seen after any gate.
    pub max_leakage: f64,
}

impl RunReport {
    /// Product of all measurement weights.
    pub fn joint_weight(&self) -> f64 {
        self.measurements.iter().map(|m| m.weight).product()
    }
}

impl CircuitProgram {
    pub fn new(num_modes: usize) -> Self {
        Self {
            num_modes,
            instructions: Vec::new(),
        }
    }

    pub fn gate(&mut self, gate: GateOp) -> &mut Self {
        self.instructions.push(Instruction::Gate(gate));
        self
    }

    pub fn homodyne(&mut self, mode: usize, value: f64, scheme: HomodyneScheme) -> &mut Self {
        self.instructions.push(Instruction::Homodyne {
            mode,
            value,
            scheme,
        });
        self
    }

    pub fn pnr(&mut self, mode: usize, m: usize) -> &mut Self {
        self.instructions.push(Instruction::Pnr { mode, m });
        self
    }

    /// Number of gates, excluding measurements.
    pub fn gate_count(&self) -> usize {
        self.instructions
            .iter()
            .filter(|i| matches!(i, Instruction::Gate(_)))
            .count()
    }

    /// Runs the program on `state`. Leakage is checked after every gate only
    /// when `track_leakage` is set, since it costs a pass over the tensor.
    pub fn run(
        &self,
        mut state: QumodeState,
        cache: Option<&GateCache>,
        track_leakage: bool,
    ) -> Result<(QumodeState, RunReport)> {
        if state.num_modes() != self.num_modes {
            return Err(crate::Error::Contract(format!(
                "program expects {} modes, state has {}",
                self.num_modes,
                state.num_modes()
            )));
        }
        let mut report = RunReport::default();
        for inst in &self.instructions {
            match *inst {
                Instruction::Gate(g) => {
                    apply_gate_mut(&mut state, &g, cache)?;
                    if track_leakage {
                        report.max_leakage = report.max_leakage.max(leakage(&state));
                    }
                }
                Instruction::Homodyne {
                    mode,
                    value,
                    scheme,
                } => {
                    let (next, rec) = homodyne(&state, mode, value, scheme)?;
                    state = next;
                    report.measurements.push(rec);
                }
                Instruction::Pnr { mode, m } => {
                    let (next, rec) = pnr_postselect(&state, mode, m)?;
                    state = next;
                    report.measurements.push(rec);
                }
            }
        }
        Ok((state, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::fidelity;
    use crate::linalg::C64;

    #[test]
    fn json_shape() {
        let mut p = CircuitProgram::new(2);
        p.gate(GateOp::squeeze(1, 0.4))
            .homodyne(1, 0.0, HomodyneScheme::Delta)
            .pnr(0, 0);
        let s = serde_json::to_string(&p).unwrap();
        assert!(
            s.contains(r#"{"op":"gate","gate":"squeeze","mode":1,"r":0.4,"phi":0.0}"#),
            "{s}"
        );
        assert!(
            s.contains(r#"{"op":"homodyne","mode":1,"value":0.0,"scheme":{"scheme":"delta"}}"#),
            "{s}"
        );
        let back: CircuitProgram = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert_eq!(p.gate_count(), 1);
    }

    #[test]
    fn run_matches_manual_application() {
        let mut p = CircuitProgram::new(2);
        p.gate(GateOp::displace(0, C64::new(0.3, 0.1)))
            .gate(GateOp::Beamsplitter {
                theta: 0.5,
                phi: 0.0,
                mode_a: 0,
                mode_b: 1,
            })
            .pnr(0, 1);
        let vac = QumodeState::ground_state(12, 2).unwrap();
        let (out, report) = p.run(vac.clone(), None, true).unwrap();
        let mut manual =
            crate::gates::apply_gate(&vac, &GateOp::displace(0, C64::new(0.3, 0.1))).unwrap();
        manual = crate::gates::apply_gate(
            &manual,
            &GateOp::Beamsplitter {
                theta: 0.5,
                phi: 0.0,
                mode_a: 0,
                mode_b: 1,
            },
        )
        .unwrap();
        let (manual, rec) = pnr_postselect(&manual, 0, 1).unwrap();
        assert!(fidelity(&out, &manual).unwrap() > 1.0 - 1e-14);
        assert_eq!(report.measurements, vec![rec]);
        assert!(report.max_leakage < 1e-10);
    }

    #[test]
    fn mode_count_checked() {
        let p = CircuitProgram::new(3);
        assert!(p
            .run(QumodeState::ground_state(3, 2).unwrap(), None, false)
            .is_err());
    }
}
