//! Plain-text output formats.
//!
//! Floats are written as `{:.16e}` (17 significant digits, round-trip exact),
//! lines end in `\n`, and every writer is a pure function of its input so
//! repeated runs produce identical bytes.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::LatticeTrace;
use crate::oracle::MetricRow;
use crate::prep::TrainHistory;
use crate::trotter::EvolutionTrace;

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// A value that can appear in a CSV cell.
pub trait CsvField {
    fn write_to(&self, out: &mut String);
}

impl CsvField for f64 {
    fn write_to(&self, out: &mut String) {
        let _ = write!(out, "{self:.16e}");
    }
}

impl CsvField for usize {
    fn write_to(&self, out: &mut String) {
        let _ = write!(out, "{self}");
    }
}

/// `None` is an empty cell.
impl CsvField for Option<f64> {
    fn write_to(&self, out: &mut String) {
        if let Some(v) = self {
            v.write_to(out);
        }
    }
}

/// Numeric CSV with optional `# key=value` header lines.
#[derive(Debug, Default)]
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a `# key=value` line; must precede [`Csv::columns`].
    pub fn meta(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        let _ = writeln!(self.buf, "# {key}={value}");
        self
    }

    pub fn columns(mut self, names: &[&str]) -> Self {
        self.columns = names.len();
        self.buf.push_str(&names.join(","));
        self.buf.push('\n');
        self
    }

    pub fn row(&mut self, fields: &[&dyn CsvField]) {
        debug_assert_eq!(fields.len(), self.columns);
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            f.write_to(&mut self.buf);
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Density of one record: header with `n_max`, step and time, then `x,rho`.
pub fn density_csv(trace: &EvolutionTrace, record: usize) -> Result<String> {
    let rec = trace
        .records
        .get(record)
        .ok_or_else(|| Error::Contract(format!("trace has no record {record}")))?;
    let mut csv = Csv::new()
        .meta("n_max", trace.n_max)
        .meta("step", rec.step)
        .meta("time", fmt_float(rec.time))
        .columns(&["x", "rho"]);
    for (i, rho) in rec.density.iter().enumerate() {
        csv.row(&[&trace.grid.point(i), rho]);
    }
    Ok(csv.finish())
}

/// Per-step scalars of a single-mode trace.
pub fn trace_csv(trace: &EvolutionTrace) -> String {
    let mut csv = Csv::new().meta("n_max", trace.n_max).columns(&[
        "step",
        "t",
        "norm",
        "leakage",
        "weight",
        "cumulative_weight",
        "kl",
    ]);
    for r in &trace.records {
        csv.row(&[
            &r.step,
            &r.time,
            &r.norm,
            &r.leakage,
            &r.weight,
            &r.cumulative_weight,
            &r.kl,
        ]);
    }
    csv.finish()
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut csv = Csv::new().columns(&["t", "n_max", "kl", "fidelity", "l2_error"]);
    for r in rows {
        csv.row(&[&r.t, &r.n_max, &r.kl, &r.fidelity, &r.l2_error]);
    }
    csv.finish()
}

/// `t,site,mean_x` in long format.
pub fn lattice_trace_csv(trace: &LatticeTrace) -> String {
    let mut csv = Csv::new()
        .meta("sites", trace.config.sites)
        .meta("n_max", trace.config.n_max)
        .columns(&["t", "site", "mean_x"]);
    for r in &trace.records {
        for (site, m) in r.mean_x.iter().enumerate() {
            csv.row(&[&r.time, &site, m]);
        }
    }
    csv.finish()
}

/// Marginal density of one site at every recorded step.
pub fn lattice_density_csv(trace: &LatticeTrace, site: usize) -> Result<String> {
    if site >= trace.config.sites {
        return Err(Error::Contract(format!("site {site} out of range")));
    }
    let mut csv = Csv::new()
        .meta("site", site)
        .meta("n_max", trace.config.n_max)
        .columns(&["step", "t", "x", "rho"]);
    for r in &trace.records {
        for (i, rho) in r.marginals[site].iter().enumerate() {
            csv.row(&[&r.step, &r.time, &trace.grid.point(i), rho]);
        }
    }
    Ok(csv.finish())
}

pub fn history_csv(history: &TrainHistory) -> String {
    let mut csv = Csv::new().columns(&["iteration", "loss", "best_loss", "probability"]);
    for e in &history.entries {
        csv.row(&[&e.iteration, &e.loss, &e.best_loss, &e.probability]);
    }
    csv.finish()
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{PositionGrid, QumodeState};
    use crate::potential::PotentialSpec;
    use crate::prep::HistoryEntry;
    use crate::trotter::{evolve, StepMode, TrotterConfig};

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn csv_layout() {
        let mut csv = Csv::new().meta("n_max", 5).columns(&["a", "b", "c"]);
        csv.row(&[&1usize, &0.5, &None::<f64>]);
        assert_eq!(csv.finish(), "# n_max=5\na,b,c\n1,5.0000000000000000e-1,\n");
    }

    #[test]
    fn history_rows() {
        let h = TrainHistory {
            entries: vec![
                HistoryEntry {
                    iteration: 0,
                    loss: Some(0.25),
                    best_loss: 0.25,
                    probability: Some(0.5),
                },
                HistoryEntry {
                    iteration: 1,
                    loss: None,
                    best_loss: 0.25,
                    probability: None,
                },
            ],
        };
        let s = history_csv(&h);
        assert_eq!(s.lines().nth(2).unwrap(), "1,,2.5000000000000000e-1,");
    }

    #[test]
    fn trace_outputs_are_deterministic() {
        let run = || {
            let psi = QumodeState::coherent(20, crate::linalg::C64::new(0.5, 0.0)).unwrap();
            let cfg = TrotterConfig::new(0.1, 4, 1.5, 12.0, 1.0, StepMode::Direct).unwrap();
            let grid = PositionGrid::new(-5.0, 5.0, 21).unwrap();
            evolve(&psi, &cfg, &PotentialSpec::double_well(0.1), None, &grid).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(trace_csv(&a), trace_csv(&b));
        assert_eq!(density_csv(&a, 3).unwrap(), density_csv(&b, 3).unwrap());
        let d = density_csv(&a, 0).unwrap();
        let mut lines = d.lines();
        assert_eq!(lines.next(), Some("# n_max=20"));
        assert_eq!(lines.next(), Some("# step=1"));
        assert_eq!(lines.next(), Some("# time=1.0000000000000001e-1"));
        assert_eq!(lines.next(), Some("x,rho"));
        assert_eq!(d.lines().count(), 4 + 21);
        assert!(!d.contains('\r'));
    }
}
