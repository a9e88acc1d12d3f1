use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use qumode_core::evolver::{reconstruct, DEFAULT_L, DEFAULT_Q};
use qumode_core::io::{
    density_csv, history_csv, lattice_density_csv, lattice_trace_csv, metrics_csv, trace_csv, Csv,
};
use qumode_core::lattice::uniform_product;
use qumode_core::measure::DEFAULT_SIGMA;
use qumode_core::prep::{train_seeds, Optimizer};
use qumode_core::warmup::{displacement_demo, squeeze_demo, WarmupStage};
use qumode_core::{
    evolve, evolver_coefficients, fidelity, qft_evolve, trace_metrics, CompositeRule, EvolverSpec,
    FockHamiltonian, HomodyneScheme, LatticeConfig, LatticeHamiltonian, PositionGrid,
    PotentialSpec, PrepArtifact, PrepCircuitConfig, QumodeState, SiteEvolver, StepMode,
    TrainSettings, TrotterConfig, C64,
};

use crate::cli::*;
use crate::exit::CliError;
use crate::output::OutputDir;

/// Everything a command hands back for the manifest.
pub struct Outcome {
    pub summary: Value,
    pub warnings: Vec<String>,
}

fn config_error<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{what} {}: {e}", path.display())))
}

fn potential(
    p: &mut PotentialArgs,
    default: PotentialKind,
    warnings: &mut Vec<String>,
) -> Result<PotentialSpec, CliError> {
    let kind = *p.potential.get_or_insert(default);
    let mut ignore = |name: &str, set: bool| {
        if set {
            warnings.push(format!("`{name}` is ignored for this potential"));
        }
    };
    let spec = match kind {
        PotentialKind::Quartic => {
            ignore("x0", p.x0.take().is_some());
            ignore("coeffs", p.coeffs.take().is_some());
            ignore("expr", p.expr.take().is_some());
            PotentialSpec::double_well(*p.eps.get_or_insert(0.1))
        }
        PotentialKind::Cosh => {
            ignore("eps", p.eps.take().is_some());
            ignore("coeffs", p.coeffs.take().is_some());
            ignore("expr", p.expr.take().is_some());
            PotentialSpec::cosh_shifted(*p.x0.get_or_insert(1.0))
        }
        PotentialKind::Harmonic | PotentialKind::Zero => {
            ignore("eps", p.eps.take().is_some());
            ignore("x0", p.x0.take().is_some());
            ignore("coeffs", p.coeffs.take().is_some());
            ignore("expr", p.expr.take().is_some());
            if kind == PotentialKind::Harmonic {
                PotentialSpec::harmonic()
            } else {
                PotentialSpec::zero()
            }
        }
        PotentialKind::Polynomial => {
            ignore("eps", p.eps.take().is_some());
            ignore("x0", p.x0.take().is_some());
            ignore("expr", p.expr.take().is_some());
            let Some(c) = p.coeffs.clone() else {
                return config_error("polynomial potential needs `coeffs`");
            };
            PotentialSpec::Polynomial { coefficients: c }
        }
        PotentialKind::Custom => {
            ignore("eps", p.eps.take().is_some());
            ignore("x0", p.x0.take().is_some());
            ignore("coeffs", p.coeffs.take().is_some());
            let Some(e) = p.expr.clone() else {
                return config_error("custom potential needs `expr`");
            };
            PotentialSpec::custom(&e)?
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn grid(g: &mut GridArgs) -> Result<PositionGrid, CliError> {
    let d = PositionGrid::default();
    Ok(PositionGrid::new(
        *g.x_min.get_or_insert(d.x_min),
        *g.x_max.get_or_insert(d.x_max),
        *g.points.get_or_insert(d.num_points),
    )?)
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        config_error(format!("`{name}` must be positive, got {v}"))
    }
}

/// Resolves `q`, `L`, `s`, the derived squeeze `r` and the homodyne scheme.
fn gadget(
    g: &mut GadgetArgs,
    warnings: &mut Vec<String>,
) -> Result<(f64, f64, f64, HomodyneScheme), CliError> {
    let q = positive("q", *g.q.get_or_insert(DEFAULT_Q))?;
    let l = positive("L", *g.l.get_or_insert(DEFAULT_L))?;
    let s = positive("s", *g.s.get_or_insert(1.0))?;
    match g.r {
        Some(r) if (r.exp() * s - q).abs() > 1e-12 * q => {
            return config_error(format!("e^r·s = {} does not equal q = {q}", r.exp() * s));
        }
        Some(_) => {}
        None => g.r = Some((q / s).ln()),
    }
    let scheme = match *g.scheme.get_or_insert(SchemeArg::Delta) {
        SchemeArg::Delta => {
            if g.sigma.take().is_some() {
                warnings.push("`sigma` is ignored with the delta homodyne scheme".into());
            }
            HomodyneScheme::Delta
        }
        SchemeArg::Squeezed => HomodyneScheme::Squeezed {
            sigma: positive("sigma", *g.sigma.get_or_insert(DEFAULT_SIGMA))?,
        },
    };
    Ok((q, l, s, scheme))
}

fn initial_state(n_max: usize, re: f64, im: f64) -> Result<QumodeState, CliError> {
    if re == 0.0 && im == 0.0 {
        Ok(QumodeState::ground_state(n_max, 1)?)
    } else {
        Ok(QumodeState::coherent(n_max, C64::new(re, im))?)
    }
}

fn step_mode(m: ModeArg) -> StepMode {
    match m {
        ModeArg::Direct => StepMode::Direct,
        ModeArg::Circuit => StepMode::Circuit,
    }
}

pub fn evolve_cmd(args: &mut EvolveArgs, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut warnings = Vec::new();
    let spec = potential(&mut args.potential, PotentialKind::Quartic, &mut warnings)?;
    let dt = *args.dt.get_or_insert(0.1);
    let steps = *args.steps.get_or_insert(10);
    let n_max = *args.nmax.get_or_insert(60);
    let mode = step_mode(*args.mode.get_or_insert(ModeArg::Direct));
    let (q, l, s, scheme) = gadget(&mut args.gadget, &mut warnings)?;
    let every = *args.record_every.get_or_insert(1);
    let psi0 = initial_state(
        n_max,
        *args.alpha_re.get_or_insert(0.0),
        *args.alpha_im.get_or_insert(0.0),
    )?;
    let compare = *args.compare.get_or_insert(false);
    let grid = grid(&mut args.grid)?;
    let config = TrotterConfig::new(dt, steps, q, l, s, mode)?
        .with_record_every(every)?
        .with_scheme(scheme);

    let ket = match mode {
        StepMode::Direct => {
            if args.evolver.is_some() || args.prep.is_some() {
                warnings.push("evolver inputs are ignored in direct mode".into());
            }
            None
        }
        StepMode::Circuit => Some(match (&args.prep, &args.evolver) {
            (Some(_), Some(_)) => return config_error("give at most one of `prep` and `evolver`"),
            (Some(path), None) => {
                let artifact: PrepArtifact = read_json(path, "preparation artifact")?;
                if artifact.config.n_max != n_max {
                    return config_error(format!(
                        "preparation artifact has n_max {}, evolution uses {n_max}",
                        artifact.config.n_max
                    ));
                }
                artifact.ket()?
            }
            (None, Some(path)) => {
                let ev: EvolverSpec = read_json(path, "evolver")?;
                check_evolver(&ev, dt, q, l, n_max)?;
                ev.ket()?
            }
            (None, None) => {
                evolver_coefficients(&spec, dt, q, l, n_max, &CompositeRule::default())?.ket()?
            }
        }),
    };

    let mut trace = evolve(&psi0, &config, &spec, ket.as_ref(), &grid)?;
    warnings.extend(trace.warnings.iter().cloned());
    let mut summary = json!({
        "records": trace.records.len(),
        "final_norm": trace.records.last().map(|r| r.norm),
        "cumulative_weight": trace.records.last().map(|r| r.cumulative_weight),
    });
    if compare {
        let h = FockHamiltonian::new(|x| spec.value(x), n_max)?;
        let rows = trace_metrics(&trace, &psi0, &h)?;
        for (rec, row) in trace.records.iter_mut().zip(&rows) {
            rec.kl = Some(row.kl);
        }
        summary["final_kl"] = json!(rows.last().map(|r| r.kl));
        summary["final_fidelity"] = json!(rows.last().map(|r| r.fidelity));
        out.write("metrics.csv", &metrics_csv(&rows))?;
    }
    out.write("trace.csv", &trace_csv(&trace))?;
    for (i, rec) in trace.records.iter().enumerate() {
        out.write(
            &format!("density/step_{:05}.csv", rec.step),
            &density_csv(&trace, i)?,
        )?;
    }
    Ok(Outcome { summary, warnings })
}

fn check_evolver(ev: &EvolverSpec, dt: f64, q: f64, l: f64, n_max: usize) -> Result<(), CliError> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    if ev.n_max != n_max || !close(ev.delta_t, dt) || !close(ev.q, q) || !close(ev.l, l) {
        return config_error(format!(
            "evolver was built for (dt={}, q={}, L={}, n_max={}), evolution uses (dt={dt}, q={q}, L={l}, n_max={n_max})",
            ev.delta_t, ev.q, ev.l, ev.n_max
        ));
    }
    Ok(())
}

pub fn evolver_cmd(args: &mut EvolverArgs, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut warnings = Vec::new();
    let spec = potential(&mut args.potential, PotentialKind::Quartic, &mut warnings)?;
    let dt = *args.dt.get_or_insert(0.1);
    let n_max = *args.nmax.get_or_insert(60);
    let q = positive("q", *args.q.get_or_insert(DEFAULT_Q))?;
    let l = positive("L", *args.l.get_or_insert(DEFAULT_L))?;
    let grid = grid(&mut args.grid)?;
    let ev = evolver_coefficients(&spec, dt, q, l, n_max, &CompositeRule::default())?;
    out.write_json("evolver.json", &ev)?;

    let ys = grid.points();
    let mut csv = Csv::new().meta("n_max", n_max).columns(&["y", "re", "im"]);
    for (y, z) in ys.iter().zip(reconstruct(&ev.unnormalized(), &ys)) {
        csv.row(&[y, &z.re, &z.im]);
    }
    out.write("reconstruction.csv", &csv.finish())?;
    Ok(Outcome {
        summary: json!({
            "captured_norm_sq": ev.captured_norm_sq,
            "validity_halfwidth": ev.validity_halfwidth,
            "quadrature_refinements": ev.quadrature_refinements,
        }),
        warnings,
    })
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    initial_loss: Option<f64>,
    best_loss: Option<f64>,
    rejected: usize,
}

pub fn train_cmd(args: &mut TrainArgs, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut warnings = Vec::new();
    let Some(target_path) = args.target.clone() else {
        return config_error("train-prep needs `target` (an evolver JSON file)");
    };
    let target: EvolverSpec = read_json(&target_path, "target evolver")?;
    let n_modes = *args.modes.get_or_insert(3);
    let layers = *args.layers.get_or_insert(10);
    let post = args
        .post
        .get_or_insert_with(|| vec![5; n_modes.saturating_sub(1)])
        .clone();
    let seeds = match (&args.seeds, args.seed) {
        (Some(list), seed) => {
            if seed.is_some() {
                warnings.push("`seed` is ignored when `seeds` is given".into());
                args.seed = None;
            }
            if list.is_empty() {
                return config_error("`seeds` is empty");
            }
            list.clone()
        }
        (None, seed) => vec![*args.seed.get_or_insert(seed.unwrap_or(0))],
    };

    let defaults = TrainSettings::default();
    let optimizer = match *args.optimizer.get_or_insert(OptimizerArg::Spsa) {
        OptimizerArg::Spsa => {
            let Optimizer::Spsa {
                a,
                c,
                big_a,
                alpha,
                gamma,
            } = defaults.optimizer
            else {
                unreachable!("default optimizer is SPSA")
            };
            Optimizer::Spsa {
                a: *args.a.get_or_insert(a),
                c: *args.c.get_or_insert(c),
                big_a: *args.big_a.get_or_insert(big_a),
                alpha: *args.alpha.get_or_insert(alpha),
                gamma: *args.gamma.get_or_insert(gamma),
            }
        }
        OptimizerArg::FiniteDifference => Optimizer::FiniteDifference {
            learning_rate: *args.learning_rate.get_or_insert(0.01),
            step: *args.fd_step.get_or_insert(1e-4),
        },
    };
    let settings = TrainSettings {
        optimizer,
        iterations: *args.iterations.get_or_insert(defaults.iterations),
        init: defaults.init,
        init_scale: *args.init_scale.get_or_insert(defaults.init_scale),
        displacement_boost: *args.boost.get_or_insert(defaults.displacement_boost),
        target_loss: *args.target_loss.get_or_insert(defaults.target_loss),
    };
    let config = PrepCircuitConfig {
        n_modes,
        layers,
        postselect: post,
        n_max: target.n_max,
        seed: seeds[0],
        target: target.coefficients.clone(),
    };
    config.validate()?;

    let results = train_seeds(&config, &settings, &seeds);
    let single = seeds.len() == 1;
    let mut table = Vec::new();
    for (seed, result) in seeds.iter().zip(results) {
        let result = result?;
        let mut cfg = config.clone();
        cfg.seed = *seed;
        let prefix = if single {
            String::new()
        } else {
            format!("seed_{seed}/")
        };
        out.write_json(
            &format!("{prefix}params.json"),
            &PrepArtifact::new(&cfg, &settings, &result),
        )?;
        out.write(
            &format!("{prefix}history.csv"),
            &history_csv(&result.history),
        )?;
        table.push(SeedSummary {
            seed: *seed,
            initial_loss: result.history.initial_loss(),
            best_loss: result.history.best_loss(),
            rejected: result.history.rejected(),
        });
    }
    let best = table
        .iter()
        .filter_map(|s| s.best_loss.map(|l| (s.seed, l)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    if !single {
        out.write_json("summary.json", &table)?;
    }
    Ok(Outcome {
        summary: json!({ "seeds": table, "best_seed": best.map(|b| b.0), "best_loss": best.map(|b| b.1) }),
        warnings,
    })
}

pub fn qft_cmd(args: &mut QftArgs, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut warnings = Vec::new();
    let sites = *args.sites.get_or_insert(3);
    let a = positive("a", *args.a.get_or_insert(1.0))?;
    let spec = potential(&mut args.potential, PotentialKind::Zero, &mut warnings)?;
    let dt = *args.dt.get_or_insert(0.05);
    let steps = *args.steps.get_or_insert(10);
    let n_max = *args.nmax.get_or_insert(10);
    let mode = step_mode(*args.mode.get_or_insert(ModeArg::Direct));
    let doubled = *args.doubled_edge.get_or_insert(false);
    let r0 = *args.r0.get_or_insert(0.0);
    let compare = *args.compare.get_or_insert(false);
    let site_state = initial_state(
        n_max,
        *args.alpha_re.get_or_insert(0.0),
        *args.alpha_im.get_or_insert(0.0),
    )?;
    let grid = grid(&mut args.grid)?;

    let mut cfg = LatticeConfig::new(sites, a, spec, dt, n_max)?.with_doubled_edge(doubled)?;
    cfg.r0 = r0;
    cfg.validate()?;
    let site = match mode {
        StepMode::Direct => {
            if args.gadget.q.is_some() || args.gadget.l.is_some() || args.gadget.s.is_some() {
                warnings.push("gadget parameters are ignored in direct mode".into());
            }
            args.gadget = GadgetArgs::default();
            SiteEvolver::direct(&cfg)?
        }
        StepMode::Circuit => {
            let (q, l, s, scheme) = gadget(&mut args.gadget, &mut warnings)?;
            SiteEvolver::circuit(&cfg, q, l, s, scheme)?
        }
    };
    let initial = uniform_product(&site_state, sites)?;
    let trace = qft_evolve(&initial, &cfg, steps, &site, &grid)?;
    warnings.extend(trace.warnings.iter().cloned());

    out.write("trace.csv", &lattice_trace_csv(&trace))?;
    for k in 0..sites {
        out.write(
            &format!("density_site{k}.csv"),
            &lattice_density_csv(&trace, k)?,
        )?;
    }
    let mut summary = json!({
        "scaled_step": cfg.scaled_step(),
        "gates_per_step": 4 * sites,
        "cumulative_weight": trace.records.last().map(|r| r.cumulative_weight),
    });
    if compare {
        let h = LatticeHamiltonian::new(&cfg)?;
        let mut csv = Csv::new().columns(&["t", "fidelity", "energy"]);
        let mut worst = 1.0f64;
        for rec in &trace.records {
            let state = rec.state.as_ref().expect("records keep states");
            let exact = h.evolve(&initial, rec.scaled_time)?;
            let f = fidelity(state, &exact)?;
            worst = worst.min(f);
            csv.row(&[&rec.time, &f, &h.energy(state)?]);
        }
        out.write("oracle.csv", &csv.finish())?;
        summary["min_fidelity"] = json!(worst);
    }
    Ok(Outcome { summary, warnings })
}

pub fn metrics_cmd(args: &mut MetricsArgs, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut warnings = Vec::new();
    let spec = potential(&mut args.potential, PotentialKind::Quartic, &mut warnings)?;
    let dt = *args.dt.get_or_insert(0.1);
    let steps = *args.steps.get_or_insert(10);
    let n_maxes = args
        .nmax
        .get_or_insert_with(|| vec![25, 35, 45, 60])
        .clone();
    if n_maxes.is_empty() {
        return config_error("`nmax` is empty");
    }
    let every = *args.record_every.get_or_insert(1);
    let grid = grid(&mut args.grid)?;
    let config = TrotterConfig::new(dt, steps, DEFAULT_Q, DEFAULT_L, 1.0, StepMode::Direct)?
        .with_record_every(every)?;

    let runs: Vec<_> = n_maxes
        .par_iter()
        .map(|&n| -> Result<_, CliError> {
            let psi0 = QumodeState::ground_state(n, 1)?;
            let trace = evolve(&psi0, &config, &spec, None, &grid)?;
            let h = FockHamiltonian::new(|x| spec.value(x), n)?;
            let rows = trace_metrics(&trace, &psi0, &h)?;
            Ok((n, trace, rows))
        })
        .collect::<Result<_, _>>()?;

    let mut all = Vec::new();
    let mut medians = serde_json::Map::new();
    for (n, mut trace, rows) in runs {
        for (rec, row) in trace.records.iter_mut().zip(&rows) {
            rec.kl = Some(row.kl);
        }
        warnings.extend(trace.warnings.iter().map(|w| format!("n_max {n}: {w}")));
        out.write(&format!("nmax_{n}/trace.csv"), &trace_csv(&trace))?;
        let mut kl: Vec<f64> = rows.iter().map(|r| r.kl).collect();
        kl.sort_by(f64::total_cmp);
        medians.insert(n.to_string(), json!(kl[kl.len() / 2]));
        all.extend(rows);
    }
    out.write("metrics.csv", &metrics_csv(&all))?;
    Ok(Outcome {
        summary: json!({ "median_kl": medians }),
        warnings,
    })
}

fn stage_csv(stage: &WarmupStage, grid: &PositionGrid) -> String {
    let mut csv = Csv::new()
        .meta("stage", &stage.label)
        .columns(&["x", "rho"]);
    for (i, rho) in stage.density.iter().enumerate() {
        csv.row(&[&grid.point(i), rho]);
    }
    csv.finish()
}

#[derive(Serialize)]
struct StageSummary<'a> {
    label: &'a str,
    mean: f64,
    sigma: f64,
    peak: f64,
    leakage: f64,
    weight: f64,
}

pub fn warmup_cmd(args: &mut WarmupArgs, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let n_max = *args.nmax.get_or_insert(40);
    let scheme = match *args.scheme.get_or_insert(SchemeArg::Delta) {
        SchemeArg::Delta => HomodyneScheme::Delta,
        SchemeArg::Squeezed => HomodyneScheme::squeezed(),
    };
    let grid = grid(&mut args.grid)?;
    let squeeze = squeeze_demo(n_max, &grid)?;
    let shift = displacement_demo(n_max, &grid, scheme)?;
    let mut summary = serde_json::Map::new();
    for (name, stages) in [("squeeze", &squeeze), ("displacement", &shift)] {
        for (i, st) in stages.iter().enumerate() {
            out.write(&format!("{name}_{i}.csv"), &stage_csv(st, &grid))?;
        }
        let rows: Vec<_> = stages
            .iter()
            .map(|s| StageSummary {
                label: &s.label,
                mean: s.mean,
                sigma: s.sigma,
                peak: s.peak,
                leakage: s.leakage,
                weight: s.weight,
            })
            .collect();
        summary.insert(name.to_string(), json!(rows));
    }
    out.write_json("warmup.json", &summary)?;
    Ok(Outcome {
        summary: Value::Object(summary),
        warnings: Vec::new(),
    })
}
