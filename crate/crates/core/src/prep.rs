//! Trainable layered state-preparation circuit with photon-number
//! post-selection.
//!
//! Each layer displaces and squeezes every mode and then applies a
//! rectangular beamsplitter mesh. After the last layer modes `0..n−1` are
//! post-selected on fixed photon numbers, leaving a single-mode state on the
//! last mode. Parameters per layer are laid out as
//!
//! ```text
//! [ |α_j|, arg α_j ]  for j in 0..n      (displacements)
//! [ r_j,   φ_j     ]  for j in 0..n      (squeezers)
//! [ θ_b,   φ_b     ]  for b in mesh      (beamsplitters)
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitProgram;
use crate::error::{config_err, Error, Result};
use crate::fock::QumodeState;
use crate::gates::{GateOp, GaussianFactory};
use crate::linalg::{matmul, C64};
use crate::measure::pnr_postselect;

/// `(4n + n(n−1))·layers`.
pub fn parameter_count(n_modes: usize, layers: usize) -> usize {
    (4 * n_modes + n_modes * n_modes.saturating_sub(1)) * layers
}

/// Beamsplitter pairs of the rectangular mesh, in application order.
pub fn mesh_pairs(n_modes: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(n_modes * n_modes.saturating_sub(1) / 2);
    for column in 0..n_modes {
        let mut a = column % 2;
        while a + 1 < n_modes {
            pairs.push((a, a + 1));
            a += 2;
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepCircuitConfig {
    pub n_modes: usize,
    pub layers: usize,
    /// Photon numbers for modes `0..n_modes−1`.
    pub postselect: Vec<usize>,
    pub n_max: usize,
    pub seed: u64,
    #[serde(with = "crate::cjson::vec")]
    pub target: Vec<C64>,
}

impl PrepCircuitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes < 2 {
            return config_err(format!("need at least 2 modes, got {}", self.n_modes));
        }
        if self.layers == 0 {
            return config_err("need at least one layer");
        }
        if self.postselect.len() != self.n_modes - 1 {
            return config_err(format!(
                "postselect has {} entries, expected n_modes − 1 = {}",
                self.postselect.len(),
                self.n_modes - 1
            ));
        }
        if let Some(m) = self.postselect.iter().find(|&&m| m > self.n_max) {
            return config_err(format!(
                "post-selection value {m} exceeds n_max = {}",
                self.n_max
            ));
        }
        if self.target.len() != self.n_max + 1 {
            return config_err(format!(
                "target has {} amplitudes, expected n_max + 1 = {}",
                self.target.len(),
                self.n_max + 1
            ));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(self.n_modes, self.layers)
    }

    /// The circuit for `params` as a serialisable program.
    pub fn program(&self, params: &[f64]) -> Result<CircuitProgram> {
        self.check_params(params)?;
        let mut p = CircuitProgram::new(self.n_modes);
        for layer in self.layer_params(params) {
            for g in layer {
                p.gate(g);
            }
        }
        for &m in &self.postselect {
            p.pnr(0, m);
        }
        Ok(p)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        self.validate()?;
        if params.len() != self.parameter_count() {
            return config_err(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                params.len()
            ));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return config_err("parameters must be finite");
        }
        Ok(())
    }

    fn layer_params(&self, params: &[f64]) -> Vec<Vec<GateOp>> {
        let n = self.n_modes;
        let per_layer = params.len() / self.layers;
        let mesh = mesh_pairs(n);
        params
            .chunks(per_layer)
            .map(|chunk| {
                let mut gates = Vec::with_capacity(2 * n + mesh.len());
                for j in 0..n {
                    gates.push(GateOp::displace(
                        j,
                        C64::from_polar(chunk[2 * j], chunk[2 * j + 1]),
                    ));
                    let s = 2 * n + 2 * j;
                    gates.push(GateOp::Squeeze {
                        mode: j,
                        r: chunk[s],
                        phi: chunk[s + 1],
                    });
                }
                for (b, &(a, c)) in mesh.iter().enumerate() {
                    let k = 4 * n + 2 * b;
                    gates.push(GateOp::Beamsplitter {
                        theta: chunk[k],
                        phi: chunk[k + 1],
                        mode_a: a,
                        mode_b: c,
                    });
                }
                gates
            })
            .collect()
    }
}

/// A prep circuit with its single-mode gate factory built once.
#[derive(Debug, Clone)]
pub struct PrepCircuit {
    config: PrepCircuitConfig,
    factory: GaussianFactory,
}

impl PrepCircuit {
    pub fn new(config: PrepCircuitConfig) -> Result<Self> {
        config.validate()?;
        let factory = GaussianFactory::new(config.n_max);
        Ok(Self { config, factory })
    }

    pub fn config(&self) -> &PrepCircuitConfig {
        &self.config
    }

    /// Output state on the last mode and the joint post-selection probability.
    pub fn run(&self, params: &[f64]) -> Result<(QumodeState, f64)> {
        self.config.check_params(params)?;
        let cfg = &self.config;
        let n = cfg.n_modes;
        let mesh = mesh_pairs(n);
        let mut state = QumodeState::ground_state(cfg.n_max, n)?;
        for chunk in params.chunks(params.len() / cfg.layers) {
            for j in 0..n {
                // Displacement then squeeze, fused into one matrix.
                let d = self
                    .factory
                    .displace(C64::from_polar(chunk[2 * j], chunk[2 * j + 1]));
                let s = self
                    .factory
                    .squeeze(chunk[2 * n + 2 * j], chunk[2 * n + 2 * j + 1]);
                state.apply_single_mode(j, &matmul(&s, &d))?;
            }
            for (b, &(a, c)) in mesh.iter().enumerate() {
                let k = 4 * n + 2 * b;
                self.factory
                    .beamsplitter()
                    .apply(&mut state, chunk[k], chunk[k + 1], a, c);
            }
        }
        let mut prob = 1.0;
        for &m in &cfg.postselect {
            let (next, rec) = pnr_postselect(&state, 0, m)?;
            state = next;
            prob *= rec.weight;
        }
        Ok((state, prob))
    }

    /// Loss of the circuit output against the configured target.
    pub fn evaluate(&self, params: &[f64]) -> Result<Evaluation> {
        let (state, probability) = self.run(params)?;
        Ok(Evaluation {
            loss: loss(state.amplitudes(), &self.config.target, self.config.n_max)?,
            probability,
        })
    }
}

/// Builds the circuit and runs it once.
pub fn run_prep_circuit(config: &PrepCircuitConfig, params: &[f64]) -> Result<(QumodeState, f64)> {
    PrepCircuit::new(config.clone())?.run(params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub probability: f64,
}

/// `(1/n_max) Σ |A_n − A′_n|²` after rotating `produced` so that its phase
/// matches `target` at the largest-magnitude target amplitude.
pub fn loss(produced: &[C64], target: &[C64], n_max: usize) -> Result<f64> {
    if produced.len() != target.len() || target.len() != n_max + 1 {
        return Err(Error::Contract(format!(
            "loss needs two vectors of length n_max + 1 = {}, got {} and {}",
            n_max + 1,
            produced.len(),
            target.len()
        )));
    }
    let k = target
        .iter()
        .enumerate()
        .fold((0, -1.0), |best, (i, z)| {
            if z.norm() > best.1 {
                (i, z.norm())
            } else {
                best
            }
        })
        .0;
    let align = if produced[k].norm() > 0.0 && target[k].norm() > 0.0 {
        C64::from_polar(1.0, target[k].arg() - produced[k].arg())
    } else {
        C64::new(1.0, 0.0)
    };
    let sum: f64 = produced
        .iter()
        .zip(target)
        .map(|(a, b)| (a * align - b).norm_sqr())
        .sum();
    Ok(sum / n_max as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Simultaneous-perturbation stochastic approximation with gains
    /// `a_k = a/(k+1+A)^alpha`, `c_k = c/(k+1)^gamma`.
    Spsa {
        a: f64,
        c: f64,
        #[serde(rename = "A")]
        big_a: f64,
        alpha: f64,
        gamma: f64,
    },
    /// Central-difference gradient descent over every coordinate.
    FiniteDifference { learning_rate: f64, step: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Spsa {
            a: 2.0,
            c: 0.05,
            big_a: 500.0,
            alpha: 0.602,
            gamma: 0.101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    /// Uniform in `[−init_scale, init_scale]` with displacement magnitudes
    /// lifted to `displacement_boost`.
    Random,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub optimizer: Optimizer,
    pub iterations: usize,
    pub init: Initialization,
    pub init_scale: f64,
    pub displacement_boost: f64,
    /// Stop once the best loss falls to this value.
    pub target_loss: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::default(),
            iterations: 5000,
            init: Initialization::Random,
            init_scale: 0.05,
            displacement_boost: 0.5,
            target_loss: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    /// Smaller of the losses evaluated this iteration; `None` if rejected.
    pub loss: Option<f64>,
    pub best_loss: f64,
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub entries: Vec<HistoryEntry>,
}

impl TrainHistory {
    pub fn initial_loss(&self) -> Option<f64> {
        self.entries.first().and_then(|e| e.loss)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.entries.last().map(|e| e.best_loss)
    }

    pub fn is_best_non_increasing(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].best_loss <= w[0].best_loss)
    }

    pub fn rejected(&self) -> usize {
        self.entries.iter().filter(|e| e.loss.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub seed: u64,
    pub initial_params: Vec<f64>,
    pub best_params: Vec<f64>,
    pub history: TrainHistory,
}

/// Trained parameters with everything needed to rebuild the output state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepArtifact {
    pub config: PrepCircuitConfig,
    pub settings: TrainSettings,
    pub seed: u64,
    pub initial_loss: Option<f64>,
    pub best_loss: Option<f64>,
    pub best_params: Vec<f64>,
}

impl PrepArtifact {
    pub fn new(config: &PrepCircuitConfig, settings: &TrainSettings, result: &TrainResult) -> Self {
        let mut config = config.clone();
        config.seed = result.seed;
        Self {
            config,
            settings: *settings,
            seed: result.seed,
            initial_loss: result.history.initial_loss(),
            best_loss: result.history.best_loss(),
            best_params: result.best_params.clone(),
        }
    }

    /// The normalised single-mode state the circuit heralds with the best
    /// parameters.
    pub fn ket(&self) -> Result<QumodeState> {
        let (mut state, _) = run_prep_circuit(&self.config, &self.best_params)?;
        state.normalize();
        state.set_norm_weight(1.0);
        Ok(state)
    }
}

/// Initial parameters for `config.seed`.
pub fn initial_params(config: &PrepCircuitConfig, settings: &TrainSettings) -> Vec<f64> {
    let count = config.parameter_count();
    match settings.init {
        Initialization::Zeros => vec![0.0; count],
        Initialization::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let s = settings.init_scale;
            let mut p: Vec<f64> = (0..count).map(|_| rng.random_range(-s..=s)).collect();
            let n = config.n_modes;
            let per_layer = count / config.layers;
            for layer in 0..config.layers {
                for j in 0..n {
                    let k = layer * per_layer + 2 * j;
                    p[k] += settings.displacement_boost;
                }
            }
            p
        }
    }
}

fn evaluate_or_reject(circuit: &PrepCircuit, params: &[f64]) -> Result<Option<Evaluation>> {
    match circuit.evaluate(params) {
        Ok(e) if e.loss.is_finite() => Ok(Some(e)),
        Ok(_) => Ok(None),
        Err(Error::ZeroProbability { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Minimises the loss from the seeded initial point.
pub fn train(config: &PrepCircuitConfig, settings: &TrainSettings) -> Result<TrainResult> {
    let circuit = PrepCircuit::new(config.clone())?;
    let init = initial_params(config, settings);
    let mut theta = init.clone();
    let mut best_params = init.clone();
    let mut history = TrainHistory::default();
    let mut best = f64::INFINITY;
    let first = evaluate_or_reject(&circuit, &theta)?;
    if let Some(e) = first {
        best = e.loss;
    }
    history.entries.push(HistoryEntry {
        iteration: 0,
        loss: first.map(|e| e.loss),
        best_loss: best,
        probability: first.map(|e| e.probability),
    });
    // Perturbations draw from a stream separate from initialisation.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let dim = theta.len();
    for k in 0..settings.iterations {
        if best <= settings.target_loss {
            break;
        }
        let mut record = |loss: Option<Evaluation>,
                          params: Option<Vec<f64>>,
                          best: &mut f64,
                          best_params: &mut Vec<f64>| {
            if let (Some(e), Some(p)) = (loss, params) {
                if e.loss < *best {
                    *best = e.loss;
                    *best_params = p;
                }
            }
            history.entries.push(HistoryEntry {
                iteration: k + 1,
                loss: loss.map(|e| e.loss),
                best_loss: *best,
                probability: loss.map(|e| e.probability),
            });
        };
        match settings.optimizer {
            Optimizer::Spsa {
                a,
                c,
                big_a,
                alpha,
                gamma,
            } => {
                let ak = a / (k as f64 + 1.0 + big_a).powf(alpha);
                let ck = c / (k as f64 + 1.0).powf(gamma);
                let delta: Vec<f64> = (0..dim)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + ck * d).collect();
                let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - ck * d).collect();
                let (ep, em) = rayon::join(
                    || evaluate_or_reject(&circuit, &plus),
                    || evaluate_or_reject(&circuit, &minus),
                );
                let (ep, em) = (ep?, em?);
                match (ep, em) {
                    (Some(p), Some(m)) => {
                        let g = (p.loss - m.loss) / (2.0 * ck);
                        let (better, params) = if p.loss <= m.loss {
                            (p, plus)
                        } else {
                            (m, minus)
                        };
                        record(Some(better), Some(params), &mut best, &mut best_params);
                        theta
                            .iter_mut()
                            .zip(&delta)
                            .for_each(|(t, d)| *t -= ak * g / d);
                    }
                    _ => record(None, None, &mut best, &mut best_params),
                }
            }
            Optimizer::FiniteDifference {
                learning_rate,
                step,
            } => {
                let grads: Vec<Option<f64>> = (0..dim)
                    .into_par_iter()
                    .map(|i| {
                        let mut p = theta.clone();
                        p[i] += step;
                        let up = evaluate_or_reject(&circuit, &p)?;
                        p[i] -= 2.0 * step;
                        let down = evaluate_or_reject(&circuit, &p)?;
                        Ok(match (up, down) {
                            (Some(u), Some(d)) => Some((u.loss - d.loss) / (2.0 * step)),
                            _ => None,
                        })
                    })
                    .collect::<Result<_>>()?;
                if grads.iter().any(Option::is_none) {
                    record(None, None, &mut best, &mut best_params);
                    continue;
                }
                theta
                    .iter_mut()
                    .zip(&grads)
                    .for_each(|(t, g)| *t -= learning_rate * g.expect("checked"));
                let e = evaluate_or_reject(&circuit, &theta)?;
                record(e, Some(theta.clone()), &mut best, &mut best_params);
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::Training(format!(
            "every one of {} evaluations hit a zero-probability post-selection branch",
            history.entries.len()
        )));
    }
    Ok(TrainResult {
        seed: config.seed,
        initial_params: init,
        best_params,
        history,
    })
}

/// Independent runs for several seeds, in parallel.
pub fn train_seeds(
    config: &PrepCircuitConfig,
    settings: &TrainSettings,
    seeds: &[u64],
) -> Vec<Result<TrainResult>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            train(&c, settings)
        })
        .collect()
}
