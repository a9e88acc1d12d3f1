//! Gaussian gates as unitaries on the truncated Fock space.
//!
//! Every gate is the exact exponential of its generator after truncation,
//! so gates are unitary on the truncated space even where they distort
//! states that reach the truncation edge.
//!
//! Conventions (ħ = 1, `x = (a + a†)/√2`):
//!
//! | gate | unitary |
//! |------|---------|
//! | `Squeeze { r, phi }` | `exp((z* a² − z a†²)/2)`, `z = r e^{iφ}`; `S† x S = e^{-r} x` for `φ = 0` |
//! | `Displace { re, im }` | `exp(α a† − α* a)`; `x → x + √2 Re α` |
//! | `Rotate { theta }` | `exp(iθ a†a)` (ground-state phase dropped) |
//! | `ControlX { s, control, target }` | `exp(−i s x_control p_target)`; `x_target → x_target + s x_control` |
//! | `ControlZ { s, control, target }` | `exp(−i s x_control x_target)` |
//! | `Beamsplitter { theta, phi, a, b }` | `exp(θ (e^{iφ} a b† − e^{−iφ} a† b))` |

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::QumodeState;
use crate::linalg::{
    annihilation, expm_hermitian, expm_multiply, matmul, KrylovSettings, ProductGenerator,
    ProductTerm, SparseOp, TensorShape, C64, I, ZERO,
};

/// Leakage above this fraction of the norm is reported as a warning.
pub const LEAKAGE_WARNING: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum GateOp {
    Squeeze {
        mode: usize,
        r: f64,
        phi: f64,
    },
    Displace {
        mode: usize,
        re: f64,
        im: f64,
    },
    Rotate {
        mode: usize,
        theta: f64,
    },
    ControlX {
        s: f64,
        control: usize,
        target: usize,
    },
    ControlZ {
        s: f64,
        control: usize,
        target: usize,
    },
    Beamsplitter {
        theta: f64,
        phi: f64,
        mode_a: usize,
        mode_b: usize,
    },
}

impl GateOp {
    pub fn squeeze(mode: usize, r: f64) -> Self {
        GateOp::Squeeze { mode, r, phi: 0.0 }
    }

    pub fn displace(mode: usize, alpha: C64) -> Self {
        GateOp::Displace {
            mode,
            re: alpha.re,
            im: alpha.im,
        }
    }

    pub fn rotate(mode: usize, theta: f64) -> Self {
        GateOp::Rotate { mode, theta }
    }

    pub fn modes(&self) -> Vec<usize> {
        match *self {
            GateOp::Squeeze { mode, .. }
            | GateOp::Displace { mode, .. }
            | GateOp::Rotate { mode, .. } => {
                vec![mode]
            }
            GateOp::ControlX {
                control, target, ..
            }
            | GateOp::ControlZ {
                control, target, ..
            } => {
                vec![control, target]
            }
            GateOp::Beamsplitter { mode_a, mode_b, .. } => vec![mode_a, mode_b],
        }
    }

    pub fn is_single_mode(&self) -> bool {
        matches!(
            self,
            GateOp::Squeeze { .. } | GateOp::Displace { .. } | GateOp::Rotate { .. }
        )
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            GateOp::Squeeze { r, phi, .. } => vec![r, phi],
            GateOp::Displace { re, im, .. } => vec![re, im],
            GateOp::Rotate { theta, .. } => vec![theta],
            GateOp::ControlX { s, .. } | GateOp::ControlZ { s, .. } => vec![s],
            GateOp::Beamsplitter { theta, phi, .. } => vec![theta, phi],
        }
    }

    /// Checks parameter finiteness and mode indices against `num_modes`.
    pub fn validate(&self, num_modes: usize) -> Result<()> {
        if self.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite gate parameter in {self:?}"
            )));
        }
        let modes = self.modes();
        if let Some(&m) = modes.iter().find(|&&m| m >= num_modes) {
            return Err(Error::Contract(format!(
                "gate acts on mode {m} but the state has {num_modes} modes"
            )));
        }
        if modes.len() == 2 && modes[0] == modes[1] {
            return Err(Error::Contract(format!(
                "two-mode gate needs distinct modes, got {} twice",
                modes[0]
            )));
        }
        Ok(())
    }

    /// The `(n_max+1)²` unitary of a single-mode gate.
    pub fn matrix(&self, n_max: usize) -> Result<DMatrix<C64>> {
        gate_matrix(self, n_max)
    }
}

/// Unitary of a single-mode gate on levels `0..=n_max`.
pub fn gate_matrix(gate: &GateOp, n_max: usize) -> Result<DMatrix<C64>> {
    let d = n_max + 1;
    match *gate {
        GateOp::Rotate { theta, .. } => {
            let mut u = DMatrix::from_element(d, d, ZERO);
            for n in 0..d {
                u[(n, n)] = C64::from_polar(1.0, n as f64 * theta);
            }
            Ok(u)
        }
        GateOp::Displace { re, im, .. } => {
            let alpha = C64::new(re, im);
            let a = annihilation(n_max);
            let gen = a.adjoint() * alpha - &a * alpha.conj();
            Ok(expm_hermitian(&(gen * I), 1.0))
        }
        GateOp::Squeeze { r, phi, .. } => {
            let z = C64::from_polar(r, phi);
            let a = annihilation(n_max);
            let a2 = &a * &a;
            let ad2 = a2.adjoint();
            let gen = (a2 * z.conj() - ad2 * z) * C64::new(0.5, 0.0);
            Ok(expm_hermitian(&(gen * I), 1.0))
        }
        _ => Err(Error::Contract(format!(
            "gate_matrix needs a single-mode gate, got {gate:?}"
        ))),
    }
}

/// Single-mode displacements and squeezers from two eigendecompositions
/// done once per truncation.
///
/// `D(r e^{iφ}) = R(φ) D(r) R(−φ)` and `S(r e^{iφ}) = R(φ/2) S(r) R(−φ/2)`
/// hold exactly on the truncated space because `R` is diagonal, and the
/// real-parameter gates are exponentials of the fixed Hermitian matrices
/// `√2 p` and `i(a² − a†²)/2`.
#[derive(Debug, Clone)]
pub struct GaussianFactory {
    n_max: usize,
    disp_vectors: DMatrix<C64>,
    disp_values: Vec<f64>,
    sq_vectors: DMatrix<C64>,
    sq_values: Vec<f64>,
    beamsplitter: BeamsplitterBlocks,
}

impl GaussianFactory {
    pub fn new(n_max: usize) -> Self {
        let a = annihilation(n_max);
        let ad = a.adjoint();
        // D(r) = exp(r(a† − a)) = exp(−i r K), K = i(a† − a).
        let k_disp = (&ad - &a) * I;
        // S(r) = exp(r(a² − a†²)/2) = exp(−i r K), K = i(a² − a†²)/2.
        let k_sq = (&a * &a - &ad * &ad) * C64::new(0.0, 0.5);
        let (disp_values, disp_vectors) = hermitian_eigen(k_disp);
        let (sq_values, sq_vectors) = hermitian_eigen(k_sq);
        Self {
            n_max,
            disp_vectors,
            disp_values,
            sq_vectors,
            sq_values,
            beamsplitter: BeamsplitterBlocks::new(n_max),
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn displace(&self, alpha: C64) -> DMatrix<C64> {
        let (r, phi) = alpha.to_polar();
        let mut u = spectral(&self.disp_vectors, &self.disp_values, r);
        conjugate_by_rotation(&mut u, phi);
        u
    }

    pub fn beamsplitter(&self) -> &BeamsplitterBlocks {
        &self.beamsplitter
    }

    pub fn squeeze(&self, r: f64, phi: f64) -> DMatrix<C64> {
        let mut u = spectral(&self.sq_vectors, &self.sq_values, r);
        conjugate_by_rotation(&mut u, 0.5 * phi);
        u
    }
}

fn hermitian_eigen(h: DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = nalgebra::SymmetricEigen::new(h);
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// `V diag(e^{−i t λ}) V†`, exactly the identity at `t = 0`.
fn spectral(v: &DMatrix<C64>, lambda: &[f64], t: f64) -> DMatrix<C64> {
    if t == 0.0 {
        return DMatrix::identity(v.nrows(), v.ncols());
    }
    let mut scaled = v.clone();
    for (k, l) in lambda.iter().enumerate() {
        let e = C64::from_polar(1.0, -t * l);
        scaled.column_mut(k).iter_mut().for_each(|z| *z *= e);
    }
    matmul(&scaled, &v.adjoint())
}

/// `u ← R(θ) u R(−θ)`, i.e. `u[m,n] *= e^{i(m−n)θ}`.
fn conjugate_by_rotation(u: &mut DMatrix<C64>, theta: f64) {
    if theta == 0.0 {
        return;
    }
    let (rows, cols) = u.shape();
    for n in 0..cols {
        for m in 0..rows {
            u[(m, n)] *= C64::from_polar(1.0, (m as f64 - n as f64) * theta);
        }
    }
}

/// Squared norm carried by multi-indices with any mode at `n_max`.
pub fn leakage(state: &QumodeState) -> f64 {
    let d = state.dim();
    let m = state.num_modes();
    state
        .amplitudes()
        .iter()
        .enumerate()
        .filter(|(flat, _)| {
            let mut rest = *flat;
            (0..m).any(|_| {
                let digit = rest % d;
                rest /= d;
                digit == d - 1
            })
        })
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct GateKey {
    kind: u8,
    params: [u64; 2],
    n_max: usize,
}

impl GateKey {
    fn of(gate: &GateOp, n_max: usize) -> Option<Self> {
        let (kind, params) = match *gate {
            GateOp::Squeeze { r, phi, .. } => (0, [r.to_bits(), phi.to_bits()]),
            GateOp::Displace { re, im, .. } => (1, [re.to_bits(), im.to_bits()]),
            GateOp::Rotate { theta, .. } => (2, [theta.to_bits(), 0]),
            _ => return None,
        };
        Some(Self {
            kind,
            params,
            n_max,
        })
    }
}

/// Read-mostly cache of single-mode gate matrices keyed by gate parameters
/// and truncation. Cloning shares the underlying map.
#[derive(Debug, Clone, Default)]
pub struct GateCache {
    inner: Arc<RwLock<HashMap<GateKey, Arc<DMatrix<C64>>>>>,
}

impl GateCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn matrix(&self, gate: &GateOp, n_max: usize) -> Result<Arc<DMatrix<C64>>> {
        let key = GateKey::of(gate, n_max).ok_or_else(|| {
            Error::Contract(format!("only single-mode gates are cached, got {gate:?}"))
        })?;
        if let Some(m) = self.inner.read().expect("gate cache poisoned").get(&key) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(gate_matrix(gate, n_max)?);
        self.inner
            .write()
            .expect("gate cache poisoned")
            .entry(key)
            .or_insert_with(|| Arc::clone(&m));
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("gate cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Applies `gate` and returns the new state.
pub fn apply_gate(state: &QumodeState, gate: &GateOp) -> Result<QumodeState> {
    let mut out = state.clone();
    apply_gate_mut(&mut out, gate, None)?;
    Ok(out)
}

/// Applies `gate` in place, taking single-mode matrices from `cache` when given.
pub fn apply_gate_mut(
    state: &mut QumodeState,
    gate: &GateOp,
    cache: Option<&GateCache>,
) -> Result<()> {
    gate.validate(state.num_modes())?;
    let n_max = state.n_max();
    match *gate {
        GateOp::Squeeze { mode, .. }
        | GateOp::Displace { mode, .. }
        | GateOp::Rotate { mode, .. } => match cache {
            Some(c) => {
                let u = c.matrix(gate, n_max)?;
                state.apply_single_mode(mode, &u)
            }
            None => {
                let u = gate_matrix(gate, n_max)?;
                state.apply_single_mode(mode, &u)
            }
        },
        GateOp::ControlX { s, control, target } => {
            let gen = ProductGenerator {
                shape: state.shape(),
                terms: vec![ProductTerm {
                    coefficient: s,
                    mode_a: control,
                    op_a: SparseOp::position(n_max),
                    mode_b: target,
                    op_b: SparseOp::momentum(n_max),
                }],
            };
            apply_product_exponential(state, &gen)
        }
        GateOp::ControlZ { s, control, target } => {
            let gen = ProductGenerator {
                shape: state.shape(),
                terms: vec![ProductTerm {
                    coefficient: s,
                    mode_a: control,
                    op_a: SparseOp::position(n_max),
                    mode_b: target,
                    op_b: SparseOp::position(n_max),
                }],
            };
            apply_product_exponential(state, &gen)
        }
        GateOp::Beamsplitter {
            theta,
            phi,
            mode_a,
            mode_b,
        } => {
            apply_beamsplitter(state, theta, phi, mode_a, mode_b);
            Ok(())
        }
    }
}

/// `exp(-i G)` applied by Lanczos exp-action on the full tensor, never
/// forming the pair unitary.
fn apply_product_exponential(state: &mut QumodeState, gen: &ProductGenerator) -> Result<()> {
    let mut scratch = vec![ZERO; state.amplitudes().len()];
    let out = expm_multiply(
        |v, w| gen.apply(v, w, &mut scratch),
        state.amplitudes(),
        1.0,
        gen.norm_bound(),
        KrylovSettings::default(),
    )?;
    state.amplitudes_mut().copy_from_slice(&out);
    Ok(())
}

/// Eigenbases of the beamsplitter generator, one per total-photon-number
/// block.
///
/// The generator conserves `n_a + n_b`, so the truncated exponential splits
/// into independent blocks of size at most `n_max + 1`, indexed by `n_a`.
/// Only the `φ = 0` generator is diagonalised; the phase enters through
/// `BS(θ, φ) = R_a(−φ) BS(θ, 0) R_a(φ)`.
#[derive(Debug, Clone)]
pub struct BeamsplitterBlocks {
    n_max: usize,
    blocks: Vec<(usize, Vec<f64>, DMatrix<C64>)>,
    /// Per block: `[Re V | Im V]` and its transpose.
    real_parts: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl BeamsplitterBlocks {
    pub fn new(n_max: usize) -> Self {
        let blocks = (0..=2 * n_max)
            .map(|total| {
                let lo = total.saturating_sub(n_max);
                let hi = total.min(n_max);
                let size = hi - lo + 1;
                // H = iG with G = a b† − a† b.
                let mut h = DMatrix::from_element(size, size, ZERO);
                for i in 1..size {
                    let na = lo + i;
                    let nb = total - na;
                    // a b† : |na, nb⟩ → √na √(nb+1) |na−1, nb+1⟩
                    let amp = ((na as f64) * (nb as f64 + 1.0)).sqrt();
                    h[(i - 1, i)] = I * amp;
                    h[(i, i - 1)] = -I * amp;
                }
                let (values, vectors) = hermitian_eigen(h);
                (lo, values, vectors)
            })
            .collect::<Vec<_>>();
        let real_parts = blocks
            .iter()
            .map(|(_, _, v)| {
                let n = v.nrows();
                let xy = DMatrix::from_fn(n, 2 * n, |i, k| {
                    if k < n {
                        v[(i, k)].re
                    } else {
                        v[(i, k - n)].im
                    }
                });
                let t = xy.transpose();
                (xy, t)
            })
            .collect();
        Self {
            n_max,
            blocks,
            real_parts,
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Block unitaries `(lo, U_N)` for every total `N = 0..=2 n_max`.
    pub fn unitaries(&self, theta: f64, phi: f64) -> Vec<(usize, DMatrix<C64>)> {
        self.blocks
            .iter()
            .map(|(lo, values, vectors)| {
                // exp(θ G) = exp(−i θ H)
                let mut u = spectral(vectors, values, theta);
                conjugate_by_rotation(&mut u, -phi);
                (*lo, u)
            })
            .collect()
    }

    /// Real orthogonal blocks of `BS(θ, 0)`.
    pub fn orthogonal(&self, theta: f64) -> Vec<(usize, DMatrix<f64>)> {
        self.blocks
            .iter()
            .zip(&self.real_parts)
            .map(|((lo, values, _), (xy, xy_t))| {
                // V = X + iY, e^{−iθλ} = c − i s:
                // Re(V E V†) = (Xc + Ys) Xᵀ + (Yc − Xs) Yᵀ.
                let n = values.len();
                let mut p = DMatrix::zeros(n, 2 * n);
                for (k, l) in values.iter().enumerate() {
                    let (sn, cs) = (theta * l).sin_cos();
                    for i in 0..n {
                        let (x, y) = (xy[(i, k)], xy[(i, n + k)]);
                        p[(i, k)] = x * cs + y * sn;
                        p[(i, n + k)] = y * cs - x * sn;
                    }
                }
                (*lo, p * xy_t)
            })
            .collect()
    }

    /// Applies `BS(θ, φ)` on `(mode_a, mode_b)` in place.
    pub fn apply(
        &self,
        state: &mut QumodeState,
        theta: f64,
        phi: f64,
        mode_a: usize,
        mode_b: usize,
    ) {
        debug_assert_eq!(state.n_max(), self.n_max);
        let shape: TensorShape = state.shape();
        let sa = shape.stride(mode_a);
        let sb = shape.stride(mode_b);
        let d = shape.d;
        // Offsets of every configuration of the spectator modes.
        let mut bases = vec![0usize];
        for k in (0..shape.modes).filter(|&k| k != mode_a && k != mode_b) {
            let stride = shape.stride(k);
            bases = bases
                .iter()
                .flat_map(|&b| (0..d).map(move |n| b + n * stride))
                .collect();
        }
        // BS(θ, φ)[i, j] = e^{−i n_i φ} O[i, j] e^{i n_j φ} within a block.
        let phase: Vec<C64> = (0..d)
            .map(|n| C64::from_polar(1.0, n as f64 * phi))
            .collect();
        let amps = state.amplitudes_mut();
        let nb = bases.len();
        // Block slices gathered as a row-major `size × nb` complex matrix,
        // i.e. a real `size × 2nb` matrix, so one real GEMM applies `O`.
        let mut gathered = vec![ZERO; d * nb];
        let mut mixed = vec![ZERO; d * nb];
        for (total, (lo, o)) in self.orthogonal(theta).into_iter().enumerate() {
            let size = o.nrows();
            for j in 0..size {
                let na = lo + j;
                let off = na * sa + (total - na) * sb;
                for (g, &base) in gathered[j * nb..(j + 1) * nb].iter_mut().zip(&bases) {
                    *g = amps[base + off] * phase[na];
                }
            }
            // SAFETY: `o` is a column-major `size × size` f64 buffer;
            // `gathered`/`mixed` hold at least `size × nb` complex values laid
            // out as `[re, im]` pairs, so row stride `2nb` covers each row.
            unsafe {
                matrixmultiply::dgemm(
                    size,
                    size,
                    2 * nb,
                    1.0,
                    o.as_ptr(),
                    1,
                    size as isize,
                    gathered.as_ptr() as *const f64,
                    2 * nb as isize,
                    1,
                    0.0,
                    mixed.as_mut_ptr() as *mut f64,
                    2 * nb as isize,
                    1,
                );
            }
            for i in 0..size {
                let na = lo + i;
                let off = na * sa + (total - na) * sb;
                let back = phase[na].conj();
                for (m, &base) in mixed[i * nb..(i + 1) * nb].iter().zip(&bases) {
                    amps[base + off] = m * back;
                }
            }
        }
    }
}

fn apply_beamsplitter(state: &mut QumodeState, theta: f64, phi: f64, mode_a: usize, mode_b: usize) {
    BeamsplitterBlocks::new(state.n_max()).apply(state, theta, phi, mode_a, mode_b);
}
