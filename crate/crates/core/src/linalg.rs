//! Dense and matrix-free kernels on truncated Fock spaces.
//!
//! Everything here works on a single truncation `n_max` (dimension
//! `d = n_max + 1` per mode). Multi-mode tensors are stored row-major with
//! mode 0 as the slowest index, so the stride of mode `k` in an `M`-mode
//! tensor is `d^(M-1-k)`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Annihilation operator `a` on levels `0..=n_max`.
pub fn annihilation(n_max: usize) -> DMatrix<C64> {
    let d = n_max + 1;
    let mut a = DMatrix::from_element(d, d, ZERO);
    for n in 1..d {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Truncated position operator `x = (a + a†)/√2` (real symmetric, tridiagonal).
pub fn position_matrix(n_max: usize) -> DMatrix<f64> {
    let d = n_max + 1;
    let mut x = DMatrix::zeros(d, d);
    for n in 1..d {
        let v = (n as f64 / 2.0).sqrt();
        x[(n - 1, n)] = v;
        x[(n, n - 1)] = v;
    }
    x
}

/// Truncated momentum operator `p = i(a† - a)/√2`.
pub fn momentum_matrix(n_max: usize) -> DMatrix<C64> {
    let d = n_max + 1;
    let mut p = DMatrix::from_element(d, d, ZERO);
    for n in 1..d {
        let v = (n as f64 / 2.0).sqrt();
        p[(n, n - 1)] = C64::new(0.0, v);
        p[(n - 1, n)] = C64::new(0.0, -v);
    }
    p
}

/// Eigendecomposition of the truncated position operator.
///
/// The eigenvalues are the Gauss–Hermite nodes of order `n_max + 1`;
/// eigenvectors are the columns of the returned matrix, with the sign fixed
/// so that the component on `|0⟩` is non-negative.
#[derive(Debug, Clone)]
pub struct PositionSpectrum {
    pub nodes: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl PositionSpectrum {
    pub fn new(n_max: usize) -> Self {
        let eig = SymmetricEigen::new(position_matrix(n_max));
        let d = n_max + 1;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let mut vectors = DMatrix::zeros(d, d);
        let mut nodes = Vec::with_capacity(d);
        for (col, &k) in order.iter().enumerate() {
            nodes.push(eig.eigenvalues[k]);
            let sign = if eig.eigenvectors[(0, k)] < 0.0 {
                -1.0
            } else {
                1.0
            };
            for row in 0..d {
                vectors[(row, col)] = sign * eig.eigenvectors[(row, k)];
            }
        }
        Self { nodes, vectors }
    }

    /// Matrix of `f(X)` in the Fock basis.
    pub fn function_matrix(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = self.nodes.len();
        let mut scaled = self.vectors.clone();
        for (col, &x) in self.nodes.iter().enumerate() {
            let v = f(x);
            for row in 0..d {
                scaled[(row, col)] *= v;
            }
        }
        scaled * self.vectors.transpose()
    }

    /// Matrix of `exp(-i f(X))` given `phases[k] = f(nodes[k])`.
    pub fn phase_matrix(&self, phases: &[f64]) -> DMatrix<C64> {
        let d = self.nodes.len();
        let mut out = DMatrix::from_element(d, d, ZERO);
        for (k, &ph) in phases.iter().enumerate() {
            let e = C64::from_polar(1.0, -ph);
            for col in 0..d {
                let vc = self.vectors[(col, k)];
                if vc == 0.0 {
                    continue;
                }
                for row in 0..d {
                    out[(row, col)] += e * (self.vectors[(row, k)] * vc);
                }
            }
        }
        out
    }

    /// Applies `exp(-i f(X))` to a single-mode amplitude vector.
    pub fn apply_phase(&self, phases: &[f64], psi: &[C64]) -> Vec<C64> {
        let d = self.nodes.len();
        let mut coeffs = vec![ZERO; d];
        for (col, c) in coeffs.iter_mut().enumerate() {
            let acc: C64 = psi
                .iter()
                .zip(self.vectors.column(col).iter())
                .map(|(p, v)| p * *v)
                .sum();
            *c = acc * C64::from_polar(1.0, -phases[col]);
        }
        let mut out = vec![ZERO; d];
        for (row, o) in out.iter_mut().enumerate() {
            *o = coeffs
                .iter()
                .zip(self.vectors.row(row).iter())
                .map(|(c, v)| c * *v)
                .sum();
        }
        out
    }
}

/// `exp(-i t H)` for a Hermitian `H`, via unitary eigendecomposition.
pub fn expm_hermitian(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (col, &lambda) in eig.eigenvalues.iter().enumerate() {
        let phase = C64::from_polar(1.0, -t * lambda);
        for row in 0..v.nrows() {
            scaled[(row, col)] *= phase;
        }
    }
    scaled * v.adjoint()
}

/// `a · b` via a packed complex GEMM (nalgebra's generic product is
/// unblocked for complex types).
pub fn matmul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    use matrixmultiply::CGemmOption;
    let (m, k) = a.shape();
    assert_eq!(b.nrows(), k, "inner dimensions differ");
    let n = b.ncols();
    let mut c = DMatrix::from_element(m, n, ZERO);
    // SAFETY: column-major buffers of the asserted shapes; `Complex<f64>` has
    // the `[re, im]` layout of matrixmultiply's `c64`.
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

/// Largest entry of `|U†U - I|`.
pub fn unitarity_defect(u: &DMatrix<C64>) -> f64 {
    let prod = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { ONE } else { ZERO };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}

/// Shape helper for an `M`-mode tensor with `d` levels per mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorShape {
    pub d: usize,
    pub modes: usize,
}

impl TensorShape {
    pub fn new(d: usize, modes: usize) -> Self {
        Self { d, modes }
    }

    pub fn len(&self) -> usize {
        self.d.pow(self.modes as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, mode: usize) -> usize {
        self.d.pow((self.modes - 1 - mode) as u32)
    }

    /// Number of index blocks preceding `mode`.
    pub fn outer(&self, mode: usize) -> usize {
        self.d.pow(mode as u32)
    }
}

/// `out = (I ⊗ … ⊗ U ⊗ … ⊗ I) input` with `U` dense on `mode`.
pub fn apply_dense_axis(
    shape: TensorShape,
    mode: usize,
    u: &DMatrix<C64>,
    input: &[C64],
    out: &mut [C64],
) {
    let d = shape.d;
    let inner = shape.stride(mode);
    let outer = shape.outer(mode);
    assert_eq!(
        u.shape(),
        (d, d),
        "operator does not match the mode dimension"
    );
    assert!(input.len() == shape.len() && out.len() == shape.len());
    let one = [1.0, 0.0];
    let zero = [0.0, 0.0];
    let u_ptr = u.as_ptr() as *const [f64; 2];
    // SAFETY: `Complex<f64>` is `repr(C)` with layout `[re, im]`, matching
    // matrixmultiply's `c64`; all extents and strides below stay inside the
    // slices checked above, and `out` does not alias `input` or `u`.
    unsafe {
        if inner == 1 {
            // Last mode: out (outer × d) = input (outer × d) · Uᵀ.
            matrixmultiply::zgemm(
                matrixmultiply::CGemmOption::Standard,
                matrixmultiply::CGemmOption::Standard,
                outer,
                d,
                d,
                one,
                input.as_ptr() as *const [f64; 2],
                d as isize,
                1,
                u_ptr,
                d as isize,
                1,
                zero,
                out.as_mut_ptr() as *mut [f64; 2],
                d as isize,
                1,
            );
        } else {
            // Each outer slab is a d × inner row-major block: out = U · slab.
            for o in 0..outer {
                let base = o * d * inner;
                matrixmultiply::zgemm(
                    matrixmultiply::CGemmOption::Standard,
                    matrixmultiply::CGemmOption::Standard,
                    d,
                    d,
                    inner,
                    one,
                    u_ptr,
                    1,
                    d as isize,
                    input[base..].as_ptr() as *const [f64; 2],
                    inner as isize,
                    1,
                    zero,
                    out[base..].as_mut_ptr() as *mut [f64; 2],
                    inner as isize,
                    1,
                );
            }
        }
    }
}

/// Sparse single-mode operator stored as `(row, col, value)` triples.
#[derive(Debug, Clone)]
pub struct SparseOp {
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    pub fn position(n_max: usize) -> Self {
        let mut entries = Vec::with_capacity(2 * n_max);
        for n in 1..=n_max {
            let v = C64::new((n as f64 / 2.0).sqrt(), 0.0);
            entries.push((n - 1, n, v));
            entries.push((n, n - 1, v));
        }
        Self { entries }
    }

    pub fn momentum(n_max: usize) -> Self {
        let mut entries = Vec::with_capacity(2 * n_max);
        for n in 1..=n_max {
            let v = (n as f64 / 2.0).sqrt();
            entries.push((n, n - 1, C64::new(0.0, v)));
            entries.push((n - 1, n, C64::new(0.0, -v)));
        }
        Self { entries }
    }

    /// Upper bound on the spectral norm (max absolute row sum).
    pub fn norm_bound(&self, d: usize) -> f64 {
        let mut rows = vec![0.0; d];
        for &(r, _, v) in &self.entries {
            rows[r] += v.norm();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// `out += scale * (op on mode) input`.
    pub fn apply_axis_add(
        &self,
        shape: TensorShape,
        mode: usize,
        scale: C64,
        input: &[C64],
        out: &mut [C64],
    ) {
        let d = shape.d;
        let inner = shape.stride(mode);
        let outer = shape.outer(mode);
        for o in 0..outer {
            let base = o * d * inner;
            for &(r, c, v) in &self.entries {
                let w = scale * v;
                let src = &input[base + c * inner..base + c * inner + inner];
                let dst = &mut out[base + r * inner..base + r * inner + inner];
                for (x, y) in dst.iter_mut().zip(src) {
                    *x += w * y;
                }
            }
        }
    }
}

/// Hermitian generator of the form `Σ c_k A_k(mode_a) B_k(mode_b)` acting on
/// a multi-mode tensor. Each term must itself be Hermitian.
#[derive(Debug, Clone)]
pub struct ProductGenerator {
    pub shape: TensorShape,
    pub terms: Vec<ProductTerm>,
}

#[derive(Debug, Clone)]
pub struct ProductTerm {
    pub coefficient: f64,
    pub mode_a: usize,
    pub op_a: SparseOp,
    pub mode_b: usize,
    pub op_b: SparseOp,
}

impl ProductGenerator {
    pub fn apply(&self, input: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = ZERO);
        for term in &self.terms {
            scratch.iter_mut().for_each(|x| *x = ZERO);
            term.op_b
                .apply_axis_add(self.shape, term.mode_b, ONE, input, scratch);
            term.op_a.apply_axis_add(
                self.shape,
                term.mode_a,
                C64::new(term.coefficient, 0.0),
                scratch,
                out,
            );
        }
    }

    pub fn norm_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coefficient.abs()
                    * t.op_a.norm_bound(self.shape.d)
                    * t.op_b.norm_bound(self.shape.d)
            })
            .sum()
    }
}

/// Settings for the Lanczos exponential action.
#[derive(Debug, Clone, Copy)]
pub struct KrylovSettings {
    pub max_dim: usize,
    pub tolerance: f64,
    pub max_substeps: usize,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        Self {
            max_dim: 40,
            tolerance: 1e-10,
            max_substeps: 100_000,
        }
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Computes `exp(-i t H) v` for Hermitian `H` given only its action.
///
/// Lanczos with full reorthogonalisation builds a Krylov basis at the current
/// vector; the small tridiagonal projection is exponentiated exactly and the
/// substep length is halved until the a-posteriori residual estimate drops
/// below its share of the tolerance.
pub fn expm_multiply<F>(
    mut apply: F,
    v: &[C64],
    t: f64,
    norm_hint: f64,
    settings: KrylovSettings,
) -> Result<Vec<C64>>
where
    F: FnMut(&[C64], &mut [C64]),
{
    let n = v.len();
    let total = t.abs();
    let sign = t.signum();
    let mut w = v.to_vec();
    if total == 0.0 || norm(v) == 0.0 {
        return Ok(w);
    }
    let m_max = settings.max_dim.min(n).max(1);
    let mut done = 0.0;
    let mut tau = if norm_hint > 0.0 {
        (0.5 * m_max as f64 / norm_hint).min(total)
    } else {
        total
    };
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m_max + 1);
    let mut hv = vec![ZERO; n];
    let mut substeps = 0;

    while done < total {
        substeps += 1;
        if substeps > settings.max_substeps {
            return Err(Error::Krylov(format!(
                "exceeded {} substeps at t = {done}",
                settings.max_substeps
            )));
        }
        let beta = norm(&w);
        basis.clear();
        basis.push(w.iter().map(|x| x / beta).collect());
        let mut alpha = Vec::with_capacity(m_max);
        let mut offdiag = Vec::with_capacity(m_max);
        let mut happy = false;
        let mut last_beta = 0.0;
        for j in 0..m_max {
            apply(&basis[j], &mut hv);
            let a = dot(&basis[j], &hv).re;
            alpha.push(a);
            let mut r = hv.clone();
            for b in basis.iter() {
                let c = dot(b, &r);
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= c * bi;
                }
            }
            let bnorm = norm(&r);
            if bnorm <= 1e-13 * (1.0 + a.abs()) {
                happy = true;
                break;
            }
            if j + 1 == m_max {
                last_beta = bnorm;
                break;
            }
            offdiag.push(bnorm);
            basis.push(r.iter().map(|x| x / bnorm).collect());
        }
        let m = alpha.len();
        let mut tri = DMatrix::zeros(m, m);
        for i in 0..m {
            tri[(i, i)] = alpha[i];
            if i + 1 < m {
                tri[(i, i + 1)] = offdiag[i];
                tri[(i + 1, i)] = offdiag[i];
            }
        }
        let eig = SymmetricEigen::new(tri);
        let remaining = total - done;
        if happy {
            tau = remaining;
        } else {
            tau = tau.min(remaining);
        }
        let small = |tau: f64| -> Vec<C64> {
            (0..m)
                .map(|i| {
                    (0..m)
                        .map(|k| {
                            let q = eig.eigenvectors[(i, k)] * eig.eigenvectors[(0, k)];
                            C64::from_polar(q, -sign * tau * eig.eigenvalues[k])
                        })
                        .sum()
                })
                .collect()
        };
        let mut y = small(tau);
        if !happy {
            let mut tries = 0;
            loop {
                let err = beta * last_beta * y[m - 1].norm();
                if err <= settings.tolerance * tau / total {
                    break;
                }
                tries += 1;
                if tries > 60 {
                    return Err(Error::Krylov(format!(
                        "step size collapsed (estimate {err:e}) at t = {done}"
                    )));
                }
                tau *= 0.5;
                y = small(tau);
            }
        }
        for x in w.iter_mut() {
            *x = ZERO;
        }
        for (k, b) in basis.iter().take(m).enumerate() {
            let c = y[k] * beta;
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi += c * bi;
            }
        }
        done += tau;
        if !happy {
            tau *= 1.5;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_naive_product() {
        let a = DMatrix::from_fn(5, 3, |i, j| {
            C64::new(i as f64 - 0.5 * j as f64, (i * j) as f64 * 0.1)
        });
        let b = DMatrix::from_fn(3, 4, |i, j| C64::new(0.3 * j as f64, i as f64 - 1.0));
        let c = DMatrix::from_fn(4, 3, |i, j| C64::new(i as f64 + 0.2, 0.7 * j as f64 - 0.1));
        assert!((matmul(&a, &b) - &a * &b).norm() < 1e-13);
        assert!((matmul(&a, &c.adjoint()) - &a * c.adjoint()).norm() < 1e-13);
    }

    #[test]
    fn position_spectrum_reconstructs_x() {
        let spec = PositionSpectrum::new(12);
        let x = spec.function_matrix(|x| x);
        let direct = position_matrix(12);
        assert!((x - direct).abs().max() < 1e-12);
    }

    #[test]
    fn gauss_hermite_nodes_are_symmetric() {
        let spec = PositionSpectrum::new(9);
        for k in 0..5 {
            assert!((spec.nodes[k] + spec.nodes[9 - k]).abs() < 1e-12);
        }
    }

    #[test]
    fn commutator_is_i_away_from_edge() {
        let n_max = 10;
        let x = position_matrix(n_max).map(|v| C64::new(v, 0.0));
        let p = momentum_matrix(n_max);
        let c = &x * &p - &p * &x;
        for n in 0..n_max {
            assert!((c[(n, n)] - I).norm() < 1e-12);
        }
    }

    #[test]
    fn krylov_matches_dense_exponential() {
        let n_max = 6;
        let d = n_max + 1;
        let shape = TensorShape::new(d, 2);
        let gen = ProductGenerator {
            shape,
            terms: vec![ProductTerm {
                coefficient: 1.7,
                mode_a: 0,
                op_a: SparseOp::position(n_max),
                mode_b: 1,
                op_b: SparseOp::momentum(n_max),
            }],
        };
        let mut dense = DMatrix::from_element(d * d, d * d, ZERO);
        let mut scratch = vec![ZERO; d * d];
        for col in 0..d * d {
            let mut e = vec![ZERO; d * d];
            e[col] = ONE;
            let mut out = vec![ZERO; d * d];
            gen.apply(&e, &mut out, &mut scratch);
            for row in 0..d * d {
                dense[(row, col)] = out[row];
            }
        }
        let u = expm_hermitian(&dense, 0.8);
        let v: Vec<C64> = (0..d * d)
            .map(|k| C64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
            .collect();
        let want = &u * nalgebra::DVector::from_vec(v.clone());
        let got = expm_multiply(
            |a, b| gen.apply(a, b, &mut scratch),
            &v,
            0.8,
            gen.norm_bound(),
            KrylovSettings::default(),
        )
        .unwrap();
        for k in 0..d * d {
            assert!((got[k] - want[k]).norm() < 1e-9, "k={k}");
        }
    }
}
