//! Gauss–Legendre rules and a composite, refining integrator for
//! vector-valued integrands.

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre integration with node density doubled until
/// successive results agree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeRule {
    /// Points per panel.
    pub order: usize,
    /// Starting node density per unit length.
    pub nodes_per_unit: usize,
    /// Absolute tolerance on the largest component change.
    pub tolerance: f64,
    pub max_refinements: usize,
}

impl Default for CompositeRule {
    fn default() -> Self {
        Self {
            order: 64,
            nodes_per_unit: 64,
            tolerance: 1e-10,
            max_refinements: 8,
        }
    }
}

/// Result of [`CompositeRule::integrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Integral<T> {
    pub values: Vec<T>,
    pub refinements: usize,
    pub last_change: f64,
}

impl CompositeRule {
    /// Fixed panelling of `[a, b]` with `panels` panels.
    pub fn nodes(&self, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let (x, w) = gauss_legendre(self.order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * self.order);
        let mut weights = Vec::with_capacity(panels * self.order);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + 0.5 * h * xi);
                weights.push(0.5 * h * wi);
            }
        }
        (nodes, weights)
    }

    /// Integrates the `len`-component integrand over `[a, b]`; `f(y, out)`
    /// writes the integrand at `y` into `out`.
    pub fn integrate<T, F>(&self, a: f64, b: f64, len: usize, f: F) -> Result<Integral<T>>
    where
        T: Copy
            + Default
            + std::ops::AddAssign
            + std::ops::Mul<f64, Output = T>
            + std::ops::Sub<Output = T>,
        F: Fn(f64, &mut [T]),
        T: Norm,
    {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::Config(format!(
                "invalid integration interval [{a}, {b}]"
            )));
        }
        let base_nodes = ((b - a) * self.nodes_per_unit as f64).ceil() as usize;
        let mut panels = base_nodes.div_ceil(self.order).max(1);
        let mut previous = self.sum(a, b, panels, len, &f);
        let mut last_change = f64::INFINITY;
        for refinement in 1..=self.max_refinements {
            panels *= 2;
            let current = self.sum(a, b, panels, len, &f);
            last_change = current
                .iter()
                .zip(&previous)
                .map(|(c, p)| (*c - *p).norm())
                .fold(0.0, f64::max);
            if last_change < self.tolerance {
                return Ok(Integral {
                    values: current,
                    refinements: refinement,
                    last_change,
                });
            }
            previous = current;
        }
        Err(Error::QuadratureDiverged {
            refinements: self.max_refinements,
            last_change,
            tolerance: self.tolerance,
        })
    }

    fn sum<T, F>(&self, a: f64, b: f64, panels: usize, len: usize, f: &F) -> Vec<T>
    where
        T: Copy + Default + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
        F: Fn(f64, &mut [T]),
    {
        let (nodes, weights) = self.nodes(a, b, panels);
        let mut acc = vec![T::default(); len];
        let mut buf = vec![T::default(); len];
        for (y, w) in nodes.iter().zip(&weights) {
            f(*y, &mut buf);
            for (s, v) in acc.iter_mut().zip(&buf) {
                *s += *v * *w;
            }
        }
        acc
    }
}

/// Magnitude used for convergence checks.
pub trait Norm {
    fn norm(self) -> f64;
}

impl Norm for f64 {
    fn norm(self) -> f64 {
        self.abs()
    }
}

impl Norm for crate::linalg::C64 {
    fn norm(self) -> f64 {
        num_complex::Complex::norm(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_rules_exact() {
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!(x[1].abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn high_order_weights_sum_to_two_and_integrate_polynomials() {
        for n in [16, 64, 65] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let deg = 2 * n - 2;
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((got - 2.0 / (deg as f64 + 1.0)).abs() < 1e-12);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn composite_integrates_gaussian() {
        let rule = CompositeRule::default();
        let r = rule
            .integrate(-6.0, 6.0, 1, |y, out: &mut [f64]| out[0] = (-y * y).exp())
            .unwrap();
        assert!((r.values[0] - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn divergence_reported() {
        let rule = CompositeRule {
            order: 2,
            nodes_per_unit: 1,
            tolerance: 1e-30,
            max_refinements: 2,
        };
        let r = rule.integrate(0.0, 1.0, 1, |y, out: &mut [f64]| out[0] = (50.0 * y).sin());
        assert!(matches!(r, Err(Error::QuadratureDiverged { .. })));
    }
}
