//! Gaussian quadrature rules from the Golub–Welsch eigenproblem.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of an n-point Gaussian rule.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Rule for `∫_{-1}^{1} f(x) dx`.
    pub fn legendre(n: usize) -> Self {
        let off: Vec<f64> = (1..n)
            .map(|k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            })
            .collect();
        golub_welsch(&off, 2.0)
    }

    /// Rule for `E[f(Z)]`, `Z ~ N(0, 1)`; the weights sum to one.
    pub fn hermite_probabilists(n: usize) -> Self {
        let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
        golub_welsch(&off, 1.0)
    }

    /// `∫_a^b f`, mapping the Legendre rule affinely.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
    }

    /// `Σ w_i f(x_i)`.
    pub fn sum<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Zero-diagonal symmetric Jacobi matrix with off-diagonal `off`.
fn golub_welsch(off: &[f64], total_weight: f64) -> GaussRule {
    let n = off.len() + 1;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for (k, &b) in off.iter().enumerate() {
        j[(k, k + 1)] = b;
        j[(k + 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], total_weight * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}
