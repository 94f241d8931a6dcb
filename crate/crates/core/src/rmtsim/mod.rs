//! Finite-width networks with Haar-orthogonal weights and the exact matrices
//! whose spectra the theory predicts.

mod eig;
mod fim;
mod free_model;
mod isom;
mod probe;

pub use eig::{
    compare_to_theory, eig_sym, empirical_measure, empirical_measure_with_atom, EigenReport, Histogram,
    TheoryComparison, NEAR_MAX_WINDOW,
};
pub use fim::{
    backprop_deltas, dual_fim_dense, dual_fim_recursive, ntk_block_matrix, normalized_trace, DenseFim,
    DENSE_MAX_DEPTH, DENSE_MAX_WIDTH, NTK_MAX_SIZE,
};
pub use free_model::{free_model_dual_fim, projection_diagonal};
pub use isom::{read_isom, write_isom, ISOM_MAGIC, ISOM_VERSION};
pub use probe::{alternating_moment, freeness_probe, ProbeResult};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::meanfield::ActivationSpec;

const HAAR_MAX_RESAMPLES: usize = 16;

/// Orthogonality tolerance for `(W/σ)ᵀ(W/σ) - I`.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Haar-distributed `M × M` orthogonal matrix.
///
/// QR of a Gaussian matrix with the sign of each column fixed so that `R`
/// has a positive diagonal; without the fix the law is not Haar.
pub fn sample_haar_orthogonal<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if m < 2 {
        return Err(Error::invalid(format!("orthogonal matrices need M >= 2, got {m}")));
    }
    for _ in 0..HAAR_MAX_RESAMPLES {
        let g = DMatrix::<f64>::from_fn(m, m, |_, _| rng.sample(StandardNormal));
        let (mut q, r) = g.qr().unpack();
        let diag = r.diagonal();
        let scale = diag.amax();
        if diag.iter().any(|d| d.abs() <= 1e-12 * scale) {
            log::debug!("rank-deficient Gaussian draw, resampling");
            continue;
        }
        for (j, d) in diag.iter().enumerate() {
            if *d < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        return Ok(q);
    }
    Err(Error::NoConvergence {
        what: "Haar sampling (rank-deficient draws)".into(),
        iterations: HAAR_MAX_RESAMPLES,
    })
}

/// `max |QᵀQ - I|`.
pub fn orthogonality_defect(q: &DMatrix<f64>) -> f64 {
    let n = q.ncols();
    (q.transpose() * q - DMatrix::<f64>::identity(n, n)).amax()
}

/// Standard Gaussian vector rescaled to `‖x‖²/M = q0`.
pub fn normalized_gaussian_input<R: Rng + ?Sized>(m: usize, q0: f64, rng: &mut R) -> Result<DVector<f64>> {
    if m == 0 || !(q0 > 0.0 && q0.is_finite()) {
        return Err(Error::invalid(format!("need M >= 1 and q0 > 0, got M = {m}, q0 = {q0}")));
    }
    let x = DVector::<f64>::from_fn(m, |_, _| rng.sample(StandardNormal));
    let scale = (q0 * m as f64).sqrt() / x.norm();
    Ok(x * scale)
}

/// Square network `h^ℓ = W_ℓ x^{ℓ-1}`, `x^ℓ = φ(h^ℓ)`, output `f = h^L`.
#[derive(Clone, Debug)]
pub struct OrthogonalNet {
    weights: Vec<DMatrix<f64>>,
    sigmas: Vec<f64>,
    activation: ActivationSpec,
    seed: u64,
}

impl OrthogonalNet {
    /// Samples `W_ℓ = σ_ℓ O_ℓ` with independent Haar `O_ℓ`. Layer `ℓ` draws
    /// from its own ChaCha stream of `seed`, so any layer is reproducible alone.
    pub fn sample(width: usize, sigmas: Vec<f64>, activation: ActivationSpec, seed: u64) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::invalid("depth must be at least 1"));
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("sigma = {s} must be positive")));
        }
        activation.validate()?;
        let weights = sigmas
            .iter()
            .enumerate()
            .map(|(l, s)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(l as u64);
                Ok(sample_haar_orthogonal(width, &mut rng)? * *s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OrthogonalNet {
            weights,
            sigmas,
            activation,
            seed,
        })
    }

    pub fn constant(width: usize, depth: usize, sigma: f64, activation: ActivationSpec, seed: u64) -> Result<Self> {
        Self::sample(width, vec![sigma; depth], activation, seed)
    }

    /// Network from explicit weights; checks `W_ℓ/σ_ℓ` is orthogonal.
    pub fn from_weights(weights: Vec<DMatrix<f64>>, sigmas: Vec<f64>, activation: ActivationSpec) -> Result<Self> {
        if weights.is_empty() || weights.len() != sigmas.len() {
            return Err(Error::Dimension(format!(
                "{} weight matrices for {} scales",
                weights.len(),
                sigmas.len()
            )));
        }
        let m = weights[0].nrows();
        for (l, (w, s)) in weights.iter().zip(&sigmas).enumerate() {
            if w.nrows() != m || w.ncols() != m {
                return Err(Error::Dimension(format!("W_{} is {}x{}, expected {m}x{m}", l + 1, w.nrows(), w.ncols())));
            }
            let defect = orthogonality_defect(&(w / *s));
            if defect >= ORTHOGONALITY_TOL {
                return Err(Error::invalid(format!("W_{}/sigma is not orthogonal (defect {defect:e})", l + 1)));
            }
        }
        activation.validate()?;
        Ok(OrthogonalNet {
            weights,
            sigmas,
            activation,
            seed: 0,
        })
    }

    pub fn width(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    /// Mutable weights for training; orthogonality is no longer enforced.
    pub fn weights_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.weights
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn activation(&self) -> ActivationSpec {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.forward_trace(x)?.output().clone())
    }

    pub fn forward_trace(&self, x: &DVector<f64>) -> Result<ForwardTrace> {
        let m = self.width();
        if x.len() != m {
            return Err(Error::Dimension(format!("input of length {} for width {m}", x.len())));
        }
        if !(x.norm() > 0.0) {
            return Err(Error::invalid("input must be nonzero"));
        }
        let depth = self.depth();
        let mut xs = vec![x.clone()];
        let mut hs = Vec::with_capacity(depth);
        let mut ds = Vec::with_capacity(depth - 1);
        for (l, w) in self.weights.iter().enumerate() {
            let h = w * xs.last().expect("nonempty");
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "preactivation".into(),
                    location: format!("layer {}", l + 1),
                });
            }
            if l + 1 < depth {
                xs.push(h.map(|v| self.activation.apply(v)));
                ds.push(h.map(|v| self.activation.deriv(v)));
            }
            hs.push(h);
        }
        let q_hat = xs.iter().map(|v| v.norm_squared() / m as f64).collect();
        Ok(ForwardTrace {
            x: xs,
            h: hs,
            d: ds,
            q_hat,
        })
    }
}

/// Intermediate vectors of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `x⁰ … x^{L-1}`.
    pub x: Vec<DVector<f64>>,
    /// `h¹ … h^L`.
    pub h: Vec<DVector<f64>>,
    /// Diagonals of `D_ℓ = φ'(h^ℓ)`, `ℓ = 1 … L-1`.
    pub d: Vec<DVector<f64>>,
    /// `q̂_ℓ = ‖x^ℓ‖²/M`, `ℓ = 0 … L-1`.
    pub q_hat: Vec<f64>,
}

impl ForwardTrace {
    pub fn output(&self) -> &DVector<f64> {
        self.h.last().expect("depth >= 1")
    }

    pub fn depth(&self) -> usize {
        self.h.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_is_orthogonal_with_unit_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [2, 5, 40] {
            let q = sample_haar_orthogonal(m, &mut rng).unwrap();
            assert!(orthogonality_defect(&q) < 1e-10);
            assert!((q.determinant().abs() - 1.0).abs() < 1e-8);
        }
        assert!(sample_haar_orthogonal(1, &mut rng).is_err());
    }

    #[test]
    fn linear_trace_preserves_norm() {
        let net = OrthogonalNet::constant(30, 5, 1.0, ActivationSpec::Linear { g: 1.0 }, 1).unwrap();
        let x = normalized_gaussian_input(30, 1.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let t = net.forward_trace(&x).unwrap();
        for q in t.q_hat {
            assert!((q - 1.0).abs() < 1e-12);
        }
        assert_eq!(t.d.len(), 4);
    }

    #[test]
    fn tiny_s_hard_tanh_is_scaled_linear() {
        let g = 1.3;
        let ht = OrthogonalNet::constant(20, 4, 1.0, ActivationSpec::HardTanh { s: 1e-9, g }, 9).unwrap();
        let lin = OrthogonalNet::constant(20, 4, 1.0, ActivationSpec::Linear { g: 1.0 }, 9).unwrap();
        let x = normalized_gaussian_input(20, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let (a, b) = (ht.forward_trace(&x).unwrap(), lin.forward_trace(&x).unwrap());
        for (l, (ha, hb)) in a.h.iter().zip(&b.h).enumerate() {
            assert!((ha - hb * g.powi(l as i32)).amax() < 1e-12);
        }
    }

    #[test]
    fn rejects_zero_input_and_bad_shapes() {
        let net = OrthogonalNet::constant(4, 2, 1.0, ActivationSpec::Linear { g: 1.0 }, 0).unwrap();
        assert!(net.forward_trace(&DVector::zeros(4)).is_err());
        assert!(net.forward_trace(&DVector::from_element(3, 1.0)).is_err());
        let w = DMatrix::from_element(4, 4, 1.0);
        assert!(OrthogonalNet::from_weights(vec![w], vec![1.0], ActivationSpec::Linear { g: 1.0 }).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = OrthogonalNet::constant(8, 3, 1.2, ActivationSpec::Linear { g: 1.0 }, 77).unwrap();
        let b = OrthogonalNet::constant(8, 3, 1.2, ActivationSpec::Linear { g: 1.0 }, 77).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_ne!(a.weights()[0], a.weights()[1]);
    }
}
