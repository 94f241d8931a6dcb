//! Random-matrix realization of a layer schedule: each `D_ℓ` is replaced by a
//! fixed diagonal with `round(α_ℓ M)` entries `√γ_ℓ`, conjugated by fresh Haar
//! matrices. This isolates the free-probability model from the activation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::sample_haar_orthogonal;
use crate::error::{Error, Result};
use crate::freeconv::LayerSchedule;

/// Diagonal of `D` with `round(α M)` entries `√γ` followed by zeros.
pub fn projection_diagonal(m: usize, alpha: f64, gamma: f64) -> DVector<f64> {
    let ones = ((alpha * m as f64).round() as usize).min(m);
    DVector::from_fn(m, |i, _| if i < ones { gamma.sqrt() } else { 0.0 })
}

/// `H_1 = q_0 I`, `H_{ℓ+1} = q_ℓ I + σ²_{ℓ+1} O_ℓ D_ℓ H_ℓ D_ℓ O_ℓᵀ`.
pub fn free_model_dual_fim<R: Rng + ?Sized>(schedule: &LayerSchedule, m: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if m < 2 {
        return Err(Error::invalid(format!("width M = {m} must be at least 2")));
    }
    let mut h = DMatrix::<f64>::identity(m, m) * schedule.q(0);
    for l in 1..schedule.depth() {
        let law = schedule.law(l);
        let d = projection_diagonal(m, law.alpha(), law.gamma());
        let mut t = sample_haar_orthogonal(m, rng)? * schedule.sigma(l + 1);
        for (j, mut col) in t.column_iter_mut().enumerate() {
            col *= d[j];
        }
        h = &t * h * t.transpose();
        let ht = h.transpose();
        h = (h + ht) * 0.5;
        for i in 0..m {
            h[(i, i)] += schedule.q(l);
        }
    }
    Ok(h)
}
