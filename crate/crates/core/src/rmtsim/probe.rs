//! Monte-Carlo check of asymptotic freeness between a fixed diagonal and a
//! Haar-rotated diagonal.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normalized_trace, sample_haar_orthogonal};
use crate::error::{Error, Result};

fn centered(a: &DMatrix<f64>) -> DMatrix<f64> {
    let t = normalized_trace(a);
    let mut c = a.clone();
    for i in 0..c.nrows() {
        c[(i, i)] -= t;
    }
    c
}

/// `(tr(p°b°), tr(p°b°p°b°))` with `x° = x - tr(x)` and `tr` the normalized
/// trace; both vanish in the limit when `p` and `b` are free.
pub fn alternating_moment(p: &DMatrix<f64>, b: &DMatrix<f64>) -> (f64, f64) {
    let pc = centered(p);
    let bc = centered(b);
    let pb = &pc * &bc;
    (normalized_trace(&pb), normalized_trace(&(&pb * &pb)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub m: usize,
    pub second_order: Vec<f64>,
    pub fourth_order: Vec<f64>,
    /// Median over trials of `max(|second|, |fourth|)`.
    pub median_discrepancy: f64,
}

/// `trials` draws of a random half-projection `P` against `W A Wᵀ` with `A`
/// uniform on `[0, 1]` and `W` Haar.
pub fn freeness_probe<R: Rng + ?Sized>(m: usize, trials: usize, rng: &mut R) -> Result<ProbeResult> {
    if m < 32 || trials == 0 {
        return Err(Error::invalid(format!("need M >= 32 and trials >= 1, got M = {m}, trials = {trials}")));
    }
    let mut second = Vec::with_capacity(trials);
    let mut fourth = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut diag: Vec<f64> = (0..m).map(|i| if i < m / 2 { 1.0 } else { 0.0 }).collect();
        diag.shuffle(rng);
        let p = DMatrix::from_diagonal(&DVector::from_vec(diag));
        let a = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| rng.random::<f64>()));
        let w = sample_haar_orthogonal(m, rng)?;
        let b = &w * a * w.transpose();
        let (s, f) = alternating_moment(&p, &b);
        second.push(s);
        fourth.push(f);
    }
    let mut worst: Vec<f64> = second.iter().zip(&fourth).map(|(s, f)| s.abs().max(f.abs())).collect();
    worst.sort_by(f64::total_cmp);
    let median_discrepancy = if trials % 2 == 1 {
        worst[trials / 2]
    } else {
        0.5 * (worst[trials / 2 - 1] + worst[trials / 2])
    };
    Ok(ProbeResult {
        m,
        second_order: second,
        fourth_order: fourth,
        median_discrepancy,
    })
}
