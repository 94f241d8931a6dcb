//! Scalar recursions for `‖μ_ℓ‖∞` and `m₁(μ_ℓ)`, and their depth limits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::LayerSchedule;
use crate::error::{Error, Result};

/// Limits `q = lim q_L`, `ε₁ = lim L(1 - α_L)`, `ε₂ = -lim L log σ_L²γ_L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRegime {
    pub q: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl AsymptoticRegime {
    pub fn new(q: f64, eps1: f64, eps2: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::invalid(format!("q = {q} must be positive")));
        }
        if !(eps1.abs() < 1.0 && eps2.abs() < 1.0) {
            return Err(Error::invalid(format!(
                "need |eps1|, |eps2| < 1, got {eps1}, {eps2}"
            )));
        }
        Ok(AsymptoticRegime { q, eps1, eps2 })
    }
}

/// `(1 - e^{-x}) / x`, equal to 1 at 0.
fn one_minus_exp_over(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// `lim L⁻¹ ‖μ_L‖∞ = q (1 - e^{-ε₂}) / ε₂`.
pub fn asymptotic_max(regime: &AsymptoticRegime) -> f64 {
    regime.q * one_minus_exp_over(regime.eps2)
}

/// `lim L⁻¹ m₁(μ_L) = q (1 - e^{-ε₁-ε₂}) / (ε₁ + ε₂)`.
pub fn asymptotic_mean(regime: &AsymptoticRegime) -> f64 {
    regime.q * one_minus_exp_over(regime.eps1 + regime.eps2)
}

/// Limit of the mean eigenvalue of `Θ / M` when `L / N → ratio`.
pub fn theta_mean_limit(regime: &AsymptoticRegime, ratio: f64) -> Result<f64> {
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(Error::invalid(format!("ratio L/N = {ratio} must be finite and nonnegative")));
    }
    Ok(ratio * asymptotic_mean(regime))
}

/// `λ_ℓ = ‖μ_ℓ‖∞` and the weight `β_ℓ` of the atom sitting there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomTrack {
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    /// Last layer (1-based) where `β_ℓ > 0`; past it only `λ_ℓ` remains meaningful.
    pub valid_through: usize,
}

impl AtomTrack {
    pub fn is_valid(&self) -> bool {
        self.valid_through == self.lambda.len()
    }
}

/// `λ_1 = q_0`, `λ_{ℓ+1} = q_ℓ + σ²_{ℓ+1} γ_ℓ λ_ℓ`; `β_ℓ = 1 - Σ_{k<ℓ} (1 - α_k)`.
pub fn max_support_track(schedule: &LayerSchedule) -> AtomTrack {
    let depth = schedule.depth();
    let mut lambda = vec![schedule.q(0)];
    let mut beta = vec![1.0];
    for l in 1..depth {
        let law = schedule.law(l);
        let s2 = schedule.sigma(l + 1).powi(2);
        lambda.push(schedule.q(l) + s2 * law.gamma() * lambda[l - 1]);
        beta.push(beta[l - 1] - (1.0 - law.alpha()));
    }
    let valid_through = beta.iter().take_while(|b| **b > 0.0).count();
    if valid_through < depth {
        log::info!("max-atom track invalid beyond layer {valid_through}");
    }
    AtomTrack {
        lambda,
        beta,
        valid_through,
    }
}

/// `m₁(μ_1) = q_0`, `m₁(μ_{ℓ+1}) = q_ℓ + σ²_{ℓ+1} α_ℓ γ_ℓ m₁(μ_ℓ)`.
pub fn mean_track(schedule: &LayerSchedule) -> Vec<f64> {
    let mut means = vec![schedule.q(0)];
    for l in 1..schedule.depth() {
        let s2 = schedule.sigma(l + 1).powi(2);
        means.push(schedule.q(l) + s2 * schedule.law(l).mean() * means[l - 1]);
    }
    means
}

/// S-transform of the input-output Jacobian spectrum with constant layers:
/// `[(σ²γ)⁻¹ (1 + (1 - α)/(z + α))]^{L-1}`.
pub fn io_jacobian_stransform(alpha: f64, gamma: f64, sigma: f64, depth: usize, z: Complex64) -> Result<Complex64> {
    if (z + alpha).norm() < 1e-300 {
        return Err(Error::Pole {
            what: "input-output Jacobian S-transform",
            at: format!("{z}"),
        });
    }
    let factor = (1.0 + (1.0 - alpha) / (z + alpha)) / (sigma * sigma * gamma);
    Ok(factor.powi(depth as i32 - 1))
}

/// `(L (1 - α_L), -L log σ_L² γ_L)`.
pub fn di_conditions(alpha: f64, sigma: f64, gamma: f64, depth: usize) -> (f64, f64) {
    let l = depth as f64;
    (l * (1.0 - alpha), -l * (sigma * sigma * gamma).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn regime(q: f64, e1: f64, e2: f64) -> AsymptoticRegime {
        AsymptoticRegime::new(q, e1, e2).unwrap()
    }

    #[test]
    fn max_limit_values() {
        assert_eq!(asymptotic_max(&regime(1.0, 0.0, 0.0)), 1.0);
        assert_abs_diff_eq!(asymptotic_max(&regime(1.0, 0.0, 0.1)), 0.951626, epsilon = 1e-6);
        assert_abs_diff_eq!(asymptotic_max(&regime(2.0, 0.0, 0.1)), 1.903252, epsilon = 1e-6);
        assert_abs_diff_eq!(asymptotic_max(&regime(1.0, 0.0, 1e-10)), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn mean_and_theta_limits() {
        assert_abs_diff_eq!(asymptotic_mean(&regime(1.0, 0.1, 0.1)), 0.906346, epsilon = 1e-6);
        assert_eq!(theta_mean_limit(&regime(1.0, 0.0, 0.0), 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(theta_mean_limit(&regime(1.0, 0.05, 0.15), 2.0).unwrap(), 1.812692, epsilon = 1e-6);
        assert!(theta_mean_limit(&regime(1.0, 0.0, 0.0), -1.0).is_err());
    }

    #[test]
    fn regime_bounds() {
        assert!(AsymptoticRegime::new(1.0, 1.0, 0.0).is_err());
        assert!(AsymptoticRegime::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn max_track_examples() {
        let s = LayerSchedule::constant(7, 1.0, 1.0, 1.0, 1.0).unwrap();
        let t = max_support_track(&s);
        assert_eq!(t.lambda[6], 7.0);
        assert_eq!(t.beta[6], 1.0);

        let s = LayerSchedule::constant(3, 1.0, 1.0, 1.0, 0.9).unwrap();
        assert_abs_diff_eq!(max_support_track(&s).lambda[2], 2.71, epsilon = 1e-12);

        let s = LayerSchedule::constant(11, 1.0, 1.0, 0.99, 1.0).unwrap();
        let t = max_support_track(&s);
        assert_abs_diff_eq!(t.beta[10], 0.9, epsilon = 1e-12);
        assert!(t.is_valid());

        let s = LayerSchedule::constant(5, 1.0, 1.0, 0.6, 1.0).unwrap();
        let t = max_support_track(&s);
        assert_eq!(t.valid_through, 3);
        assert!(!t.is_valid());
    }

    #[test]
    fn mean_track_examples() {
        let s = LayerSchedule::constant(5, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(mean_track(&s), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let s = LayerSchedule::constant(3, 1.0, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(mean_track(&s), vec![1.0, 1.5, 1.75]);
    }

    #[test]
    fn finite_depth_approaches_limits() {
        let (e1, e2) = (0.1, 0.1);
        let s = LayerSchedule::tuned(256, 1.0, e1, e2).unwrap();
        let r = regime(1.0, e1, e2);
        let lmax = max_support_track(&s).lambda[255] / 256.0;
        let mean = mean_track(&s)[255] / 256.0;
        assert!((lmax / asymptotic_max(&r) - 1.0).abs() < 0.02);
        assert!((mean / asymptotic_mean(&r) - 1.0).abs() < 0.02);
    }

    #[test]
    fn io_stransform() {
        let z = Complex64::new(0.7, 0.3);
        let s = io_jacobian_stransform(1.0, 1.0, 1.0, 9, z).unwrap();
        assert_abs_diff_eq!((s - 1.0).norm(), 0.0, epsilon = 1e-14);
        let s = io_jacobian_stransform(0.9, 1.0, 1.0, 2, Complex64::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(s.re, 1.052632, epsilon = 1e-6);
        assert!(io_jacobian_stransform(0.5, 1.0, 1.0, 3, Complex64::new(-0.5, 0.0)).is_err());
    }

    #[test]
    fn io_stransform_large_depth_exponential_form() {
        let l = 200usize;
        let (e1, e2) = (0.1, 0.1);
        let alpha = 1.0 - e1 / l as f64;
        let gamma = (-e2 / l as f64).exp();
        let z = Complex64::new(0.5, 0.0);
        let s = io_jacobian_stransform(alpha, gamma, 1.0, l, z).unwrap();
        let approx = (l as f64 * (1.0 - alpha) / (z + alpha) - l as f64 * gamma.ln()).exp();
        assert!(((s - approx) / approx).norm() < 0.01);
    }

    #[test]
    fn di_condition_values() {
        assert_eq!(di_conditions(1.0, 1.0, 1.0, 100), (0.0, 0.0));
        let (e1, e2) = di_conditions(0.999, 1.0, 1.0, 100);
        assert_abs_diff_eq!(e1, 0.1, epsilon = 1e-12);
        assert_eq!(e2, 0.0);
        let (e1, e2) = di_conditions(1.0, 1.0, (-0.001f64).exp(), 100);
        assert_eq!(e1, 0.0);
        assert_abs_diff_eq!(e2, 0.1, epsilon = 1e-12);
    }
}
