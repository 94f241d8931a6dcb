//! Closed-form spectrum of `H_3`.

use serde::{Deserialize, Serialize};

use super::LayerSchedule;
use crate::error::{Error, Result};
use crate::quadrature::GaussRule;
use crate::specmeasure::{GridDensity, SpectralMeasure};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeLayerParams {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl ThreeLayerParams {
    /// Unit `q`, `σ` and `γ` with the given `α₁`, `α₂`.
    pub fn unit(alpha1: f64, alpha2: f64) -> Self {
        ThreeLayerParams {
            q0: 1.0,
            q1: 1.0,
            q2: 1.0,
            sigma2: 1.0,
            sigma3: 1.0,
            alpha1,
            alpha2,
            gamma1: 1.0,
            gamma2: 1.0,
        }
    }

    /// Parameters of a depth-3 schedule.
    pub fn from_schedule(schedule: &LayerSchedule) -> Result<Self> {
        if schedule.depth() != 3 {
            return Err(Error::invalid(format!("closed form needs depth 3, got {}", schedule.depth())));
        }
        let (n1, n2) = (schedule.law(1), schedule.law(2));
        Ok(ThreeLayerParams {
            q0: schedule.q(0),
            q1: schedule.q(1),
            q2: schedule.q(2),
            sigma2: schedule.sigma(2),
            sigma3: schedule.sigma(3),
            alpha1: n1.alpha(),
            alpha2: n2.alpha(),
            gamma1: n1.gamma(),
            gamma2: n2.gamma(),
        })
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            self.q0,
            self.q1,
            self.q2,
            self.sigma2,
            self.sigma3,
            self.gamma1,
            self.gamma2,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("non-positive parameter in {self:?}")));
        }
        for a in [self.alpha1, self.alpha2] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::invalid(format!("alpha = {a} outside (0, 1]")));
            }
        }
        Ok(())
    }

    pub fn lambda_min(&self) -> f64 {
        self.q2
    }

    pub fn lambda_mid(&self) -> f64 {
        self.q2 + self.sigma3.powi(2) * self.gamma2 * self.q1
    }

    pub fn lambda_max(&self) -> f64 {
        self.q2 + self.sigma3.powi(2) * self.gamma2 * (self.q1 + self.sigma2.powi(2) * self.gamma1 * self.q0)
    }

    /// `(λ₋, λ₊)`.
    pub fn lambda_pm(&self) -> (f64, f64) {
        let (a1, a2) = (self.alpha1, self.alpha2);
        let u = (a1 * (1.0 - a2)).sqrt();
        let v = (a2 * (1.0 - a1)).sqrt();
        let outer = self.sigma3.powi(2) * self.gamma2;
        let inner = self.sigma2.powi(2) * self.gamma1 * self.q0;
        let at = |s: f64| self.q2 + outer * (self.q1 + inner * s * s);
        (at(u - v), at(u + v))
    }

    /// `ρ(x)` on `[λ₋, λ₊]`, zero elsewhere.
    pub fn density(&self, x: f64) -> f64 {
        let (lm, lp) = self.lambda_pm();
        if !(x > lm && x < lp) {
            return 0.0;
        }
        ((lp - x) * (x - lm)).sqrt()
            / (2.0 * std::f64::consts::PI * (x - self.lambda_mid()) * (self.lambda_max() - x))
    }
}

const CELL_RULE_POINTS: usize = 16;

/// Exact `μ_3`: three atoms plus `ρ` sampled on `grid_count` nodes of `[λ₋, λ₊]`.
///
/// Nodal values are cell averages of `ρ` computed in the variable
/// `x = λ₋ + (λ₊ - λ₋)(1 - cos θ)/2`, which removes the inverse square-root
/// edges that appear when `λ₋ = λ_mid` or `λ₊ = λ_max`.
pub fn solve_three_layer(params: &ThreeLayerParams, grid_count: usize) -> Result<SpectralMeasure> {
    params.validate()?;
    let (a1, a2) = (params.alpha1, params.alpha2);
    let atoms = vec![
        (params.lambda_min(), 1.0 - a2),
        (params.lambda_mid(), (a2 - a1).max(0.0)),
        (params.lambda_max(), (a1 + a2 - 1.0).max(0.0)),
    ];
    let atom_mass: f64 = atoms.iter().map(|a| a.1).sum();
    let (lm, lp) = params.lambda_pm();
    if 1.0 - atom_mass < 1e-12 || lp - lm <= 1e-14 * lp {
        return SpectralMeasure::from_atoms(atoms);
    }

    let half = 0.5 * (lp - lm);
    let theta_of = |x: f64| (1.0 - (x.clamp(lm, lp) - lm) / half).clamp(-1.0, 1.0).acos();
    let rule = GaussRule::legendre(CELL_RULE_POINTS);
    let interval_mass = |a: f64, b: f64| {
        rule.integrate(theta_of(a), theta_of(b), |t| {
            params.density(lm + half * (1.0 - t.cos())) * half * t.sin()
        })
    };
    let density = GridDensity::from_interval_mass(lm, lp, grid_count, interval_mass)?;
    let cont = density.mass();
    let expected = 1.0 - atom_mass;
    if (cont - expected).abs() > 1e-6 {
        log::warn!("three-layer density mass {cont} differs from {expected}");
    }
    SpectralMeasure::new(atoms, Some(density))
}
