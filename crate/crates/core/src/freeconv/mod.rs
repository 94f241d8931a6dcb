//! Free multiplicative convolution with two-atom laws and the layer recursion
//! for the spectrum of `H_ℓ`.

mod asymptotics;
mod subordination;
mod three_layer;

pub use asymptotics::{
    asymptotic_max, asymptotic_mean, di_conditions, io_jacobian_stransform, max_support_track,
    mean_track, theta_mean_limit, AsymptoticRegime, AtomTrack,
};
pub use subordination::{free_mult_conv_two_atom, ConvGrid, SolverStats};
pub use three_layer::{solve_three_layer, ThreeLayerParams};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specmeasure::{affine_pushforward, SpectralMeasure};

/// `ν = (1 - α) δ_0 + α δ_γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoAtomJacobianLaw {
    alpha: f64,
    gamma: f64,
}

impl TwoAtomJacobianLaw {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!("alpha = {alpha} outside (0, 1]")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma = {gamma} must be positive")));
        }
        Ok(TwoAtomJacobianLaw { alpha, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mean(&self) -> f64 {
        self.alpha * self.gamma
    }

    pub fn to_measure(&self) -> SpectralMeasure {
        SpectralMeasure::from_atoms(vec![(0.0, 1.0 - self.alpha), (self.gamma, self.alpha)])
            .expect("two-atom law has unit mass")
    }
}

/// `q_ℓ` for ℓ = 0..L-1, `σ_ℓ` for ℓ = 1..L and `ν_ℓ` for ℓ = 1..L-1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSchedule {
    q: Vec<f64>,
    sigma: Vec<f64>,
    laws: Vec<TwoAtomJacobianLaw>,
}

impl LayerSchedule {
    pub fn new(q: Vec<f64>, sigma: Vec<f64>, laws: Vec<TwoAtomJacobianLaw>) -> Result<Self> {
        let depth = q.len();
        if depth == 0 {
            return Err(Error::invalid("schedule needs depth L >= 1"));
        }
        if sigma.len() != depth || laws.len() + 1 != depth {
            return Err(Error::Dimension(format!(
                "depth {depth} needs {depth} sigmas and {} laws, got {} and {}",
                depth - 1,
                sigma.len(),
                laws.len()
            )));
        }
        if let Some(bad) = q.iter().chain(&sigma).find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("schedule entry {bad} must be positive")));
        }
        Ok(LayerSchedule { q, sigma, laws })
    }

    /// Same `q`, `σ` and `ν` at every layer.
    pub fn constant(depth: usize, q: f64, sigma: f64, alpha: f64, gamma: f64) -> Result<Self> {
        let law = TwoAtomJacobianLaw::new(alpha, gamma)?;
        LayerSchedule::new(
            vec![q; depth],
            vec![sigma; depth],
            vec![law; depth.saturating_sub(1)],
        )
    }

    /// Constant schedule with `L(1 - α) = ε₁` and `-L log σ²γ = ε₂`, taking σ = 1.
    pub fn tuned(depth: usize, q: f64, eps1: f64, eps2: f64) -> Result<Self> {
        let l = depth as f64;
        LayerSchedule::constant(depth, q, 1.0, 1.0 - eps1 / l, (-eps2 / l).exp())
    }

    pub fn depth(&self) -> usize {
        self.q.len()
    }

    /// `q_ℓ`, ℓ = 0..L-1.
    pub fn q(&self, l: usize) -> f64 {
        self.q[l]
    }

    /// `σ_ℓ`, ℓ = 1..L.
    pub fn sigma(&self, l: usize) -> f64 {
        self.sigma[l - 1]
    }

    /// `ν_ℓ`, ℓ = 1..L-1.
    pub fn law(&self, l: usize) -> TwoAtomJacobianLaw {
        self.laws[l - 1]
    }
}

/// `S_ν(z) = (z + 1) / (γ (z + α))`.
pub fn s_transform_two_atom(nu: TwoAtomJacobianLaw, z: Complex64) -> Result<Complex64> {
    let denom = z + nu.alpha;
    if denom.norm() < 1e-300 || z.norm() == 0.0 {
        return Err(Error::Pole {
            what: "S-transform",
            at: format!("{z}"),
        });
    }
    Ok((z + 1.0) / (denom * nu.gamma))
}

/// Weight of the atom `ab` of `μ ⊠ ν` from atoms `μ({a}) = wa`, `ν({b}) = wb`, `ab ≠ 0`.
pub fn atom_rule(wa: f64, wb: f64) -> f64 {
    (wa + wb - 1.0).max(0.0)
}

/// `(q + σ² ·)_* (ν ⊠ μ)`.
pub fn propagate_layer(
    mu: &SpectralMeasure,
    nu: TwoAtomJacobianLaw,
    sigma_next: f64,
    q: f64,
    grid: &ConvGrid,
) -> Result<(SpectralMeasure, SolverStats)> {
    let (conv, stats) = free_mult_conv_two_atom(mu, nu, grid)?;
    Ok((affine_pushforward(&conv, sigma_next * sigma_next, q)?, stats))
}

/// `μ_1 = δ_{q_0}, …, μ_L`, with solver statistics for each step.
pub fn propagate_schedule(
    schedule: &LayerSchedule,
    grid: &ConvGrid,
) -> Result<(Vec<SpectralMeasure>, Vec<SolverStats>)> {
    let mut measures = vec![SpectralMeasure::delta(schedule.q(0))];
    let mut stats = Vec::new();
    for l in 1..schedule.depth() {
        let (next, st) = propagate_layer(
            &measures[l - 1],
            schedule.law(l),
            schedule.sigma(l + 1),
            schedule.q(l),
            grid,
        )?;
        log::debug!("layer {}: {} atoms, {:?}", l + 1, next.atoms().len(), st);
        measures.push(next);
        stats.push(st);
    }
    Ok((measures, stats))
}
