//! Mean-field scalars `(q_ℓ, α_ℓ, γ_ℓ)` for piecewise-linear activations.
//!
//! Preactivations are treated as centered Gaussians of variance `σ² q`. All
//! activations here are piecewise linear, so the Gaussian moments have closed
//! forms; a Gauss–Hermite version is kept for cross-checking.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freeconv::{di_conditions, LayerSchedule, TwoAtomJacobianLaw};
use crate::quadrature::GaussRule;

/// Default Gauss–Hermite node count.
pub const HERMITE_NODES: usize = 64;
const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITER: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationSpec {
    /// `g x` if `s g |x| < 1`, else `g sgn(x)`.
    HardTanh { s: f64, g: f64 },
    /// `a x` if `x > b`, else `a b`.
    ShiftedRelu { a: f64, b: f64 },
    Linear { g: f64 },
}

impl ActivationSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ActivationSpec::HardTanh { s, g } => s > 0.0 && g > 0.0 && s.is_finite() && g.is_finite(),
            ActivationSpec::ShiftedRelu { a, b } => a > 0.0 && b >= 0.0 && a.is_finite() && b.is_finite(),
            ActivationSpec::Linear { g } => g > 0.0 && g.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("activation parameters out of range: {self:?}")))
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ActivationSpec::HardTanh { s, g } => {
                if s * g * x.abs() < 1.0 {
                    g * x
                } else {
                    g * x.signum()
                }
            }
            ActivationSpec::ShiftedRelu { a, b } => {
                if x > b {
                    a * x
                } else {
                    a * b
                }
            }
            ActivationSpec::Linear { g } => g * x,
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            ActivationSpec::HardTanh { s, g } => {
                if s * g * x.abs() < 1.0 {
                    g
                } else {
                    0.0
                }
            }
            ActivationSpec::ShiftedRelu { a, b } => {
                if x > b {
                    a
                } else {
                    0.0
                }
            }
            ActivationSpec::Linear { g } => g,
        }
    }

    pub fn deriv_sq(&self, x: f64) -> f64 {
        self.deriv(x).powi(2)
    }
}

/// Per-layer scalars driving the theory and the simulations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldParams {
    pub q: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub sigma: f64,
}

fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t * FRAC_1_SQRT_2)
}

fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

fn check_q(sigma: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q.is_finite() && sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("need q > 0 and sigma > 0, got q = {q}, sigma = {sigma}")));
    }
    Ok(sigma * sigma * q)
}

/// `E[φ(h)²]`, `h ~ N(0, σ² q_in)`.
pub fn q_forward(spec: &ActivationSpec, sigma: f64, q_in: f64) -> Result<f64> {
    spec.validate()?;
    let v = check_q(sigma, q_in)?;
    let sd = v.sqrt();
    let out = match *spec {
        ActivationSpec::Linear { g } => g * g * v,
        ActivationSpec::HardTanh { s, g } => {
            let t = 1.0 / (s * g * sd);
            let inside = v * (libm::erf(t * FRAC_1_SQRT_2) - 2.0 * t * normal_pdf(t));
            g * g * (inside + libm::erfc(t * FRAC_1_SQRT_2))
        }
        ActivationSpec::ShiftedRelu { a, b } => {
            let t = b / sd;
            let above = v * ((1.0 - normal_cdf(t)) + t * normal_pdf(t));
            a * a * (above + b * b * normal_cdf(t))
        }
    };
    finite(out, "q_forward")
}

fn hermite() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| GaussRule::hermite_probabilists(HERMITE_NODES))
}

/// [`q_forward`] by Gauss–Hermite quadrature with `HERMITE_NODES` nodes.
pub fn q_forward_quadrature(spec: &ActivationSpec, sigma: f64, q_in: f64) -> Result<f64> {
    spec.validate()?;
    let sd = check_q(sigma, q_in)?.sqrt();
    finite(hermite().sum(|z| spec.apply(sd * z).powi(2)), "q_forward")
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what: what.into(),
            location: "Gaussian expectation".into(),
        })
    }
}

/// Result of iterating `q ← q_forward(q)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub q: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn q_fixed_point(spec: &ActivationSpec, sigma: f64, q0: f64) -> Result<FixedPoint> {
    let mut q = q0;
    for it in 1..=FIXED_POINT_MAX_ITER {
        if !(1e-150..=1e150).contains(&q) {
            log::debug!("q iteration for {spec:?} escaped to {q} after {it} steps");
            return Ok(FixedPoint {
                q,
                iterations: it,
                converged: false,
            });
        }
        let next = q_forward(spec, sigma, q)?;
        let dq = (next - q).abs();
        q = next;
        if dq < FIXED_POINT_TOL {
            return Ok(FixedPoint {
                q,
                iterations: it,
                converged: true,
            });
        }
    }
    log::debug!("q fixed point did not converge for {spec:?}, last q = {q}");
    Ok(FixedPoint {
        q,
        iterations: FIXED_POINT_MAX_ITER,
        converged: false,
    })
}

/// `(α, γ)` of the law of `φ'(h)²`, `h ~ N(0, σ² q)`.
pub fn jacobian_stats(spec: &ActivationSpec, sigma: f64, q: f64) -> Result<(f64, f64)> {
    spec.validate()?;
    let sd = check_q(sigma, q)?.sqrt();
    Ok(match *spec {
        ActivationSpec::Linear { g } => (1.0, g * g),
        ActivationSpec::HardTanh { s, g } => (libm::erf(1.0 / (s * g * sd) * FRAC_1_SQRT_2), g * g),
        ActivationSpec::ShiftedRelu { a, b } => (1.0 - normal_cdf(b / sd), a * a),
    })
}

/// Parameters at input norm `q`: `(α, γ)` from the preactivation variance and
/// `q` itself.
pub fn mean_field_params(spec: &ActivationSpec, sigma: f64, q: f64) -> Result<MeanFieldParams> {
    let (alpha, gamma) = jacobian_stats(spec, sigma, q)?;
    Ok(MeanFieldParams { q, alpha, gamma, sigma })
}

/// Layer schedule of a network with constant `σ` fed inputs of norm `q0`:
/// `q_ℓ = q_forward(q_{ℓ-1})` and `ν_ℓ` from `jacobian_stats(σ, q_{ℓ-1})`.
pub fn schedule_from_activation(spec: &ActivationSpec, sigma: f64, q0: f64, depth: usize) -> Result<LayerSchedule> {
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    let mut q = vec![q0];
    let mut laws = Vec::with_capacity(depth - 1);
    for l in 1..depth {
        let (alpha, gamma) = jacobian_stats(spec, sigma, q[l - 1])?;
        if alpha <= 0.0 {
            return Err(Error::invalid(format!("layer {l} is fully saturated (alpha = 0)")));
        }
        laws.push(TwoAtomJacobianLaw::new(alpha.min(1.0), gamma)?);
        q.push(q_forward(spec, sigma, q[l - 1])?);
    }
    LayerSchedule::new(q, vec![sigma; depth], laws)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiCriterion {
    /// `σ² γ = 1`
    Sg2,
    /// `σ² γ α = 1`
    Sg2a,
}

impl std::str::FromStr for DiCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sg2" => Ok(DiCriterion::Sg2),
            "sg2a" => Ok(DiCriterion::Sg2a),
            other => Err(Error::invalid(format!("unknown criterion {other:?}, expected sg2 or sg2a"))),
        }
    }
}

/// Activation family with a free gain `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TuneFamily {
    HardTanh { s: f64 },
    Linear,
}

impl TuneFamily {
    fn with_gain(&self, g: f64) -> ActivationSpec {
        match *self {
            TuneFamily::HardTanh { s } => ActivationSpec::HardTanh { s, g },
            TuneFamily::Linear => ActivationSpec::Linear { g },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub spec: ActivationSpec,
    pub params: MeanFieldParams,
    pub criterion: DiCriterion,
    /// `σ²γ` or `σ²γα` at the returned parameters.
    pub criterion_value: f64,
    pub fixed_point_converged: bool,
    pub reference_depth: usize,
    pub eps1: f64,
    pub eps2: f64,
}

/// Finds the gain `g` such that the chosen criterion equals one at the
/// self-consistent `q*` reached from `q0`.
pub fn tune_di(
    family: TuneFamily,
    sigma: f64,
    criterion: DiCriterion,
    q0: f64,
    reference_depth: usize,
) -> Result<TuneResult> {
    if let TuneFamily::HardTanh { s } = family {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!("s = {s} must be positive")));
        }
    }
    check_q(sigma, q0)?;
    let evaluate = |g: f64| -> Result<(f64, FixedPoint, f64, f64)> {
        let spec = family.with_gain(g);
        let fp = q_fixed_point(&spec, sigma, q0)?;
        let (alpha, gamma) = jacobian_stats(&spec, sigma, fp.q.max(f64::MIN_POSITIVE))?;
        let value = match criterion {
            DiCriterion::Sg2 => sigma * sigma * gamma,
            DiCriterion::Sg2a => sigma * sigma * gamma * alpha,
        };
        Ok((value - 1.0, fp, alpha, gamma))
    };

    let (mut lo, mut hi) = (0.5 / sigma, 4.0 / sigma);
    let mut f_lo = evaluate(lo)?.0;
    let mut f_hi = evaluate(hi)?.0;
    if f_lo.signum() == f_hi.signum() {
        (lo, hi) = (1e-3 / sigma, 1e3 / sigma);
        f_lo = evaluate(lo)?.0;
        f_hi = evaluate(hi)?.0;
        if f_lo.signum() == f_hi.signum() {
            return Err(Error::Bracket { lo, hi });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = evaluate(mid)?.0;
        if f_mid == 0.0 {
            (lo, hi) = (mid, mid);
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            (lo, f_lo) = (mid, f_mid);
        } else {
            hi = mid;
        }
    }
    let g = if evaluate(lo)?.0.abs() <= evaluate(hi)?.0.abs() { lo } else { hi };
    let (resid, fp, alpha, gamma) = evaluate(g)?;
    let (eps1, eps2) = di_conditions(alpha.min(1.0), sigma, gamma, reference_depth);
    Ok(TuneResult {
        spec: family.with_gain(g),
        params: MeanFieldParams {
            q: fp.q,
            alpha,
            gamma,
            sigma,
        },
        criterion,
        criterion_value: resid + 1.0,
        fixed_point_converged: fp.converged,
        reference_depth,
        eps1,
        eps2,
    })
}
