//! Numerical `μ ⊠ ν` for a two-atom `ν` by subordination.
//!
//! With `ν̃ = (1 - α) δ_0 + α δ_1` the equation `w = h_μ(z S_ν̃(w))` is
//! equivalent to finding `ω` in the upper half-plane with
//!
//! ```text
//! ω = z + (1 - α) / G_μ(ω),        G_{μ⊠ν̃}(z) = ω G_μ(ω) / z.
//! ```
//!
//! The right-hand side maps the half-plane strictly into itself, so the root
//! is unique there. `ν = (γ ·)_* ν̃` only rescales the result.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{atom_rule, TwoAtomJacobianLaw};
use crate::error::{Error, Result};
use std::f64::consts::PI;

use crate::specmeasure::{
    affine_pushforward, GridDensity, SpectralMeasure, DEFAULT_GRID_COUNT, MIN_GRID_COUNT,
};

/// Resolution and iteration controls of the convolution solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvGrid {
    /// Density nodes on the output support hull.
    pub grid_count: usize,
    /// Strip height as a fraction of the hull width.
    pub eps_rel: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Weight of the new iterate in the damped fixed point.
    pub damping: f64,
}

impl Default for ConvGrid {
    fn default() -> Self {
        ConvGrid {
            grid_count: DEFAULT_GRID_COUNT,
            eps_rel: 1e-4,
            max_iter: 10_000,
            tol: 1e-12,
            damping: 0.5,
        }
    }
}

impl ConvGrid {
    pub fn with_grid_count(grid_count: usize) -> Self {
        ConvGrid {
            grid_count,
            ..ConvGrid::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    /// Most iterations spent at a single abscissa.
    pub max_iterations: usize,
    /// Abscissae where no root was found; filled by interpolation.
    pub flagged: usize,
    /// Abscissae where the warm-started Newton solve had to be replaced.
    pub newton_fallbacks: usize,
    /// `|inverted continuous mass - expected continuous mass|` before renormalizing.
    pub mass_defect: f64,
    /// Largest negative density clamped to zero.
    pub max_negative: f64,
}

impl SolverStats {
    pub fn merge(&mut self, other: &SolverStats) {
        self.max_iterations = self.max_iterations.max(other.max_iterations);
        self.flagged += other.flagged;
        self.newton_fallbacks += other.newton_fallbacks;
        self.mass_defect = self.mass_defect.max(other.mass_defect);
        self.max_negative = self.max_negative.max(other.max_negative);
    }
}

struct Subordination<'a> {
    mu: &'a SpectralMeasure,
    /// `1 - α`
    c: f64,
    grid: ConvGrid,
}

const NEWTON_MAX: usize = 60;
const HOMOTOPY_STEPS: usize = 24;
/// Extra sampling beyond the support hull, as a fraction of its width.
const HULL_MARGIN: f64 = 0.05;
/// Lower bound on the strip height in grid spacings.
const EPS_FLOOR_SPACINGS: f64 = 0.5;

impl Subordination<'_> {
    fn residual(&self, z: Complex64, w: Complex64) -> (Complex64, Complex64) {
        let (g, dg) = self.mu.cauchy_with_derivative(w);
        let f = w - z - self.c / g;
        let df = 1.0 + self.c * dg / (g * g);
        (f, df)
    }

    fn converged(&self, step: f64, w: Complex64) -> bool {
        step <= self.grid.tol * (1.0 + w.norm())
    }

    fn newton(&self, z: Complex64, start: Complex64) -> Option<(Complex64, usize)> {
        let mut w = start;
        for it in 1..=NEWTON_MAX {
            let (f, df) = self.residual(z, w);
            let step = f / df;
            if !(step.re.is_finite() && step.im.is_finite()) {
                return None;
            }
            // backtrack to stay in the half-plane where the root lives
            let mut t = 1.0;
            let mut cand = w - step;
            while cand.im <= 0.5 * z.im {
                t *= 0.5;
                if t < 1e-8 {
                    return None;
                }
                cand = w - step * t;
            }
            w = cand;
            if self.converged(t * step.norm(), w) {
                return (w.im >= z.im * (1.0 - 1e-9)).then_some((w, it));
            }
        }
        None
    }

    fn fixed_point(&self, z: Complex64, start: Complex64) -> Option<(Complex64, usize)> {
        let theta = self.grid.damping;
        let mut w = start;
        for it in 1..=self.grid.max_iter {
            let g = self.mu.cauchy_unchecked(w);
            let next = w * (1.0 - theta) + (z + self.c / g) * theta;
            if !(next.re.is_finite() && next.im.is_finite()) {
                return None;
            }
            let step = (next - w).norm();
            w = next;
            if self.converged(step, w) {
                return Some((w, it));
            }
        }
        None
    }

    /// Solves from far above the real axis down to `z`.
    fn homotopy(&self, z: Complex64, scale: f64) -> Option<(Complex64, usize)> {
        let top = 10.0 * (scale + z.re.abs());
        let alpha = 1.0 - self.c;
        let mut w = Complex64::new(z.re, top) / alpha;
        let mut total = 0;
        for k in 0..=HOMOTOPY_STEPS {
            let y = top * (z.im / top).powf(k as f64 / HOMOTOPY_STEPS as f64);
            let zk = Complex64::new(z.re, y);
            let (next, it) = self.newton(zk, w).or_else(|| self.fixed_point(zk, w))?;
            w = next;
            total += it;
        }
        Some((w, total))
    }
}

/// `μ ⊠ ν` for `ν = (1 - α) δ_0 + α δ_γ` and `μ` supported in `[0, ∞)`.
///
/// Atoms follow the atom rule; the continuous part is recovered by Stieltjes
/// inversion over `γ [min supp μ, ‖μ‖∞]`, which contains it.
pub fn free_mult_conv_two_atom(
    mu: &SpectralMeasure,
    nu: TwoAtomJacobianLaw,
    grid: &ConvGrid,
) -> Result<(SpectralMeasure, SolverStats)> {
    let lo = mu.support_min();
    let hi = mu.support_max();
    if lo < -1e-12 {
        return Err(Error::InvalidMeasure(format!(
            "free multiplicative convolution needs nonnegative support, found {lo}"
        )));
    }
    let (alpha, gamma) = (nu.alpha(), nu.gamma());
    let mut stats = SolverStats::default();
    if alpha == 1.0 {
        return Ok((affine_pushforward(mu, gamma, 0.0)?, stats));
    }

    let zero_weight = mu.atom_weight_at(0.0, 0.0).max(1.0 - alpha);
    let mut atoms = vec![(0.0, zero_weight)];
    atoms.extend(
        mu.atoms()
            .iter()
            .filter(|a| a.0 != 0.0)
            .map(|&(a, w)| (a, atom_rule(w, alpha)))
            .filter(|a| a.1 > 1e-12),
    );
    let atom_mass: f64 = atoms.iter().map(|a| a.1).sum();
    let target = 1.0 - atom_mass;

    let width = hi - lo;
    if target <= 1e-10 || width <= 0.0 {
        let conv = SpectralMeasure::from_atoms(atoms)?;
        return Ok((affine_pushforward(&conv, gamma, 0.0)?, stats));
    }

    let solver = Subordination {
        mu,
        c: 1.0 - alpha,
        grid: *grid,
    };
    let n = grid.grid_count;
    if n < MIN_GRID_COUNT {
        return Err(Error::invalid(format!("grid_count {n} < {MIN_GRID_COUNT}")));
    }
    let h = width / (n - 1) as f64;
    let eps = (grid.eps_rel * width).max(EPS_FLOOR_SPACINGS * h);
    // smeared mass landing in the margin is folded back onto the hull edges
    let ext = ((HULL_MARGIN * (n - 1) as f64).ceil() as usize).max(1);
    let total = n + 2 * ext;
    let x0 = lo - ext as f64 * h;

    let mut sub_g = vec![None; total];
    let mut warm: Option<Complex64> = None;
    for j in (0..total).rev() {
        let z = Complex64::new(x0 + j as f64 * h, eps);
        let mut found = warm.and_then(|w| solver.newton(z, w));
        if found.is_none() {
            if warm.is_some() {
                stats.newton_fallbacks += 1;
            }
            found = solver
                .homotopy(z, width.max(hi))
                .or_else(|| warm.and_then(|w| solver.fixed_point(z, w)));
        }
        match found {
            Some((w, it)) => {
                stats.max_iterations = stats.max_iterations.max(it);
                warm = Some(w);
                let g = w * mu.cauchy_unchecked(w) / z;
                let poles: Complex64 = atoms.iter().map(|&(a, wt)| wt / (z - a)).sum();
                sub_g[j] = Some(g - poles);
            }
            None => {
                stats.flagged += 1;
                warm = None;
            }
        }
    }
    if stats.flagged * 100 > total {
        return Err(Error::NoConvergence {
            what: format!("subordination at {} of {total} abscissae", stats.flagged),
            iterations: grid.max_iter,
        });
    }

    let mut rho = Vec::with_capacity(total);
    for (j, g) in fill_flagged(&sub_g)?.into_iter().enumerate() {
        if !(g.re.is_finite() && g.im.is_finite()) {
            return Err(Error::NonFinite {
                what: "Cauchy transform".into(),
                location: format!("x = {}", x0 + j as f64 * h),
            });
        }
        let r = -g.im / PI;
        if r < 0.0 {
            stats.max_negative = stats.max_negative.max(-r);
        }
        rho.push(r.max(0.0));
    }
    let cells = |a: usize, b: usize| -> f64 { (a..b).map(|i| 0.5 * h * (rho[i] + rho[i + 1])).sum() };
    let left_out = cells(0, ext);
    let right_out = cells(ext + n - 1, total - 1);
    let mut values = rho[ext..ext + n].to_vec();
    values[0] += 2.0 * left_out / h;
    values[n - 1] += 2.0 * right_out / h;
    let density = GridDensity::new(lo, hi, values)?;

    let raw = density.mass();
    stats.mass_defect = (raw - target).abs();
    if raw <= 0.0 {
        return Err(Error::NoConvergence {
            what: "continuous part of the free convolution vanished".into(),
            iterations: stats.max_iterations,
        });
    }
    let density = density.scaled(target / raw);
    let conv = SpectralMeasure::new(atoms, Some(density))?;
    Ok((affine_pushforward(&conv, gamma, 0.0)?, stats))
}

/// Linear interpolation over missing entries; edges copy the nearest value.
fn fill_flagged(values: &[Option<Complex64>]) -> Result<Vec<Complex64>> {
    if values.iter().all(Option::is_none) {
        return Err(Error::NoConvergence {
            what: "subordination at every abscissa".into(),
            iterations: 0,
        });
    }
    let out = (0..values.len())
        .map(|j| {
            if let Some(v) = values[j] {
                return v;
            }
            let prev = (0..j).rev().find_map(|i| values[i].map(|v| (i, v)));
            let next = (j + 1..values.len()).find_map(|i| values[i].map(|v| (i, v)));
            match (prev, next) {
                (Some((a, va)), Some((b, vb))) => {
                    let t = (j - a) as f64 / (b - a) as f64;
                    va * (1.0 - t) + vb * t
                }
                (Some((_, v)), None) | (None, Some((_, v))) => v,
                (None, None) => unreachable!(),
            }
        })
        .collect();
    Ok(out)
}
