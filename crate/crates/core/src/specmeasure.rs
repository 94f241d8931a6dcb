//! Compactly supported probability measures on the real line.
//!
//! A [`SpectralMeasure`] is a finite set of atoms plus an optional density
//! sampled on a uniform grid. Between grid nodes the density is linear, so the
//! trapezoid rule integrates it exactly; the Cauchy transform integrates the
//! same piecewise-linear interpolant in closed form, which keeps it accurate
//! arbitrarily close to the real axis.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of density grid nodes.
pub const DEFAULT_GRID_COUNT: usize = 2048;
/// Smallest accepted density grid.
pub const MIN_GRID_COUNT: usize = 64;
/// Tolerance on total mass for every constructed measure.
pub const MASS_TOLERANCE: f64 = 1e-6;
/// Extrapolated atom weights below this are reported as "no atom".
pub const ATOM_DETECTION_THRESHOLD: f64 = 1e-3;
/// Atoms lighter than this are dropped on construction.
const ATOM_DROP: f64 = 1e-14;

/// A point of the open upper half-plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexPoint(Complex64);

impl ComplexPoint {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !(im > 0.0) || !re.is_finite() || !im.is_finite() {
            return Err(Error::invalid(format!(
                "evaluation point {re}+{im}i is not in the open upper half-plane"
            )));
        }
        Ok(ComplexPoint(Complex64::new(re, im)))
    }

    pub fn value(self) -> Complex64 {
        self.0
    }
}

/// Nonnegative density sampled at `values.len()` equally spaced nodes on
/// `[left, right]`, linear in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    left: f64,
    right: f64,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(left: f64, right: f64, values: Vec<f64>) -> Result<Self> {
        if !(left.is_finite() && right.is_finite() && left < right) {
            return Err(Error::InvalidMeasure(format!(
                "density window [{left}, {right}] is empty or non-finite"
            )));
        }
        if values.len() < MIN_GRID_COUNT {
            return Err(Error::InvalidMeasure(format!(
                "density grid has {} nodes, need at least {MIN_GRID_COUNT}",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidMeasure(format!(
                "density value {v} at node {i} is negative or non-finite"
            )));
        }
        Ok(GridDensity {
            left,
            right,
            values,
        })
    }

    /// Builds node values whose trapezoid weights reproduce the exact mass of
    /// each dual cell, `interval_mass(a, b)` being the mass of `[a, b]`.
    ///
    /// This keeps integrable endpoint singularities (arcsine-type edges)
    /// mass-exact on the grid.
    pub fn from_interval_mass<F>(left: f64, right: f64, grid_count: usize, interval_mass: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64,
    {
        if grid_count < MIN_GRID_COUNT {
            return Err(Error::invalid(format!("grid_count {grid_count} < {MIN_GRID_COUNT}")));
        }
        let h = (right - left) / (grid_count - 1) as f64;
        let last = grid_count - 1;
        let mut values = Vec::with_capacity(grid_count);
        for j in 0..grid_count {
            let x = left + j as f64 * h;
            let (a, b) = match j {
                0 => (left, left + 0.5 * h),
                _ if j == last => (right - 0.5 * h, right),
                _ => (x - 0.5 * h, x + 0.5 * h),
            };
            let mass = interval_mass(a, b);
            if !mass.is_finite() {
                return Err(Error::NonFinite {
                    what: "interval mass".into(),
                    location: format!("[{a}, {b}]"),
                });
            }
            let width = if j == 0 || j == last { 0.5 * h } else { h };
            values.push((mass / width).max(0.0));
        }
        GridDensity::new(left, right, values)
    }

    /// Piecewise-linear density whose mass over each bin
    /// `[(first_bin + i) * bin_width, (first_bin + i + 1) * bin_width]` equals `masses[i]`.
    ///
    /// Every bin gets `sub` grid cells. Bin-boundary nodes take the smaller of
    /// the two adjacent heights and interior nodes absorb the remainder, which
    /// keeps all values nonnegative.
    pub fn from_bin_masses(first_bin: i64, bin_width: f64, masses: &[f64], sub: usize) -> Result<Self> {
        if masses.is_empty() || sub < 2 {
            return Err(Error::invalid("histogram needs at least one bin and two cells per bin"));
        }
        let heights: Vec<f64> = masses.iter().map(|m| m / bin_width).collect();
        let nb = heights.len();
        let mut values = vec![0.0; nb * sub + 1];
        for b in 0..=nb {
            let lh = if b == 0 { 0.0 } else { heights[b - 1] };
            let rh = if b == nb { 0.0 } else { heights[b] };
            values[b * sub] = lh.min(rh);
        }
        for (b, &hgt) in heights.iter().enumerate() {
            let edge = 0.5 * (values[b * sub] + values[(b + 1) * sub]);
            let interior = (sub as f64 * hgt - edge) / (sub - 1) as f64;
            for k in 1..sub {
                values[b * sub + k] = interior;
            }
        }
        let left = first_bin as f64 * bin_width;
        let right = (first_bin + nb as i64) as f64 * bin_width;
        GridDensity::new(left, right, values)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid_count(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        (self.right - self.left) / (self.values.len() - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.left + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.values.len()).map(move |j| self.left + j as f64 * h)
    }

    /// Trapezoid-rule mass.
    pub fn mass(&self) -> f64 {
        self.trapezoid(|_| 1.0)
    }

    /// Exact mass of the interpolant over `[a, b]`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(self.left), b.min(self.right));
        if !(b > a) {
            return 0.0;
        }
        let h = self.spacing();
        let first = (((a - self.left) / h).floor() as usize).min(self.values.len() - 2);
        let last = (((b - self.left) / h).ceil() as usize).min(self.values.len() - 1);
        (first..last)
            .map(|j| {
                let t0 = self.left + j as f64 * h;
                let (lo, hi) = (a.max(t0), b.min(t0 + h));
                if hi <= lo {
                    return 0.0;
                }
                let line = |x: f64| self.values[j] + (self.values[j + 1] - self.values[j]) * (x - t0) / h;
                0.5 * (hi - lo) * (line(lo) + line(hi))
            })
            .sum()
    }

    /// Trapezoid rule for `∫ f(x) ρ(x) dx`.
    pub fn trapezoid<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let h = self.spacing();
        let n = self.values.len();
        let inner: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                w * v * f(self.left + j as f64 * h)
            })
            .sum();
        inner * h
    }

    /// Linear interpolation; zero outside the window.
    pub fn value_at(&self, x: f64) -> f64 {
        if x < self.left || x > self.right {
            return 0.0;
        }
        let h = self.spacing();
        let pos = (x - self.left) / h;
        let j = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - j as f64;
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }

    /// Smallest interval carrying all of the density's mass.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.values.iter().position(|&v| v > 0.0)?;
        let last = self.values.iter().rposition(|&v| v > 0.0)?;
        let lo = first.saturating_sub(1);
        let hi = (last + 1).min(self.values.len() - 1);
        Some((self.node(lo), self.node(hi)))
    }

    pub(crate) fn scaled(&self, factor: f64) -> GridDensity {
        GridDensity {
            left: self.left,
            right: self.right,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Cauchy transform of the piecewise-linear interpolant and its derivative.
    ///
    /// On each cell `ρ(t) = ρ_lin(u) - s (u - t)` with `ρ_lin` the cell's line
    /// continued to `u`, so the cell contributes
    /// `ρ_lin(u) [log(u - t_k) - log(u - t_{k+1})] - s h`.
    pub fn cauchy_with_derivative(&self, u: Complex64) -> (Complex64, Complex64) {
        let h = self.spacing();
        let n = self.values.len();
        let mut g = Complex64::new(0.0, 0.0);
        let mut dg = Complex64::new(0.0, 0.0);
        let mut r_prev = (u - self.left).inv();
        for k in 0..n - 1 {
            let t_next = self.left + (k + 1) as f64 * h;
            let r_next = (u - t_next).inv();
            let dlog = log1p_complex(r_next * h);
            let slope = (self.values[k + 1] - self.values[k]) / h;
            let t_k = self.left + k as f64 * h;
            let line = self.values[k] + (u - t_k) * slope;
            g += line * dlog;
            dg += dlog * slope + line * (r_prev - r_next);
            r_prev = r_next;
        }
        g -= self.values[n - 1] - self.values[0];
        (g, dg)
    }
}

/// `ln(1 + w)` without cancellation for small `|w|`.
fn log1p_complex(w: Complex64) -> Complex64 {
    let re = 0.5 * (2.0 * w.re + w.norm_sqr()).ln_1p();
    let im = w.im.atan2(1.0 + w.re);
    Complex64::new(re, im)
}

#[derive(Deserialize)]
struct RawMeasure {
    atoms: Vec<(f64, f64)>,
    #[serde(default)]
    density: Option<GridDensity>,
}

impl TryFrom<RawMeasure> for SpectralMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        let density = match raw.density {
            Some(d) => Some(GridDensity::new(d.left, d.right, d.values)?),
            None => None,
        };
        SpectralMeasure::new(raw.atoms, density)
    }
}

/// Probability measure = atoms + optional gridded absolutely continuous part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct SpectralMeasure {
    atoms: Vec<(f64, f64)>,
    density: Option<GridDensity>,
    #[serde(skip)]
    support_max: f64,
}

impl SpectralMeasure {
    /// Validates and normalizes: atoms are sorted, coincident locations merged,
    /// negligible weights dropped, and the total mass checked against 1.
    pub fn new(mut atoms: Vec<(f64, f64)>, density: Option<GridDensity>) -> Result<Self> {
        for &(x, w) in &atoms {
            if !x.is_finite() || !w.is_finite() || !(0.0..=1.0 + MASS_TOLERANCE).contains(&w) {
                return Err(Error::InvalidMeasure(format!("bad atom ({x}, {w})")));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        merged.retain(|&(_, w)| w > ATOM_DROP);
        let density = density.filter(|d| d.mass() > 0.0);
        let mass = merged.iter().map(|a| a.1).sum::<f64>()
            + density.as_ref().map_or(0.0, GridDensity::mass);
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("total mass {mass} differs from 1")));
        }
        let mut support_max = f64::NEG_INFINITY;
        if let Some(&(x, _)) = merged.last() {
            support_max = x;
        }
        if let Some((_, hi)) = density.as_ref().and_then(GridDensity::support) {
            support_max = support_max.max(hi);
        }
        Ok(SpectralMeasure {
            atoms: merged,
            density,
            support_max,
        })
    }

    pub fn delta(x: f64) -> Self {
        SpectralMeasure {
            atoms: vec![(x, 1.0)],
            density: None,
            support_max: x,
        }
    }

    pub fn from_atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        SpectralMeasure::new(atoms, None)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&GridDensity> {
        self.density.as_ref()
    }

    /// `‖μ‖∞`: the right end of the support.
    pub fn support_max(&self) -> f64 {
        self.support_max
    }

    pub fn support_min(&self) -> f64 {
        let atom_min = self.atoms.first().map_or(f64::INFINITY, |a| a.0);
        let dens_min = self
            .density
            .as_ref()
            .and_then(GridDensity::support)
            .map_or(f64::INFINITY, |s| s.0);
        atom_min.min(dens_min)
    }

    pub fn total_mass(&self) -> f64 {
        self.atom_mass() + self.continuous_mass()
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn continuous_mass(&self) -> f64 {
        self.density.as_ref().map_or(0.0, GridDensity::mass)
    }

    /// `μ([a, b])`.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|x| x.0 >= a && x.0 <= b).map(|x| x.1).sum();
        atoms + self.density.as_ref().map_or(0.0, |d| d.mass_between(a, b))
    }

    /// Weight of the atom within `tol` of `x`, zero if there is none.
    pub fn atom_weight_at(&self, x: f64, tol: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| (a.0 - x).abs() <= tol)
            .map(|a| a.1)
            .sum()
    }

    pub fn largest_atom(&self) -> Option<(f64, f64)> {
        self.atoms.last().copied()
    }

    /// Cauchy transform without the upper-half-plane check; `u` must not lie
    /// on the support.
    pub fn cauchy_unchecked(&self, u: Complex64) -> Complex64 {
        self.cauchy_with_derivative(u).0
    }

    /// `(G(u), G'(u))`.
    pub fn cauchy_with_derivative(&self, u: Complex64) -> (Complex64, Complex64) {
        let mut g = Complex64::new(0.0, 0.0);
        let mut dg = Complex64::new(0.0, 0.0);
        for &(x, w) in &self.atoms {
            let r = (u - x).inv();
            g += r * w;
            dg -= r * r * w;
        }
        if let Some(d) = &self.density {
            let (gd, dgd) = d.cauchy_with_derivative(u);
            g += gd;
            dg += dgd;
        }
        (g, dg)
    }

    /// Sorted union of atom locations and density grid nodes, for CSV export.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(f64, f64, &str)> = self.atoms.iter().map(|&(x, w)| (x, w, "atom")).collect();
        if let Some(d) = &self.density {
            rows.extend(d.nodes().zip(d.values()).map(|(x, &v)| (x, v, "density")));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = String::from("x,weight_or_density,kind\n");
        for (x, v, kind) in rows {
            let _ = writeln!(out, "{x},{v},{kind}");
        }
        out
    }
}

/// Pushforward of `mu` under `x ↦ b + a x`.
pub fn affine_pushforward(mu: &SpectralMeasure, a: f64, b: f64) -> Result<SpectralMeasure> {
    if a == 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid(format!("degenerate pushforward x -> {b} + {a} x")));
    }
    let atoms = mu.atoms.iter().map(|&(x, w)| (b + a * x, w)).collect();
    let density = mu.density.as_ref().map(|d| {
        let mut values: Vec<f64> = d.values.iter().map(|v| v / a.abs()).collect();
        let (mut left, mut right) = (b + a * d.left, b + a * d.right);
        if a < 0.0 {
            values.reverse();
            std::mem::swap(&mut left, &mut right);
        }
        GridDensity { left, right, values }
    });
    SpectralMeasure::new(atoms, density)
}

/// `G_μ(z) = ∫ (z - t)^{-1} μ(dt)`; the density part is integrated exactly on
/// its piecewise-linear interpolant.
pub fn cauchy_transform(mu: &SpectralMeasure, z: ComplexPoint) -> Complex64 {
    mu.cauchy_unchecked(z.value())
}

/// Default inversion offset for a window of the given width.
pub fn default_inversion_eps(width: f64) -> f64 {
    (1e-4 * width).max(1e-6)
}

/// Diagnostics of one Stieltjes inversion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct InversionStats {
    /// Largest `-Im G / π` violation below zero that was clamped.
    pub max_negative: f64,
}

/// `ρ(x) = -Im G(x + iε) / π` on `grid_count` nodes of `window`, clamped at 0.
pub fn stieltjes_invert<G>(g: G, window: (f64, f64), grid_count: usize, eps: Option<f64>) -> Result<GridDensity>
where
    G: FnMut(Complex64) -> Complex64,
{
    stieltjes_invert_with_stats(g, window, grid_count, eps).map(|(d, _)| d)
}

pub fn stieltjes_invert_with_stats<G>(
    mut g: G,
    window: (f64, f64),
    grid_count: usize,
    eps: Option<f64>,
) -> Result<(GridDensity, InversionStats)>
where
    G: FnMut(Complex64) -> Complex64,
{
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::invalid(format!("empty inversion window [{lo}, {hi}]")));
    }
    if grid_count < MIN_GRID_COUNT {
        return Err(Error::invalid(format!("grid_count {grid_count} < {MIN_GRID_COUNT}")));
    }
    let eps = eps.unwrap_or_else(|| default_inversion_eps(hi - lo));
    if !(eps > 0.0) {
        return Err(Error::invalid("inversion offset must be positive"));
    }
    let h = (hi - lo) / (grid_count - 1) as f64;
    let mut stats = InversionStats::default();
    let mut values = Vec::with_capacity(grid_count);
    for j in 0..grid_count {
        let x = lo + j as f64 * h;
        let gz = g(Complex64::new(x, eps));
        if !(gz.re.is_finite() && gz.im.is_finite()) {
            return Err(Error::NonFinite {
                what: "Cauchy transform".into(),
                location: format!("x = {x}"),
            });
        }
        let rho = -gz.im / std::f64::consts::PI;
        if rho < 0.0 {
            stats.max_negative = stats.max_negative.max(-rho);
        }
        values.push(rho.max(0.0));
    }
    if stats.max_negative > 0.0 {
        log::debug!("stieltjes inversion clamped negative density down to -{}", stats.max_negative);
    }
    Ok((GridDensity::new(lo, hi, values)?, stats))
}

/// `eps_sequence` used by [`atom_weight_from_cauchy`] when the caller has no
/// preference: `scale · 10^{-2}, …, scale · 10^{-10}`.
pub fn default_atom_eps_sequence(scale: f64) -> Vec<f64> {
    (2..=10).map(|k| scale * 10f64.powi(-k)).collect()
}

/// Limit of `(z - c) G(z)` along `z = c + iy`, `y ↓ 0`.
///
/// Returns 0 when the sequence oscillates or the limit is below
/// [`ATOM_DETECTION_THRESHOLD`].
pub fn atom_weight_from_cauchy<G>(mut g: G, c: f64, eps_sequence: &[f64]) -> f64
where
    G: FnMut(Complex64) -> Complex64,
{
    let samples: Vec<f64> = eps_sequence
        .iter()
        .filter(|y| **y > 0.0)
        .map(|&y| {
            let z = Complex64::new(c, y);
            (Complex64::new(0.0, y) * g(z)).re
        })
        .filter(|v| v.is_finite())
        .collect();
    let n = samples.len();
    if n < 3 {
        return 0.0;
    }
    let last = samples[n - 1];
    let d1 = (samples[n - 1] - samples[n - 2]).abs();
    let d2 = (samples[n - 2] - samples[n - 3]).abs();
    // converging sequences have shrinking increments
    if d1 > 1e-2 || d1 > d2 + 1e-9 {
        return 0.0;
    }
    if last < ATOM_DETECTION_THRESHOLD {
        return 0.0;
    }
    last.min(1.0)
}

/// `∫ t^k μ(dt)`: exact over atoms, trapezoid over the density.
pub fn moment(mu: &SpectralMeasure, k: u32) -> f64 {
    let atoms: f64 = mu.atoms.iter().map(|&(x, w)| w * x.powi(k as i32)).sum();
    let cont = mu.density.as_ref().map_or(0.0, |d| d.trapezoid(|x| x.powi(k as i32)));
    atoms + cont
}

/// Index `k` of the bin `[k w, (k+1) w)` holding `x`, tolerant to rounding at edges.
pub fn bin_index(x: f64, bin_width: f64) -> i64 {
    (x / bin_width + 1e-9).floor() as i64
}

/// Mass of `mu` in each bin `[k w, (k+1) w)`; atoms go to the bin containing them.
pub fn bin_masses(mu: &SpectralMeasure, bin_width: f64) -> Result<BTreeMap<i64, f64>> {
    if !(bin_width > 0.0) {
        return Err(Error::invalid(format!("bin width {bin_width} must be positive")));
    }
    let mut bins = BTreeMap::new();
    for &(x, w) in &mu.atoms {
        *bins.entry(bin_index(x, bin_width)).or_insert(0.0) += w;
    }
    if let Some(d) = &mu.density {
        let h = d.spacing();
        for j in 0..d.values.len() - 1 {
            let (t0, t1) = (d.left + j as f64 * h, d.left + (j + 1) as f64 * h);
            let (v0, v1) = (d.values[j], d.values[j + 1]);
            if v0 == 0.0 && v1 == 0.0 {
                continue;
            }
            let line = |x: f64| v0 + (v1 - v0) * (x - t0) / h;
            let mut a = t0;
            while a < t1 {
                let k = (a / bin_width).floor() as i64;
                let edge = ((k + 1) as f64 * bin_width).min(t1);
                let b = if edge <= a { t1 } else { edge };
                *bins.entry(k).or_insert(0.0) += 0.5 * (b - a) * (line(a) + line(b));
                a = b;
            }
        }
    }
    Ok(bins)
}

/// `Σ_i |p_i - q_i|` over a common grid of bins of width `bin_width`.
pub fn distance_l1(mu: &SpectralMeasure, nu: &SpectralMeasure, bin_width: f64) -> Result<f64> {
    let p = bin_masses(mu, bin_width)?;
    let q = bin_masses(nu, bin_width)?;
    let mut keys: Vec<i64> = p.keys().chain(q.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    Ok(keys
        .iter()
        .map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs())
        .sum())
}
