//! Symmetric eigensolver wrapper, eigenvalue summaries and empirical measures.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specmeasure::{bin_index, distance_l1, moment, GridDensity, SpectralMeasure, MIN_GRID_COUNT};

/// Relative window below the maximum counted as the near-max cluster.
pub const NEAR_MAX_WINDOW: f64 = 0.01;
const SYMMETRY_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 100_000;
/// Minimum grid cells per histogram bin in [`empirical_measure`].
const CELLS_PER_BIN: usize = 4;

/// Counts over bins `[k w, (k+1) w)`, `k = first_bin …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub first_bin: i64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bins aligned to multiples of `bin_width`, as [`crate::specmeasure::bin_masses`] uses.
    pub fn new(values: &[f64], bin_width: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::invalid(format!("bin width {bin_width} must be positive")));
        }
        if values.is_empty() {
            return Err(Error::invalid("histogram of no values"));
        }
        let idx: Vec<i64> = values.iter().map(|v| bin_index(*v, bin_width)).collect();
        let first = *idx.iter().min().expect("nonempty");
        let last = *idx.iter().max().expect("nonempty");
        let mut counts = vec![0u64; (last - first + 1) as usize];
        for k in idx {
            counts[(k - first) as usize] += 1;
        }
        Ok(Histogram {
            bin_width,
            first_bin: first,
            counts,
        })
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.counts.len())
            .map(|i| (self.first_bin + i as i64) as f64 * self.bin_width)
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub max: f64,
    pub mean: f64,
    pub histogram: Histogram,
    /// Fraction of eigenvalues within `NEAR_MAX_WINDOW` (relative) of `max`.
    pub atom_mass_near_max: f64,
}

impl EigenReport {
    /// Report for already computed eigenvalues.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("no eigenvalues"));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "eigenvalue".into(),
                location: "eigen report".into(),
            });
        }
        eigenvalues.sort_by(f64::total_cmp);
        let n = eigenvalues.len();
        let max = eigenvalues[n - 1];
        let min = eigenvalues[0];
        let mean = eigenvalues.iter().sum::<f64>() / n as f64;
        let bins = (n as f64).sqrt().ceil().max(1.0);
        let span = max - min;
        let bin_width = if span > 1e-12 * max.abs().max(1.0) {
            span / bins
        } else {
            1e-3 * max.abs().max(1.0)
        };
        let histogram = Histogram::new(&eigenvalues, bin_width)?;
        let mut report = EigenReport {
            eigenvalues,
            max,
            mean,
            histogram,
            atom_mass_near_max: 0.0,
        };
        report.atom_mass_near_max = report.near_max_fraction(NEAR_MAX_WINDOW);
        Ok(report)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Fraction of eigenvalues in `[max - window |max|, max]`.
    pub fn near_max_fraction(&self, window: f64) -> f64 {
        let cut = self.max - window * self.max.abs();
        let count = self.eigenvalues.iter().rev().take_while(|v| **v >= cut).count();
        count as f64 / self.len() as f64
    }

    pub fn histogram_with(&self, bin_width: f64) -> Result<Histogram> {
        Histogram::new(&self.eigenvalues, bin_width)
    }
}

/// Eigenvalues of a symmetric matrix, checked by residuals on spot eigenpairs.
pub fn eig_sym(a: &DMatrix<f64>) -> Result<EigenReport> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Dimension(format!("eigensolver needs a square matrix, got {}x{}", n, a.ncols())));
    }
    let scale = a.amax();
    if !scale.is_finite() {
        return Err(Error::NonFinite {
            what: "matrix entry".into(),
            location: "eigensolver input".into(),
        });
    }
    let asym = (a - a.transpose()).amax();
    if asym >= SYMMETRY_TOL * scale.max(1.0) {
        return Err(Error::invalid(format!("matrix is not symmetric (max |A - Aᵀ| = {asym:e})")));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym.clone(), f64::EPSILON, MAX_SWEEPS).ok_or_else(|| Error::NoConvergence {
        what: "symmetric eigensolver".into(),
        iterations: MAX_SWEEPS,
    })?;
    let norm = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let spots = [order[0], order[n / 2], order[n - 1]];
    for &i in &spots {
        let v = eig.eigenvectors.column(i);
        let resid = (&sym * v - v * eig.eigenvalues[i]).norm();
        if resid > RESIDUAL_TOL * norm {
            return Err(Error::NoConvergence {
                what: format!("symmetric eigensolver (residual {resid:e} for eigenvalue {})", eig.eigenvalues[i]),
                iterations: MAX_SWEEPS,
            });
        }
    }
    EigenReport::from_eigenvalues(eig.eigenvalues.iter().copied().collect())
}

fn degenerate(report: &EigenReport) -> bool {
    report.max - report.min() <= 1e-9 * report.max.abs().max(1.0)
}

fn density_from(values: &[f64], total: usize, bin_width: f64) -> Result<GridDensity> {
    let hist = Histogram::new(values, bin_width)?;
    let masses: Vec<f64> = hist.counts.iter().map(|c| *c as f64 / total as f64).collect();
    let sub = CELLS_PER_BIN.max(MIN_GRID_COUNT.div_ceil(masses.len()));
    GridDensity::from_bin_masses(hist.first_bin, bin_width, &masses, sub)
}

/// Normalized histogram of the eigenvalues as a pure density; a spectrum of
/// one repeated value becomes a point mass.
pub fn empirical_measure(report: &EigenReport, bin_width: f64) -> Result<SpectralMeasure> {
    if !(bin_width > 0.0) {
        return Err(Error::invalid(format!("bin width {bin_width} must be positive")));
    }
    if report.is_empty() {
        return Err(Error::invalid("empty eigen report"));
    }
    if degenerate(report) {
        return Ok(SpectralMeasure::delta(report.mean));
    }
    let density = density_from(&report.eigenvalues, report.len(), bin_width)?;
    SpectralMeasure::new(vec![], Some(density))
}

/// As [`empirical_measure`], but eigenvalues within `window` (relative) of the
/// maximum become one atom at the maximum.
pub fn empirical_measure_with_atom(report: &EigenReport, bin_width: f64, window: f64) -> Result<SpectralMeasure> {
    if !(window >= 0.0) {
        return Err(Error::invalid(format!("window {window} must be nonnegative")));
    }
    let base = empirical_measure(report, bin_width)?;
    if degenerate(report) {
        return Ok(base);
    }
    let cut = report.max - window * report.max.abs();
    let split = report.eigenvalues.partition_point(|v| *v < cut);
    let n = report.len();
    let atom = (report.max, (n - split) as f64 / n as f64);
    if split == 0 {
        return SpectralMeasure::from_atoms(vec![atom]);
    }
    let density = density_from(&report.eigenvalues[..split], n, bin_width)?;
    SpectralMeasure::new(vec![atom], Some(density))
}

/// Empirical spectrum against a theoretical measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryComparison {
    pub bin_width: f64,
    pub l1: f64,
    pub empirical_max: f64,
    pub theory_max: f64,
    pub empirical_mean: f64,
    pub theory_mean: f64,
    pub empirical_near_max_mass: f64,
    pub theory_near_max_mass: f64,
}

pub fn compare_to_theory(report: &EigenReport, theory: &SpectralMeasure, bin_width: f64) -> Result<TheoryComparison> {
    let empirical = empirical_measure(report, bin_width)?;
    let l1 = distance_l1(&empirical, theory, bin_width)?;
    let theory_max = theory.support_max();
    Ok(TheoryComparison {
        bin_width,
        l1,
        empirical_max: report.max,
        theory_max,
        empirical_mean: report.mean,
        theory_mean: moment(theory, 1),
        empirical_near_max_mass: report.atom_mass_near_max,
        theory_near_max_mass: theory.mass_between(theory_max - NEAR_MAX_WINDOW * theory_max.abs(), theory_max),
    })
}
