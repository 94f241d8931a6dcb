//! Online gradient descent on orthogonal networks and the depth × learning
//! rate stability sweep.

mod data;
mod idx;

pub use data::{dataset_from_idx, synth_dataset, synth_split, synth_split_with, Dataset, SynthSpec};
pub use idx::{load_idx, parse_idx, IdxTensor, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::ActivationSpec;
use crate::rmtsim::OrthogonalNet;

/// Reported losses are capped here; diverged runs report exactly this value.
pub const LOSS_CLAMP: f64 = 10.0;
pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub depth: usize,
    pub width: usize,
    pub activation: ActivationSpec,
    pub sigma: f64,
    pub eta: f64,
    pub epochs: usize,
    pub seed: u64,
    /// A run diverges once some `‖W_ℓ‖_F` exceeds this multiple of its initial value.
    pub divergence_factor: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width < 2 {
            return Err(Error::invalid(format!("need depth >= 1 and width >= 2, got {} and {}", self.depth, self.width)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be finite and nonnegative", self.eta)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma = {} must be positive", self.sigma)));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::invalid("divergence factor must exceed 1"));
        }
        self.activation.validate()
    }

    pub fn build_net(&self) -> Result<OrthogonalNet> {
        OrthogonalNet::constant(self.width, self.depth, self.sigma, self.activation, self.seed)
    }
}

/// `M⁻¹‖f(x) - y‖²/2` and its gradient with respect to every `W_ℓ`.
pub fn loss_gradient(net: &OrthogonalNet, x: &DVector<f64>, y: &DVector<f64>) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let m = net.width() as f64;
    let trace = net.forward_trace(x)?;
    let residual = trace.output() - y;
    let loss = residual.norm_squared() / (2.0 * m);
    // g_ℓ = ∂loss/∂h^ℓ, starting from g_L = (f - y)/M
    let mut g = residual / m;
    let mut grads = vec![DMatrix::zeros(0, 0); net.depth()];
    for l in (0..net.depth()).rev() {
        grads[l] = &g * trace.x[l].transpose();
        if l > 0 {
            g = (net.weights()[l].transpose() * &g).component_mul(&trace.d[l - 1]);
        }
    }
    Ok((loss, grads))
}

/// Outcome of one online update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    /// Loss before the update.
    pub loss: f64,
    pub diverged: bool,
}

/// `θ ← θ - η ∇_θ [M⁻¹ L(f_θ(x) - y)]`. A non-finite loss or gradient leaves
/// the parameters untouched and marks the step diverged.
pub fn online_gd_step(net: &mut OrthogonalNet, x: &DVector<f64>, y: &DVector<f64>, eta: f64) -> Result<StepOutcome> {
    let (loss, grads) = match loss_gradient(net, x, y) {
        Ok(v) => v,
        Err(e) if e.is_numerical() => {
            return Ok(StepOutcome {
                loss: f64::INFINITY,
                diverged: true,
            })
        }
        Err(e) => return Err(e),
    };
    if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Ok(StepOutcome { loss, diverged: true });
    }
    if eta != 0.0 {
        for (w, g) in net.weights_mut().iter_mut().zip(&grads) {
            *w -= g * eta;
        }
    }
    Ok(StepOutcome { loss, diverged: false })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean loss and top-1 accuracy, predicting `argmax_k ⟨f(x), e_k⟩` over the classes.
pub fn evaluate(net: &OrthogonalNet, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Ok(Evaluation {
            loss: f64::NAN,
            accuracy: f64::NAN,
        });
    }
    let m = net.width() as f64;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (i, x) in data.inputs.iter().enumerate() {
        let f = net.output(x)?;
        loss += (&f - data.target(i)).norm_squared() / (2.0 * m);
        let pred = (0..data.classes).max_by(|a, b| f[*a].total_cmp(&f[*b])).expect("classes >= 1");
        correct += usize::from(pred == data.labels[i]);
    }
    Ok(Evaluation {
        loss: loss / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub step_losses: Vec<f64>,
    pub diverged: bool,
    /// Step index at which divergence was detected.
    pub diverged_at: Option<usize>,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

fn clamp_loss(v: f64) -> f64 {
    if v.is_finite() {
        v.min(LOSS_CLAMP)
    } else {
        LOSS_CLAMP
    }
}

/// Online passes over `train` in order, `config.epochs` times.
pub fn train_run(config: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<TrainReport> {
    let net = config.build_net()?;
    train_net(net, config, train, test)
}

/// [`train_run`] from a given initial network.
pub fn train_net(mut net: OrthogonalNet, config: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<TrainReport> {
    config.validate()?;
    if train.width() != net.width() || (!test.is_empty() && test.width() != net.width()) {
        return Err(Error::Dimension(format!(
            "data of width {} for a net of width {}",
            train.width(),
            net.width()
        )));
    }
    let limits: Vec<f64> = net.weights().iter().map(|w| w.norm() * config.divergence_factor).collect();
    let mut step_losses = Vec::with_capacity(config.epochs * train.len());
    let mut diverged_at = None;
    'epochs: for _ in 0..config.epochs {
        for i in 0..train.len() {
            let step = online_gd_step(&mut net, &train.inputs[i], &train.target(i), config.eta)?;
            step_losses.push(step.loss);
            let blown = net.weights().iter().zip(&limits).any(|(w, lim)| !(w.norm() <= *lim));
            if step.diverged || blown {
                diverged_at = Some(step_losses.len() - 1);
                break 'epochs;
            }
        }
    }
    let diverged = diverged_at.is_some();
    let (train_eval, test_eval) = if diverged {
        let worst = Evaluation {
            loss: LOSS_CLAMP,
            accuracy: f64::NAN,
        };
        (worst, worst)
    } else {
        (evaluate(&net, train)?, evaluate(&net, test)?)
    };
    let (train_acc, test_acc) = if diverged {
        // a blown-up net predicts nothing meaningful; score it at chance
        let chance = 1.0 / train.classes as f64;
        (chance, chance)
    } else {
        (train_eval.accuracy, test_eval.accuracy)
    };
    Ok(TrainReport {
        step_losses,
        diverged,
        diverged_at,
        train_loss: clamp_loss(train_eval.loss),
        test_loss: if test.is_empty() { f64::NAN } else { clamp_loss(test_eval.loss) },
        train_acc,
        test_acc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub depth: usize,
    pub eta: f64,
    pub seed: u64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEstimate {
    pub depth: usize,
    /// Largest stable η below `smallest_diverged`.
    pub largest_stable: Option<f64>,
    pub smallest_diverged: Option<f64>,
    /// Geometric midpoint of the bracket; absent when either side is missing.
    pub eta_star: Option<f64>,
    /// Every η above `smallest_diverged` also diverged.
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub boundary: Vec<BoundaryEstimate>,
}

impl SweepResult {
    pub fn all_diverged(&self) -> bool {
        self.cells.iter().all(|c| c.diverged)
    }

    pub fn boundary_for(&self, depth: usize) -> Option<&BoundaryEstimate> {
        self.boundary.iter().find(|b| b.depth == depth)
    }
}

/// Network seed for one depth; shared by every η so cells differ only in η.
pub fn sweep_seed(base: u64, depth: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(depth as u64)
}

pub fn estimate_boundary(depth: usize, cells: &[&SweepCell]) -> BoundaryEstimate {
    let mut sorted: Vec<&&SweepCell> = cells.iter().collect();
    sorted.sort_by(|a, b| a.eta.total_cmp(&b.eta));
    let first_div = sorted.iter().position(|c| c.diverged);
    let smallest_diverged = first_div.map(|i| sorted[i].eta);
    let largest_stable = match first_div {
        Some(0) => None,
        Some(i) => Some(sorted[i - 1].eta),
        None => sorted.last().map(|c| c.eta),
    };
    let monotone = first_div.is_none_or(|i| sorted[i..].iter().all(|c| c.diverged));
    if !monotone {
        log::warn!("non-monotone divergence at depth {depth}: a larger learning rate trained stably");
    }
    let eta_star = match (largest_stable, smallest_diverged) {
        (Some(a), Some(b)) => Some((a * b).sqrt()),
        _ => None,
    };
    BoundaryEstimate {
        depth,
        largest_stable,
        smallest_diverged,
        eta_star,
        monotone,
    }
}

/// One [`train_run`] per `(L, η)`; cells run in parallel and are returned in
/// grid order.
pub fn lr_depth_sweep(
    depths: &[usize],
    etas: &[f64],
    base: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<SweepResult> {
    if depths.is_empty() || etas.is_empty() {
        return Err(Error::invalid("sweep grids must be nonempty"));
    }
    let grid: Vec<(usize, f64)> = depths.iter().flat_map(|&l| etas.iter().map(move |&e| (l, e))).collect();
    let cells = grid
        .par_iter()
        .map(|&(depth, eta)| {
            let config = TrainConfig {
                depth,
                eta,
                seed: sweep_seed(base.seed, depth),
                ..base.clone()
            };
            let r = train_run(&config, train, test)?;
            Ok(SweepCell {
                depth,
                eta,
                seed: config.seed,
                train_loss: r.train_loss,
                test_loss: r.test_loss,
                train_acc: r.train_acc,
                test_acc: r.test_acc,
                diverged: r.diverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let boundary = depths
        .iter()
        .map(|&l| {
            let mine: Vec<&SweepCell> = cells.iter().filter(|c| c.depth == l).collect();
            estimate_boundary(l, &mine)
        })
        .collect();
    Ok(SweepResult { cells, boundary })
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return Err(Error::invalid(format!("log grid needs 0 < lo < hi and n >= 2, got {lo}, {hi}, {n}")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
}

/// Log grid with `per_decade` points per decade covering `[lo, hi]`, anchored at powers of ten.
pub fn decade_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || per_decade == 0 {
        return Err(Error::invalid("decade grid needs 0 < lo < hi and per_decade >= 1"));
    }
    let step = 1.0 / per_decade as f64;
    let k0 = (lo.log10() / step).floor() as i64;
    let k1 = (hi.log10() / step).ceil() as i64;
    Ok((k0..=k1).map(|k| 10f64.powf(k as f64 * step)).collect())
}
