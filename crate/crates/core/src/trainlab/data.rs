//! Datasets with inputs normalized to `‖x‖²/M = 1` and one-hot targets.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::idx::IdxTensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<DVector<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<DVector<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Dimension(format!("{} inputs for {} labels", inputs.len(), labels.len())));
        }
        let m = inputs.first().map_or(0, |x| x.len());
        if inputs.iter().any(|x| x.len() != m) {
            return Err(Error::Dimension("inputs of different lengths".into()));
        }
        if classes == 0 || (m > 0 && classes > m) {
            return Err(Error::invalid(format!("{classes} classes cannot be encoded in R^{m}")));
        }
        if let Some(l) = labels.iter().find(|l| **l >= classes) {
            return Err(Error::invalid(format!("label {l} out of range for {classes} classes")));
        }
        let inputs = inputs.into_iter().map(normalize).collect::<Result<Vec<_>>>()?;
        Ok(Dataset { inputs, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn width(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.len())
    }

    /// `e_label` in `R^M`.
    pub fn target(&self, i: usize) -> DVector<f64> {
        let mut y = DVector::zeros(self.width());
        y[self.labels[i]] = 1.0;
        y
    }
}

fn normalize(x: DVector<f64>) -> Result<DVector<f64>> {
    let norm = x.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::invalid("input with zero or non-finite norm"));
    }
    let scale = (x.len() as f64).sqrt() / norm;
    Ok(x * scale)
}

/// Shape of the synthetic clusters: `x = shared·u + c_k + noise·z` with `u`,
/// `c_k`, `z` independent standard Gaussian vectors and `u` common to all
/// samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub shared: f64,
    pub noise: f64,
}

impl Default for SynthSpec {
    /// Inputs of different classes have cosine ≈ 2/3 and of one class ≈ 5/6,
    /// close to what flattened nonnegative images show.
    fn default() -> Self {
        SynthSpec { shared: 2.0, noise: 1.0 }
    }
}

/// Train and test sets drawn around the same Gaussian class centers.
pub fn synth_split(m: usize, n_train: usize, n_test: usize, classes: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    synth_split_with(SynthSpec::default(), m, n_train, n_test, classes, seed)
}

pub fn synth_split_with(
    spec: SynthSpec,
    m: usize,
    n_train: usize,
    n_test: usize,
    classes: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if classes == 0 || classes > m {
        return Err(Error::invalid(format!("{classes} classes cannot be encoded in R^{m}")));
    }
    if !(spec.shared >= 0.0 && spec.noise >= 0.0 && spec.shared.is_finite() && spec.noise.is_finite()) {
        return Err(Error::invalid(format!("synthetic spec {spec:?} needs nonnegative weights")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |r: &mut ChaCha8Rng| DVector::<f64>::from_fn(m, |_, _| r.sample(StandardNormal));
    let shared = gaussian(&mut rng) * spec.shared;
    let centers: Vec<DVector<f64>> = (0..classes).map(|_| &shared + gaussian(&mut rng)).collect();
    let draw = |n: usize, stream: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let inputs = labels
            .iter()
            .map(|&c| &centers[c] + gaussian(&mut r) * spec.noise)
            .collect();
        Dataset::new(inputs, labels, classes)
    };
    Ok((draw(n_train, 1)?, draw(n_test, 2)?))
}

/// `n` normalized Gaussian-cluster samples in `R^M`.
pub fn synth_dataset(m: usize, n: usize, classes: usize, seed: u64) -> Result<Dataset> {
    Ok(synth_split(m, n, 0, classes, seed)?.0)
}

/// Uniform subsample of `n` image/label pairs; each flattened image is one input.
pub fn dataset_from_idx(images: &IdxTensor, labels: &IdxTensor, n: usize, seed: u64) -> Result<Dataset> {
    if images.dims.len() < 2 || labels.dims.len() != 1 {
        return Err(Error::Dimension(format!(
            "image tensor {:?} and label tensor {:?}",
            images.dims, labels.dims
        )));
    }
    if images.len() != labels.len() {
        return Err(Error::Dimension(format!("{} images for {} labels", images.len(), labels.len())));
    }
    if n > images.len() {
        return Err(Error::invalid(format!("asked for {n} samples from {}", images.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, images.len(), n).into_vec();
    picks.sort_unstable();
    let classes = labels.data.iter().map(|l| *l as usize + 1).max().unwrap_or(1);
    let inputs = picks
        .iter()
        .map(|&i| DVector::from_iterator(images.item_len(), images.item(i).iter().map(|b| *b as f64)))
        .collect();
    let labs = picks.iter().map(|&i| labels.data[i] as usize).collect();
    Dataset::new(inputs, labs, classes)
}
