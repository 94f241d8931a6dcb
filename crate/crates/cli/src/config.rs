//! Experiment configuration: one JSON document with a section per command.
//! Missing sections fall back to the defaults below, so every command runs
//! without a config file.

use std::path::{Path, PathBuf};

use isofisher::freeconv::{LayerSchedule, TwoAtomJacobianLaw};
use isofisher::meanfield::{schedule_from_activation, ActivationSpec, DiCriterion, TuneFamily};
use isofisher::specmeasure::DEFAULT_GRID_COUNT;
use isofisher::trainlab::DEFAULT_DIVERGENCE_FACTOR;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Gain of the hard tanh at `s = √0.125`, `σ = 1` used for the DI presets.
pub const DI_GAIN: f64 = 1.0013;

fn di_activation() -> ActivationSpec {
    ActivationSpec::HardTanh { s: 0.125f64.sqrt(), g: DI_GAIN }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Density nodes for measure computations.
    pub grid: usize,
    /// Histogram bin width; `None` picks `(max - min)/√n` of the spectrum.
    pub bins: Option<f64>,
    pub log_y: bool,
    pub theory: TheoryConfig,
    pub tune: TuneConfig,
    pub simulate: SimulateConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            grid: DEFAULT_GRID_COUNT,
            bins: None,
            log_y: true,
            theory: TheoryConfig::default(),
            tune: TuneConfig::default(),
            simulate: SimulateConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// How a layer schedule `(q_ℓ, σ_ℓ, ν_ℓ)` is specified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Constant { depth: usize, q: f64, sigma: f64, alpha: f64, gamma: f64 },
    /// `L(1 - α) = ε₁`, `-L log γ = ε₂`, `σ = 1`.
    Tuned { depth: usize, q: f64, eps1: f64, eps2: f64 },
    /// Mean-field schedule of a network with this activation.
    Activation { depth: usize, activation: ActivationSpec, sigma: f64, q0: f64 },
    Explicit { q: Vec<f64>, sigma: Vec<f64>, alpha: Vec<f64>, gamma: Vec<f64> },
}

impl ScheduleConfig {
    /// `field` names this schedule in error messages.
    pub fn build(&self, field: &str) -> CliResult<LayerSchedule> {
        let schedule = match self {
            ScheduleConfig::Constant { depth, q, sigma, alpha, gamma } => {
                LayerSchedule::constant(*depth, *q, *sigma, *alpha, *gamma)
            }
            ScheduleConfig::Tuned { depth, q, eps1, eps2 } => LayerSchedule::tuned(*depth, *q, *eps1, *eps2),
            ScheduleConfig::Activation { depth, activation, sigma, q0 } => {
                schedule_from_activation(activation, *sigma, *q0, *depth)
            }
            ScheduleConfig::Explicit { q, sigma, alpha, gamma } => {
                if alpha.len() != gamma.len() {
                    return Err(CliError::config(
                        field,
                        format!("{} alphas for {} gammas", alpha.len(), gamma.len()),
                    ));
                }
                alpha
                    .iter()
                    .zip(gamma)
                    .map(|(a, g)| TwoAtomJacobianLaw::new(*a, *g))
                    .collect::<isofisher::Result<Vec<_>>>()
                    .and_then(|laws| LayerSchedule::new(q.clone(), sigma.clone(), laws))
            }
        };
        schedule.map_err(|e| CliError::config(field, e.to_string()))
    }

    pub fn depth(&self) -> usize {
        match self {
            ScheduleConfig::Constant { depth, .. }
            | ScheduleConfig::Tuned { depth, .. }
            | ScheduleConfig::Activation { depth, .. } => *depth,
            ScheduleConfig::Explicit { q, .. } => q.len(),
        }
    }

    /// Same schedule at another depth; explicit schedules cannot be resized.
    pub fn with_depth(&self, depth: usize) -> CliResult<Self> {
        let mut out = self.clone();
        match &mut out {
            ScheduleConfig::Constant { depth: d, .. }
            | ScheduleConfig::Tuned { depth: d, .. }
            | ScheduleConfig::Activation { depth: d, .. } => *d = depth,
            ScheduleConfig::Explicit { .. } => {
                return Err(CliError::config("schedule", "an explicit schedule has a fixed depth"))
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryConfig {
    pub schedule: ScheduleConfig,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            schedule: ScheduleConfig::Activation {
                depth: 16,
                activation: di_activation(),
                sigma: 1.0,
                q0: 1.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    pub family: TuneFamily,
    pub sigma: f64,
    pub criterion: DiCriterion,
    pub q0: f64,
    pub reference_depth: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            family: TuneFamily::HardTanh { s: 0.125f64.sqrt() },
            sigma: 1.0,
            criterion: DiCriterion::Sg2,
            q0: 1.0,
            reference_depth: 16,
        }
    }
}

/// Which random matrix stands in for `H_L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// A sampled orthogonal network at one Gaussian input of norm `q0`.
    Network { depth: usize, activation: ActivationSpec, sigma: f64, q0: f64 },
    /// Haar-rotated projections realizing a layer schedule exactly.
    Free { schedule: ScheduleConfig },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub width: usize,
    pub model: ModelConfig,
    /// Theoretical `μ_L` JSON to compare against; computed when absent.
    pub theory_file: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            width: 400,
            model: ModelConfig::Network {
                depth: 16,
                activation: di_activation(),
                sigma: 1.0,
                q0: 1.0,
            },
            theory_file: None,
        }
    }
}

impl SimulateConfig {
    pub fn depth(&self) -> usize {
        match &self.model {
            ModelConfig::Network { depth, .. } => *depth,
            ModelConfig::Free { schedule } => schedule.depth(),
        }
    }

    /// Schedule the theory uses for this model.
    pub fn schedule(&self) -> CliResult<LayerSchedule> {
        match &self.model {
            ModelConfig::Network { depth, activation, sigma, q0 } => ScheduleConfig::Activation {
                depth: *depth,
                activation: *activation,
                sigma: *sigma,
                q0: *q0,
            }
            .build("simulate.model"),
            ModelConfig::Free { schedule } => schedule.build("simulate.model.schedule"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic { classes: usize },
    /// IDX image and label files; images are flattened and must have `width` pixels.
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub width: usize,
    pub depths: Vec<usize>,
    pub eta_min: f64,
    pub eta_max: f64,
    pub per_decade: usize,
    pub epochs: usize,
    pub activation: ActivationSpec,
    pub sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub data: DataConfig,
    pub divergence_factor: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            width: 64,
            depths: vec![4, 8, 16],
            eta_min: 0.01,
            eta_max: 3.0,
            per_decade: 8,
            epochs: 1,
            activation: di_activation(),
            sigma: 1.0,
            n_train: 500,
            n_test: 500,
            data: DataConfig::Synthetic { classes: 10 },
            divergence_factor: DEFAULT_DIVERGENCE_FACTOR,
        }
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the field path and line/column of any error.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config {
                path,
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.grid < isofisher::specmeasure::MIN_GRID_COUNT {
            return Err(CliError::config(
                "grid",
                format!("{} nodes, need at least {}", self.grid, isofisher::specmeasure::MIN_GRID_COUNT),
            ));
        }
        if let Some(b) = self.bins {
            if !(b > 0.0 && b.is_finite()) {
                return Err(CliError::config("bins", format!("bin width {b} must be positive")));
            }
        }
        Ok(())
    }
}
