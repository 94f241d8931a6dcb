//! The subcommands. Each writes its outputs plus `config.json` and
//! `version.txt` into one output directory.

use std::fs;
use std::path::{Path, PathBuf};

use isofisher::freeconv::{
    asymptotic_max, asymptotic_mean, di_conditions, max_support_track, mean_track, propagate_schedule,
    AsymptoticRegime, ConvGrid, LayerSchedule, SolverStats,
};
use isofisher::meanfield::tune_di;
use isofisher::rmtsim::{
    compare_to_theory, dual_fim_recursive, eig_sym, empirical_measure, free_model_dual_fim,
    normalized_gaussian_input, EigenReport, OrthogonalNet, TheoryComparison,
};
use isofisher::specmeasure::SpectralMeasure;
use isofisher::trainlab::{
    dataset_from_idx, decade_grid, load_idx, lr_depth_sweep, synth_split, Dataset, SweepResult, TrainConfig,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{DataConfig, ExperimentConfig, ModelConfig};
use crate::error::{CliError, CliResult};
use crate::svg::{emit_svg_heatmap, emit_svg_histogram, PlotOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    write(path, text)
}

/// Creates `out` and records the resolved config and tool version there.
pub fn prepare_out(out: &Path, config: &ExperimentConfig) -> CliResult<()> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write(&out.join("config.json"), config.to_json() + "\n")?;
    write(&out.join("version.txt"), format!("isofisher {VERSION}\n"))
}

fn conv_grid(config: &ExperimentConfig) -> ConvGrid {
    ConvGrid::with_grid_count(config.grid)
}

/// `mu_01.json`, `mu_02.json`, … sorted by name in layer order.
fn measure_file(l: usize, depth: usize) -> String {
    let digits = depth.to_string().len().max(2);
    format!("mu_{l:0digits$}.json")
}

#[derive(Serialize)]
struct TrackRow {
    layer: usize,
    lambda: f64,
    beta: f64,
    mean: f64,
    valid: bool,
}

#[derive(Serialize)]
struct Asymptotics {
    depth: usize,
    support_max: f64,
    mean: f64,
    support_max_over_depth: f64,
    mean_over_depth: f64,
    /// Regime read off the last layer, `(q_{L-1}, L(1 - α), -L log σ²γ)`.
    regime: Option<AsymptoticRegime>,
    limit_max_over_depth: Option<f64>,
    limit_mean_over_depth: Option<f64>,
    solver: SolverStats,
}

fn asymptotics(schedule: &LayerSchedule, measures: &[SpectralMeasure], stats: &[SolverStats]) -> Asymptotics {
    let depth = schedule.depth();
    let last = &measures[depth - 1];
    let regime = (depth > 1)
        .then(|| {
            let law = schedule.law(depth - 1);
            let (eps1, eps2) = di_conditions(law.alpha(), schedule.sigma(depth), law.gamma(), depth);
            AsymptoticRegime::new(schedule.q(depth - 1), eps1, eps2).ok()
        })
        .flatten();
    let mut solver = SolverStats::default();
    for s in stats {
        solver.merge(s);
    }
    let mean = isofisher::specmeasure::moment(last, 1);
    Asymptotics {
        depth,
        support_max: last.support_max(),
        mean,
        support_max_over_depth: last.support_max() / depth as f64,
        mean_over_depth: mean / depth as f64,
        regime,
        limit_max_over_depth: regime.as_ref().map(asymptotic_max),
        limit_mean_over_depth: regime.as_ref().map(asymptotic_mean),
        solver,
    }
}

/// `μ_1 … μ_L` as JSON, the max-atom track as CSV, an asymptotics summary and
/// a plot of `μ_L`.
pub fn cmd_theory(config: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let schedule = config.theory.schedule.build("theory.schedule")?;
    prepare_out(out, config)?;
    let (measures, stats) = propagate_schedule(&schedule, &conv_grid(config))?;
    let depth = schedule.depth();
    for (i, mu) in measures.iter().enumerate() {
        write_json(&out.join(measure_file(i + 1, depth)), mu)?;
    }

    let track = max_support_track(&schedule);
    let means = mean_track(&schedule);
    let path = out.join("atom_track.csv");
    let mut w = csv::Writer::from_path(&path)?;
    #[allow(clippy::needless_range_loop)]
    for l in 0..depth {
        w.serialize(TrackRow {
            layer: l + 1,
            lambda: track.lambda[l],
            beta: track.beta[l],
            mean: means[l],
            valid: l < track.valid_through,
        })?;
    }
    w.flush().map_err(io_err(&path))?;

    write_json(&out.join("asymptotics.json"), &asymptotics(&schedule, &measures, &stats))?;
    let opts = PlotOptions {
        title: format!("theoretical spectrum at L = {depth}"),
        log_y: config.log_y,
        measure_label: format!("mu_{depth}"),
        ..PlotOptions::default()
    };
    write(&out.join("spectrum.svg"), emit_svg_histogram(&measures[depth - 1], None, &opts))
}

pub fn cmd_tune(config: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let t = &config.tune;
    prepare_out(out, config)?;
    let result = tune_di(t.family, t.sigma, t.criterion, t.q0, t.reference_depth)?;
    if !result.fixed_point_converged {
        log::warn!("q iteration did not converge at the tuned gain");
    }
    write_json(&out.join("tune.json"), &result)
}

fn write_eigen_csv(path: &Path, report: &EigenReport, meta: &[(&str, String)]) -> CliResult<()> {
    let mut text = String::new();
    for (k, v) in meta {
        text.push_str(&format!("# {k}: {v}\n"));
    }
    text.push_str("index,eigenvalue\n");
    for (i, v) in report.eigenvalues.iter().enumerate() {
        text.push_str(&format!("{i},{v:e}\n"));
    }
    write(path, text)
}

/// Eigenvalues from a CSV written by `simulate`; `#` lines are metadata.
pub fn read_eigen_csv(path: &Path) -> CliResult<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let v = rec
            .get(1)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| CliError::config(path.display().to_string(), format!("row {} has no eigenvalue", i + 1)))?;
        values.push(v);
    }
    Ok(values)
}

fn read_measure(path: &Path) -> CliResult<SpectralMeasure> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        CliError::config(format!("{}:{at}", path.display()), e.into_inner().to_string())
    })
}

fn default_bins(report: &EigenReport) -> f64 {
    report.histogram.bin_width
}

fn comparison_outputs(
    out: &Path,
    config: &ExperimentConfig,
    report: &EigenReport,
    theory: &SpectralMeasure,
    title: String,
) -> CliResult<TheoryComparison> {
    let bins = config.bins.unwrap_or_else(|| default_bins(report));
    let empirical = empirical_measure(report, bins)?;
    write_json(&out.join("empirical.json"), &empirical)?;
    let comparison = compare_to_theory(report, theory, bins)?;
    write_json(&out.join("comparison.json"), &comparison)?;
    let opts = PlotOptions {
        title,
        log_y: config.log_y,
        bars: (((empirical.support_max() - empirical.support_min()) / bins).round() as usize).clamp(1, 400),
        ..PlotOptions::default()
    };
    write(&out.join("spectrum.svg"), emit_svg_histogram(&empirical, Some(theory), &opts))?;
    Ok(comparison)
}

/// Samples `H_L`, writes its spectrum and compares it with the theory.
pub fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> CliResult<TheoryComparison> {
    let sim = &config.simulate;
    if sim.width < 2 {
        return Err(CliError::config("simulate.width", "width must be at least 2"));
    }
    let schedule = sim.schedule()?;
    prepare_out(out, config)?;
    let (h, kind) = match &sim.model {
        ModelConfig::Network { depth, activation, sigma, q0 } => {
            let net = OrthogonalNet::constant(sim.width, *depth, *sigma, *activation, config.seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(u64::MAX);
            let x = normalized_gaussian_input(sim.width, *q0, &mut rng)?;
            (dual_fim_recursive(&net, &net.forward_trace(&x)?)?, "network")
        }
        ModelConfig::Free { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            (free_model_dual_fim(&schedule, sim.width, &mut rng)?, "free")
        }
    };
    let report = eig_sym(&h)?;
    write_eigen_csv(
        &out.join("eigenvalues.csv"),
        &report,
        &[
            ("model", kind.to_string()),
            ("width", sim.width.to_string()),
            ("depth", sim.depth().to_string()),
            ("seed", config.seed.to_string()),
            ("count", report.len().to_string()),
            ("max", format!("{:e}", report.max)),
            ("mean", format!("{:e}", report.mean)),
            ("near_max_fraction", format!("{:e}", report.atom_mass_near_max)),
        ],
    )?;
    let theory = match &sim.theory_file {
        Some(p) => read_measure(p)?,
        None => {
            let (measures, _) = propagate_schedule(&schedule, &conv_grid(config))?;
            let mu = measures.last().expect("depth >= 1").clone();
            write_json(&out.join("theory.json"), &mu)?;
            mu
        }
    };
    let title = format!("spectrum of H_{} at M = {}", sim.depth(), sim.width);
    comparison_outputs(out, config, &report, &theory, title)
}

/// Compares an eigenvalue CSV against a measure JSON.
pub fn cmd_compare(config: &ExperimentConfig, eigenvalues: &Path, theory: &Path, out: &Path) -> CliResult<TheoryComparison> {
    let values = read_eigen_csv(eigenvalues)?;
    if values.is_empty() {
        return Err(CliError::config(eigenvalues.display().to_string(), "no eigenvalues"));
    }
    let report = EigenReport::from_eigenvalues(values)?;
    let mu = read_measure(theory)?;
    prepare_out(out, config)?;
    comparison_outputs(out, config, &report, &mu, "empirical vs theoretical spectrum".into())
}

#[derive(Serialize)]
struct SweepRow {
    #[serde(rename = "L")]
    depth: usize,
    eta: f64,
    train_loss: f64,
    test_loss: f64,
    train_acc: f64,
    test_acc: f64,
    diverged: bool,
    seed: u64,
}

#[derive(Serialize)]
struct BoundaryRow {
    depth: usize,
    largest_stable: Option<f64>,
    smallest_diverged: Option<f64>,
    eta_star: Option<f64>,
    two_over_l: f64,
    /// `η* / (2/L)`.
    ratio: Option<f64>,
    monotone: bool,
}

fn split(data: Dataset, n_train: usize) -> CliResult<(Dataset, Dataset)> {
    let Dataset { inputs, labels, classes } = data;
    let (a, b) = inputs.split_at(n_train);
    let (la, lb) = labels.split_at(n_train);
    Ok((
        Dataset::new(a.to_vec(), la.to_vec(), classes)?,
        Dataset::new(b.to_vec(), lb.to_vec(), classes)?,
    ))
}

fn sweep_data(config: &ExperimentConfig) -> CliResult<(Dataset, Dataset)> {
    let s = &config.sweep;
    match &s.data {
        DataConfig::Synthetic { classes } => Ok(synth_split(s.width, s.n_train, s.n_test, *classes, config.seed)?),
        DataConfig::Idx { images, labels } => {
            let img = load_idx(images, Some(IDX_IMAGES_MAGIC))?;
            let lab = load_idx(labels, Some(IDX_LABELS_MAGIC))?;
            if img.item_len() != s.width {
                return Err(CliError::config(
                    "sweep.width",
                    format!("images have {} pixels but the width is {}", img.item_len(), s.width),
                ));
            }
            let all = dataset_from_idx(&img, &lab, s.n_train + s.n_test, config.seed)?;
            split(all, s.n_train)
        }
    }
}

/// Depth × learning-rate sweep: CSV of cells, boundary JSON and heatmap.
pub fn cmd_sweep(config: &ExperimentConfig, out: &Path) -> CliResult<SweepResult> {
    let s = &config.sweep;
    if s.depths.is_empty() {
        return Err(CliError::config("sweep.depths", "no depths"));
    }
    let etas = decade_grid(s.eta_min, s.eta_max, s.per_decade).map_err(|e| CliError::config("sweep.eta_min", e.to_string()))?;
    let base = TrainConfig {
        depth: s.depths[0],
        width: s.width,
        activation: s.activation,
        sigma: s.sigma,
        eta: etas[0],
        epochs: s.epochs,
        seed: config.seed,
        divergence_factor: s.divergence_factor,
    };
    base.validate().map_err(|e| CliError::config("sweep", e.to_string()))?;
    if let Some(d) = s.depths.iter().find(|d| **d == 0) {
        return Err(CliError::config("sweep.depths", format!("depth {d} must be positive")));
    }
    let (train, test) = sweep_data(config)?;
    prepare_out(out, config)?;
    let result = lr_depth_sweep(&s.depths, &etas, &base, &train, &test)?;

    let path = out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for c in &result.cells {
        w.serialize(SweepRow {
            depth: c.depth,
            eta: c.eta,
            train_loss: c.train_loss,
            test_loss: c.test_loss,
            train_acc: c.train_acc,
            test_acc: c.test_acc,
            diverged: c.diverged,
            seed: c.seed,
        })?;
    }
    w.flush().map_err(io_err(&path))?;

    let rows: Vec<BoundaryRow> = result
        .boundary
        .iter()
        .map(|b| {
            let two_over_l = 2.0 / b.depth as f64;
            BoundaryRow {
                depth: b.depth,
                largest_stable: b.largest_stable,
                smallest_diverged: b.smallest_diverged,
                eta_star: b.eta_star,
                two_over_l,
                ratio: b.eta_star.map(|e| e / two_over_l),
                monotone: b.monotone,
            }
        })
        .collect();
    write_json(&out.join("boundary.json"), &rows)?;
    write(
        &out.join("heatmap.svg"),
        emit_svg_heatmap(&result, &format!("test accuracy, M = {}", s.width)),
    )?;
    if result.all_diverged() {
        return Err(CliError::AllDiverged);
    }
    Ok(result)
}

/// Default output directory for a command.
pub fn default_out(command: &str) -> PathBuf {
    PathBuf::from("isofisher-out").join(command)
}
