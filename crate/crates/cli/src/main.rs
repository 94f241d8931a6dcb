use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isofisher_cli::commands::{cmd_compare, cmd_simulate, cmd_sweep, cmd_theory, cmd_tune, default_out};
use isofisher_cli::{CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "isofisher", version, about = "Fisher information spectra of deep orthogonal networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Density grid nodes for measure computations.
    #[arg(long)]
    grid: Option<usize>,
    /// Histogram bin width.
    #[arg(long)]
    bins: Option<f64>,
    /// Linear instead of logarithmic density axis in plots.
    #[arg(long)]
    linear_y: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the spectral recursion for a layer schedule.
    Theory {
        #[command(flatten)]
        common: Common,
        /// Override the schedule depth.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Tune the activation gain for dynamical isometry.
    Tune {
        #[command(flatten)]
        common: Common,
    },
    /// Sample H_L at finite width and compare with the theory.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Depth × learning-rate training sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        width: Option<usize>,
    },
    /// Compare an eigenvalue CSV against a measure JSON.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eigenvalues: PathBuf,
        #[arg(long)]
        theory: PathBuf,
    },
}

fn resolve(common: &Common) -> CliResult<ExperimentConfig> {
    let mut config = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(g) = common.grid {
        config.grid = g;
    }
    if common.bins.is_some() {
        config.bins = common.bins;
    }
    if common.linear_y {
        config.log_y = false;
    }
    config.validate()?;
    Ok(config)
}

fn set_simulate_depth(config: &mut ExperimentConfig, depth: usize) -> CliResult<()> {
    use isofisher_cli::config::ModelConfig;
    match &mut config.simulate.model {
        ModelConfig::Network { depth: d, .. } => *d = depth,
        ModelConfig::Free { schedule } => *schedule = schedule.with_depth(depth)?,
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Theory { common, depth } => {
            let mut config = resolve(&common)?;
            if let Some(d) = depth {
                config.theory.schedule = config.theory.schedule.with_depth(d)?;
            }
            let out = common.out.unwrap_or_else(|| default_out("theory"));
            cmd_theory(&config, &out)
        }
        Command::Tune { common } => {
            let config = resolve(&common)?;
            cmd_tune(&config, &common.out.unwrap_or_else(|| default_out("tune")))
        }
        Command::Simulate { common, width, depth } => {
            let mut config = resolve(&common)?;
            if let Some(w) = width {
                config.simulate.width = w;
            }
            if let Some(d) = depth {
                set_simulate_depth(&mut config, d)?;
            }
            let out = common.out.unwrap_or_else(|| default_out("simulate"));
            let c = cmd_simulate(&config, &out)?;
            println!("L1 {:.4e}  max {:.6} (theory {:.6})  mean {:.6} (theory {:.6})", c.l1, c.empirical_max, c.theory_max, c.empirical_mean, c.theory_mean);
            Ok(())
        }
        Command::Sweep { common, width } => {
            let mut config = resolve(&common)?;
            if let Some(w) = width {
                config.sweep.width = w;
            }
            let out = common.out.unwrap_or_else(|| default_out("sweep"));
            let result = cmd_sweep(&config, &out)?;
            for b in &result.boundary {
                match b.eta_star {
                    Some(e) => println!("L = {:>3}: eta* = {e:.4} (2/L = {:.4})", b.depth, 2.0 / b.depth as f64),
                    None => println!("L = {:>3}: no boundary inside the grid", b.depth),
                }
            }
            Ok(())
        }
        Command::Compare { common, eigenvalues, theory } => {
            let config = resolve(&common)?;
            let out = common.out.unwrap_or_else(|| default_out("compare"));
            let c = cmd_compare(&config, &eigenvalues, &theory, &out)?;
            println!("L1 {:.4e}", c.l1);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            if matches!(e, CliError::AllDiverged) {
                eprintln!("outputs were written; no cell trained stably");
            }
            ExitCode::from(code as u8)
        }
    }
}
