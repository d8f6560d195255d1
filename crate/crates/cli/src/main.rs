use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pat_cli::{build_config, read_overrides, DEFAULT_SNAPSHOTS};

#[derive(Parser)]
#[command(
    name = "pat",
    version,
    about = "Photoacoustic tomography with variable sound speed"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate boundary data for a field (default: the configured phantom).
    Forward {
        #[command(flatten)]
        common: Common,
        /// Field file; omitted means the phantom.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Apply the adjoint to a trace file.
    Adjoint {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Reconstruct from a trace file.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// True field, enables error logging.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run a test case end to end.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Iterations whose reconstructions are saved.
        #[arg(long, value_delimiter = ',')]
        snapshot_iters: Option<Vec<usize>>,
    },
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    testcase: Option<String>,
    /// Extra assignment, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<pat_core::experiments::ExperimentConfig> {
        let mut overrides = match &self.config {
            Some(p) => read_overrides(p).with_context(|| format!("reading {}", p.display()))?,
            None => Vec::new(),
        };
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{s}`"))?;
            overrides.push((k.trim().into(), v.trim().into()));
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("method", self.method.clone()),
            ("max_iter", self.iters.map(|v| v.to_string())),
            ("noise", self.noise.map(|v| v.to_string())),
            ("testcase", self.testcase.clone()),
        ];
        overrides.extend(
            flags
                .into_iter()
                .filter_map(|(k, v)| v.map(|v| (k.to_string(), v))),
        );
        Ok(build_config(&overrides)?)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let manifest = match &cli.command {
        Command::Forward { common, input } => {
            pat_cli::cmd_forward(&common.config()?, input.as_deref(), &common.out)?
        }
        Command::Adjoint { common, input } => {
            pat_cli::cmd_adjoint(&common.config()?, input, &common.out)?
        }
        Command::Reconstruct {
            common,
            input,
            truth,
        } => pat_cli::cmd_reconstruct(&common.config()?, input, truth.as_deref(), &common.out)?,
        Command::Experiment {
            common,
            snapshot_iters,
        } => {
            let snaps = snapshot_iters
                .clone()
                .unwrap_or_else(|| DEFAULT_SNAPSHOTS.to_vec());
            pat_cli::cmd_experiment(&common.config()?, &snaps, &common.out)?
        }
    };
    log::info!(
        "wrote {} files to {} in {:.1}s",
        manifest.outputs.len(),
        cli_out(&cli).display(),
        manifest.wall_clock_seconds
    );
    Ok(())
}

fn cli_out(cli: &Cli) -> &PathBuf {
    match &cli.command {
        Command::Forward { common, .. }
        | Command::Adjoint { common, .. }
        | Command::Reconstruct { common, .. }
        | Command::Experiment { common, .. } => &common.out,
    }
}
