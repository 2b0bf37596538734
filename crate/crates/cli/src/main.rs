//! `floodrisk` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use floodrisk_core::pipeline::{run_pipeline, PipelineConfig, Stage};
use floodrisk_core::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Synth,
    LearnGraph,
    Cluster,
    Rate,
    Analyze,
    All,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Self {
        match c {
            Command::Synth => Stage::Synth,
            Command::LearnGraph => Stage::LearnGraph,
            Command::Cluster => Stage::Cluster,
            Command::Rate => Stage::Rate,
            Command::Analyze => Stage::Analyze,
            Command::All => Stage::All,
        }
    }
}

/// Flood-risk rating of gridded urban areas.
#[derive(Debug, Parser)]
#[command(name = "floodrisk", version)]
struct Cli {
    /// Pipeline stage to run.
    #[arg(value_enum)]
    command: Command,
    /// `key = value` configuration file; flags override its settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of clusters.
    #[arg(long)]
    k: Option<usize>,
    /// Neighbours per cell in the anchor graph.
    #[arg(long)]
    knn: Option<usize>,
    /// Anchor bootstrapping decay.
    #[arg(long)]
    tau: Option<f64>,
    /// Weight of the assignment KL term.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the ancillary KL term.
    #[arg(long)]
    beta: Option<f64>,
    /// Clustering training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Autoencoder pretraining epochs.
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    /// Permutations for the Moran's I test.
    #[arg(long)]
    perms: Option<usize>,
    /// Smallest city population included in the city summary.
    #[arg(long)]
    min_city_pop: Option<f64>,
}

impl Cli {
    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = self.k {
            cfg.cluster.clusters = v;
        }
        if let Some(v) = self.knn {
            cfg.graph.knn_k = v;
        }
        if let Some(v) = self.tau {
            cfg.graph.tau = v;
        }
        if let Some(v) = self.alpha {
            cfg.cluster.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.cluster.beta = v;
        }
        if let Some(v) = self.epochs {
            cfg.cluster.epochs = v;
        }
        if let Some(v) = self.pretrain_epochs {
            cfg.cluster.pretrain_epochs = v;
        }
        if let Some(v) = self.perms {
            cfg.permutations = v;
        }
        if let Some(v) = self.min_city_pop {
            cfg.min_city_population = v;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = cli.config().and_then(|cfg| run_pipeline(cli.command.into(), &cfg));
    match result {
        Ok(summary) => {
            for path in &summary.written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("floodrisk {}: {e}", Stage::from(cli.command));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
