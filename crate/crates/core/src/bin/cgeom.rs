//! Command-line front end for the experiment runners.

use clap::{Args, Parser, Subcommand};
use contrastive_geometry::experiments::selftest::SelftestOptions;
use contrastive_geometry::experiments::{execute, ExperimentConfig, ExperimentKind};
use contrastive_geometry::io::{read_config, Config};
use contrastive_geometry::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cgeom", version, about = "Contrastive geometry experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Alignment of finite-N InfoNCE gradients with a large-N reference.
    GradConsistency(RunArgs),
    /// Cap mass of Gibbs equilibria and trained particle clouds on the sphere.
    GibbsSphere(RunArgs),
    /// Multimodal gap as a function of latent misalignment.
    MmGap(RunArgs),
    /// Finite-difference, identity and probe suites.
    Selftest(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed_base: Option<u64>,
    /// `key=value`, applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for replicates.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

fn build_config(kind: ExperimentKind, args: &RunArgs) -> contrastive_geometry::Result<ExperimentConfig> {
    let mut params = match &args.config {
        Some(path) => read_config(path)?,
        None => Config::parse("", std::path::Path::new("<command line>"))?,
    };
    for o in &args.overrides {
        params.apply_override(o)?;
    }
    if let Some(s) = args.seeds {
        params.set("seeds", &s.to_string());
    }
    if let Some(b) = args.seed_base {
        params.set("seed_base", &b.to_string());
    }
    if let Some(j) = args.jobs {
        params.set("jobs", &j.to_string());
    }
    if let Some(d) = &args.out {
        params.set("out_dir", &d.to_string_lossy());
    }
    ExperimentConfig::from_params(kind, params)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::GradConsistency(a) => (ExperimentKind::GradConsistency, a),
        Command::GibbsSphere(a) => (ExperimentKind::GibbsSphere, a),
        Command::MmGap(a) => (ExperimentKind::MmGap, a),
        Command::Selftest(a) => (ExperimentKind::Selftest, a),
    };
    let cfg = match build_config(kind, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = SelftestOptions { corrupt_gradient: args.corrupt_gradient };
    match execute(&cfg, &opts) {
        Ok(Some(report)) => {
            println!("{report}");
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Ok(None) => {
            println!("wrote {}", cfg.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e @ (Error::Parse { .. } | Error::InvalidArgument(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
