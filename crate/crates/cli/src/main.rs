use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mndbn_cli::commands::{self, Command, REPORT_DIR};
use mndbn_cli::config::{load_config, RunConfig};
use mndbn_cli::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "mndbn",
    version,
    about = "Train and evaluate group-sparse RBMs and DBNs"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// JSON config or a previous run's manifest.json.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides config.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides config.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for matrix products.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a single (mixed-norm) RBM.
    TrainRbm,
    /// Greedy layer-wise pre-training of a stack.
    PretrainDbn,
    /// Attach a softmax head and fine-tune.
    Finetune {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Accuracy and confusion matrix of a model with a head.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Weight tiles, activation histograms and result tables for a run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn resolve(cli: &Cli, model: Option<&PathBuf>) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(m) = model {
        cfg.model = Some(m.clone());
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.normalize()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    cfg.out_dir.clone().ok_or_else(|| {
        CliError::Config("out_dir: no output directory (--out or config.out_dir)".into())
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let (command, model) = match &cli.command {
        Cmd::TrainRbm => (Command::TrainRbm, None),
        Cmd::PretrainDbn => (Command::PretrainDbn, None),
        Cmd::Finetune { model } => (Command::Finetune, model.as_ref()),
        Cmd::Evaluate { model } => (Command::Evaluate, model.as_ref()),
        Cmd::Report { .. } => (Command::Report, None),
    };
    let mut cfg = resolve(&cli, model)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    match &cli.command {
        Cmd::Report { run_dir } => {
            let out = cfg
                .out_dir
                .clone()
                .unwrap_or_else(|| run_dir.join(REPORT_DIR));
            cfg.out_dir = Some(out.clone());
            commands::report(&cfg, run_dir, &out)
        }
        _ => {
            let out = out_dir(&cfg)?;
            match command {
                Command::TrainRbm => commands::train_rbm(&cfg, &out),
                Command::PretrainDbn => commands::pretrain_dbn(&cfg, &out),
                Command::Finetune => commands::finetune(&cfg, &out),
                Command::Evaluate => commands::evaluate(&cfg, &out),
                Command::Report => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mndbn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
