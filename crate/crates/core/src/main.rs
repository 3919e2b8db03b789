use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rewrite_align::config::ExperimentConfig;
use rewrite_align::pipeline::{self, StageOutcome};
use rewrite_align::{Error, Result};

#[derive(Parser)]
#[command(name = "rewrite-align", version, about = "Decoupled-reward post-training on synthetic rewrite tasks")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Root seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Score RL episodes with the judges instead of the reward models.
    #[arg(long, global = true)]
    oracle_rewards: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train and eval splits for every task.
    GenData,
    /// Behavior-clone the gold edit scripts into the reference policy.
    Sft,
    /// Build preference pairs and fit the agreement and coherence reward models.
    TrainRm,
    /// PPO fine-tuning under static and task-specific weights.
    Rl,
    /// Evaluation of the SFT and RL policies on the eval splits.
    Eval,
    /// Side-by-side comparison of the evaluated policies.
    Sxs,
    /// Every stage in order.
    All,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(outcome: StageOutcome) {
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for p in &outcome.outputs {
        println!("{}", p.display());
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let outcome = match cli.command {
        Command::GenData => pipeline::gen_data(&cfg)?,
        Command::Sft => pipeline::sft(&cfg)?,
        Command::TrainRm => pipeline::train_rm(&cfg)?,
        Command::Rl => pipeline::rl(&cfg, cli.oracle_rewards)?,
        Command::Eval => pipeline::evaluate(&cfg)?,
        Command::Sxs => pipeline::sxs(&cfg)?,
        Command::All => {
            for w in pipeline::run_all(&cfg, cli.oracle_rewards)? {
                eprintln!("warning: {w}");
            }
            print!("{}", std::fs::read_to_string(cfg.out_dir.join(pipeline::paths::EVAL_TSV)).map_err(|e| Error::Io {
                path: cfg.out_dir.join(pipeline::paths::EVAL_TSV),
                source: e,
            })?);
            return Ok(());
        }
    };
    report(outcome);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
