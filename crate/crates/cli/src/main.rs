//! `nhde` — benchmark CLI for the preference-conditioned multi-objective
//! optimization engine. Subcommands cover dataset generation, training,
//! meta-training, per-preference adaptation, solving, ablations, classical
//! baselines, batch evaluation, and hypervolume scoring of saved fronts.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::Global;
use config::FileConfig;
use nhde_core::hga::Variant;
use nhde_core::mpo::MpoMode;
use nhde_core::problems::Augmentation;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "nhde",
    version,
    about = "Decomposition + hypervolume-shaped policy search for multi-objective routing and packing"
)]
struct Cli {
    /// TOML configuration file; flags override its sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads for batch evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Instance augmentation at inference: none, partial, or full.
    #[arg(long, global = true, value_parser = Augmentation::from_str)]
    aug: Option<Augmentation>,
    /// Archive update mode: literal or archive-preserving.
    #[arg(long, global = true, value_parser = MpoMode::from_str)]
    mpo_mode: Option<MpoMode>,
    /// Model variant: nhde-p (hypernetwork) or nhde-m (meta-learned).
    #[arg(long, global = true, value_parser = Variant::from_str)]
    variant: Option<Variant>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a JSONL dataset of random instances.
    Gen(commands::GenArgs),
    /// Train the hypernetwork variant with hypervolume-shaped rewards.
    Train(commands::TrainArgs),
    /// Meta-train the adaptable variant across preference tasks.
    MetaTrain(commands::MetaTrainArgs),
    /// Adapt a meta-trained checkpoint to one preference on one instance.
    Finetune(commands::FinetuneArgs),
    /// Sweep scheduled preferences over one instance and emit the front.
    Solve(commands::SolveArgs),
    /// Solve with components disabled (rewards, archive, decomposition, attention paths).
    Ablate(commands::AblateArgs),
    /// Run a classical baseline: ws-dp, pls, greedy, or random.
    Baseline(commands::BaselineArgs),
    /// Solve every instance in a dataset and report aggregate metrics.
    Eval(commands::EvalArgs),
    /// Score a saved front: normalized hypervolume inside a reference box.
    Hv(commands::HvArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let global = Global {
        seed: cli.seed,
        threads: cli.threads.max(1),
        out_dir: cli.out_dir,
        file,
        aug: cli.aug,
        mpo_mode: cli.mpo_mode,
        variant: cli.variant,
    };
    match &cli.command {
        Command::Gen(args) => commands::gen(&global, args),
        Command::Train(args) => commands::train(&global, args),
        Command::MetaTrain(args) => commands::meta_train_cmd(&global, args),
        Command::Finetune(args) => commands::finetune(&global, args),
        Command::Solve(args) => commands::solve_cmd(&global, args),
        Command::Ablate(args) => commands::ablate(&global, args),
        Command::Baseline(args) => commands::baseline(&global, args),
        Command::Eval(args) => commands::eval(&global, args),
        Command::Hv(args) => commands::hv(&global, args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
