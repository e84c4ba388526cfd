//! One function per subcommand. Every command derives all randomness from the
//! root seed, computes its results fully in memory, then writes output files
//! and a manifest recording the effective configuration.

use crate::config::FileConfig;
use anyhow::{bail, Context, Result};
use clap::Args;
use nhde_core::baselines::{
    greedy_ws_construct, pareto_local_search, random_policy, ws_dp_knapsack,
};
use nhde_core::hga::{ModelParams, Variant};
use nhde_core::inference::{
    archive_metrics, duplicates_count, solve, FrontEntry, RunMetrics, SolveOutcome,
};
use nhde_core::io::{
    load_checkpoint, load_front_csv, load_instances, save_checkpoint, save_front_csv,
    save_instances, save_manifest, save_trace_csv, save_train_log_csv, CheckpointMeta, FrontRow,
    Manifest, TrainLogRow,
};
use nhde_core::mpo::MpoMode;
use nhde_core::pareto::{hv_normalized, hv_normalized_clipped, ParetoArchive, ReferenceBox};
use nhde_core::problems::{evaluate, generate, Augmentation, Instance, ProblemKind, Solution};
use nhde_core::rng::SeedStreams;
use nhde_core::scalarization::{uniform_weight_set, DiversityFactor, Weight};
use nhde_core::training::{adapt_preference, meta_train, train_with, Ablation, MetaConfig};
use nhde_core::SolveConfig;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

/// Settings shared by every subcommand (global flags plus the loaded file).
pub struct Global {
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub file: FileConfig,
    pub aug: Option<Augmentation>,
    pub mpo_mode: Option<MpoMode>,
    pub variant: Option<Variant>,
}

impl Global {
    fn streams(&self) -> SeedStreams {
        SeedStreams::new(self.seed)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn manifest(
        &self,
        command: &str,
        config: serde_json::Value,
        inputs: &[&Path],
        outputs: &[&Path],
    ) -> Manifest {
        Manifest {
            command: command.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            root_seed: self.seed,
            threads: self.threads,
            config,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    fn prepare_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating output directory {}", self.out_dir.display()))
    }
}

fn parse_components(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("invalid number '{}'", t.trim()))
        })
        .collect()
}

fn load_instance_at(path: &Path, index: usize) -> Result<Instance> {
    let instances = load_instances(path)
        .with_context(|| format!("loading instances {}", path.display()))?;
    instances.get(index).cloned().ok_or_else(|| {
        anyhow::anyhow!(
            "instance index {index} out of range: {} holds {} instances",
            path.display(),
            instances.len()
        )
    })
}

fn front_rows(front: &[FrontEntry]) -> Vec<FrontRow> {
    front
        .iter()
        .map(|e| FrontRow {
            objectives: e.min_space.clone(),
            solution: e.solution.encode(),
        })
        .collect()
}

fn write_metrics(path: &Path, metrics: &RunMetrics) -> Result<()> {
    let text = serde_json::to_string_pretty(metrics)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn check_model_matches(params: &ModelParams, instance: &Instance) -> Result<()> {
    if params.kind != instance.kind() {
        bail!(
            "checkpoint was trained for {} but the instance is {}",
            params.kind.as_str(),
            instance.kind().as_str()
        );
    }
    if params.objectives != instance.objectives {
        bail!(
            "checkpoint expects M={} objectives but the instance has M={}",
            params.objectives,
            instance.objectives
        );
    }
    Ok(())
}

fn print_run_summary(metrics: &RunMetrics) {
    println!(
        "hv={} nds={} ds={} time_ms={}",
        metrics.hv, metrics.nds, metrics.ds, metrics.time_ms
    );
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Problem family: motsp, mocvrp, or mokp.
    #[arg(long, value_parser = ProblemKind::from_str)]
    pub kind: Option<ProblemKind>,
    /// Instance size (nodes, customers, or items).
    #[arg(long)]
    pub n: Option<usize>,
    /// Objectives per instance.
    #[arg(long = "objectives", visible_alias = "m")]
    pub objectives: Option<usize>,
    /// Number of instances to generate.
    #[arg(long)]
    pub count: Option<usize>,
    /// Output path (defaults to <out-dir>/dataset.jsonl).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn gen(g: &Global, args: &GenArgs) -> Result<()> {
    let kind = args.kind.or(g.file.problem.kind).unwrap_or(ProblemKind::Motsp);
    let n = args.n.unwrap_or_else(|| g.file.problem.n());
    let m = args.objectives.unwrap_or_else(|| g.file.problem.objectives());
    let count = args.count.unwrap_or_else(|| g.file.gen.count());
    if count == 0 {
        bail!("--count must be positive");
    }

    let streams = g.streams();
    let mut instances = Vec::with_capacity(count);
    for i in 0..count {
        let seed = streams.derive("gen-instance", &[i as u64]);
        instances.push(generate(kind, n, m, seed)?);
    }

    g.prepare_out_dir()?;
    let path = args.output.clone().unwrap_or_else(|| g.out("dataset.jsonl"));
    save_instances(&path, &instances)?;
    let config = serde_json::json!({
        "kind": kind, "n": n, "M": m, "count": count,
    });
    save_manifest(
        g.out("manifest.json"),
        &g.manifest("gen", config, &[], &[&path]),
    )?;
    println!(
        "wrote {count} {} instances (n={n}, M={m}) to {}",
        kind.as_str(),
        path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train / meta-train
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Override the configured epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Checkpoint output path (defaults to <out-dir>/checkpoint.json).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn train(g: &Global, args: &TrainArgs) -> Result<()> {
    let model_cfg = g.file.model.build(g.variant);
    if model_cfg.variant != Variant::NhdeP {
        bail!("`train` drives the hypernetwork variant; use `meta-train` for nhde-m");
    }
    let mpo = g.file.mpo.build(g.mpo_mode);
    let mut tcfg = g.file.train.build(&g.file.problem, mpo);
    if let Some(e) = args.epochs {
        tcfg.epochs = e;
    }

    let streams = g.streams();
    let mut params = ModelParams::init(
        model_cfg.clone(),
        tcfg.problem,
        tcfg.objectives,
        &streams,
    )?;

    // Optional held-out validation: one fixed instance, solved with a small
    // preference sweep at a given epoch interval.
    let val_interval = g.file.train.val_interval();
    let val_instance = if val_interval > 0 {
        Some(generate(
            tcfg.problem,
            tcfg.n,
            tcfg.objectives,
            streams.derive("validation", &[]),
        )?)
    } else {
        None
    };
    let val_cfg = SolveConfig {
        subproblems: g.file.train.val_subproblems(),
        mpo: tcfg.mpo.clone(),
        ..SolveConfig::default()
    };
    let checkpoint_interval = g.file.train.checkpoint_interval();

    g.prepare_out_dir()?;
    let mut log: Vec<TrainLogRow> = Vec::new();
    let out_dir = g.out_dir.clone();
    let root_seed = g.seed;
    let report = train_with(&mut params, &tcfg, &streams, &mut |epoch, mean, p| {
        let val_hv = match &val_instance {
            Some(inst) if (epoch + 1) % val_interval == 0 => {
                let vs = SeedStreams::new(streams.derive("validation-solve", &[epoch as u64]));
                let outcome = solve(p, inst, &val_cfg, &vs)?;
                Some(outcome.metrics.hv)
            }
            _ => None,
        };
        log.push(TrainLogRow { step: epoch, mean_reward: mean, val_hv });
        if checkpoint_interval > 0 && (epoch + 1) % checkpoint_interval == 0 {
            let meta = CheckpointMeta {
                root_seed,
                stage: "train".to_string(),
                notes: format!("epoch {}", epoch + 1),
            };
            save_checkpoint(
                out_dir.join(format!("checkpoint-epoch-{}.json", epoch + 1)),
                p,
                &meta,
            )?;
        }
        Ok(())
    })?;

    let ckpt = args.output.clone().unwrap_or_else(|| g.out("checkpoint.json"));
    let meta = CheckpointMeta {
        root_seed: g.seed,
        stage: "train".to_string(),
        notes: format!("{} epochs", report.epochs),
    };
    save_checkpoint(&ckpt, &params, &meta)?;
    let log_path = g.out("train_log.csv");
    save_train_log_csv(&log_path, &log)?;
    let config = serde_json::json!({ "model": model_cfg, "train": tcfg });
    save_manifest(
        g.out("manifest.json"),
        &g.manifest("train", config, &[], &[&ckpt, &log_path]),
    )?;
    let last = report.reward_trace.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} epochs in {} ms; final mean reward {last}; checkpoint {}",
        report.epochs,
        report.wall_ms,
        ckpt.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct MetaTrainArgs {
    /// Override the configured meta-iteration count.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Checkpoint output path (defaults to <out-dir>/checkpoint.json).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn meta_train_cmd(g: &Global, args: &MetaTrainArgs) -> Result<()> {
    let mut model_cfg = g.file.model.build(g.variant);
    if g.variant.is_none() && g.file.model.variant.is_none() {
        // Nothing pinned the variant, so default to the one this command trains.
        model_cfg.variant = Variant::NhdeM;
    }
    if model_cfg.variant != Variant::NhdeM {
        bail!("`meta-train` drives the meta-learned variant; use `train` for nhde-p");
    }
    let mpo = g.file.mpo.build(g.mpo_mode);
    let tcfg = g.file.train.build(&g.file.problem, mpo);
    let mut mcfg: MetaConfig = g.file.meta.build(tcfg);
    if let Some(t) = args.iters {
        mcfg.meta_iters = t;
    }

    let streams = g.streams();
    let mut params = ModelParams::init(
        model_cfg.clone(),
        mcfg.train.problem,
        mcfg.train.objectives,
        &streams,
    )?;
    let report = meta_train(&mut params, &mcfg, &streams)?;

    g.prepare_out_dir()?;
    let ckpt = args.output.clone().unwrap_or_else(|| g.out("checkpoint.json"));
    let meta = CheckpointMeta {
        root_seed: g.seed,
        stage: "meta-train".to_string(),
        notes: format!("{} meta-iterations", mcfg.meta_iters),
    };
    save_checkpoint(&ckpt, &params, &meta)?;
    let log: Vec<TrainLogRow> = report
        .reward_trace
        .iter()
        .enumerate()
        .map(|(i, &r)| TrainLogRow { step: i, mean_reward: r, val_hv: None })
        .collect();
    let log_path = g.out("train_log.csv");
    save_train_log_csv(&log_path, &log)?;
    let config = serde_json::json!({ "model": model_cfg, "meta": mcfg });
    save_manifest(
        g.out("manifest.json"),
        &g.manifest("meta-train", config, &[], &[&ckpt, &log_path]),
    )?;
    println!(
        "meta-trained {} iterations in {} ms; checkpoint {}",
        report.epochs,
        report.wall_ms,
        ckpt.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Meta-trained checkpoint to adapt.
    #[arg(long)]
    pub model: PathBuf,
    /// Instance dataset (JSONL).
    #[arg(long)]
    pub instances: PathBuf,
    /// Index of the instance within the dataset.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Target preference weight, comma-separated (e.g. "0.3,0.7").
    #[arg(long)]
    pub weight: String,
    /// Diversity blend between preference and spread, comma-separated.
    #[arg(long, default_value = "0.5,0.5")]
    pub diversity: String,
    /// Adaptation gradient steps.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Adapted checkpoint output path (defaults to <out-dir>/checkpoint.json).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn finetune(g: &Global, args: &FinetuneArgs) -> Result<()> {
    let (params, lineage) = load_checkpoint(&args.model)
        .with_context(|| format!("loading checkpoint {}", args.model.display()))?;
    if params.config.variant != Variant::NhdeM {
        bail!("`finetune` adapts the meta-learned variant; this checkpoint is nhde-p");
    }
    let instance = load_instance_at(&args.instances, args.index)?;
    check_model_matches(&params, &instance)?;

    let weight = Weight::new(parse_components(&args.weight)?)?;
    if weight.len() != instance.objectives {
        bail!(
            "weight has {} components but the instance has M={}",
            weight.len(),
            instance.objectives
        );
    }
    let dv = parse_components(&args.diversity)?;
    if dv.len() != 2 {
        bail!("--diversity takes exactly two components");
    }
    let div = DiversityFactor::new(dv[0], dv[1])?;

    let mpo = g.file.mpo.build(g.mpo_mode);
    let solve_cfg = g.file.solve.build(instance.kind(), mpo.clone(), g.aug);
    let bx = ReferenceBox::for_problem(instance.kind(), instance.n, instance.objectives)?;
    let streams = g.streams();
    let mut archive: ParetoArchive<Solution> = ParetoArchive::new();
    let start = Instant::now();
    let adapted = adapt_preference(
        &params,
        &instance,
        &mut archive,
        &weight,
        div,
        &bx,
        &mpo,
        Ablation::default(),
        args.steps,
        solve_cfg.finetune_lr,
        solve_cfg.weight_decay,
        &streams,
        &[],
    )?;
    let wall_ms = start.elapsed().as_millis() as u64;

    g.prepare_out_dir()?;
    let ckpt = args.output.clone().unwrap_or_else(|| g.out("checkpoint.json"));
    let meta = CheckpointMeta {
        root_seed: g.seed,
        stage: "finetune".to_string(),
        notes: format!(
            "from stage '{}'; weight {:?}; {} steps",
            lineage.stage, weight.0, args.steps
        ),
    };
    save_checkpoint(&ckpt, &adapted, &meta)?;
    let config = serde_json::json!({
        "weight": weight.0, "diversity": div.0, "steps": args.steps,
        "lr": solve_cfg.finetune_lr, "weight_decay": solve_cfg.weight_decay,
        "index": args.index,
    });
    save_manifest(
        g.out("manifest.json"),
        &g.manifest("finetune", config, &[&args.model, &args.instances], &[&ckpt]),
    )?;
    println!(
        "adapted {} steps in {wall_ms} ms; archive holds {} points; checkpoint {}",
        args.steps,
        archive.len(),
        ckpt.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// solve / ablate
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Instance dataset (JSONL).
    #[arg(long)]
    pub instances: PathBuf,
    /// Index of the instance within the dataset.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Override the number of scheduled subproblems.
    #[arg(long = "subproblems", visible_alias = "n-sub")]
    pub subproblems: Option<usize>,
}

pub fn solve_cmd(g: &Global, args: &SolveArgs) -> Result<()> {
    let outcome = run_solve(g, &args.model, &args.instances, args.index, args.subproblems, Ablation::default(), &DropRelations::default(), "solve")?;
    print_run_summary(&outcome.metrics);
    Ok(())
}

#[derive(Debug, Args, Default)]
pub struct DropRelations {
    /// Disable node-to-point attention at inference.
    #[arg(long)]
    pub drop_n2p: bool,
    /// Disable point-to-node attention at inference.
    #[arg(long)]
    pub drop_p2n: bool,
    /// Disable point-to-point attention at inference.
    #[arg(long)]
    pub drop_p2p: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Drop hypervolume shaping: plain scalarized rewards, empty front.
    #[arg(long)]
    pub no_indicator: bool,
    /// Keep only the best-scalarized rollout per subproblem.
    #[arg(long)]
    pub no_mpo: bool,
    /// Fix the preference to uniform instead of sweeping.
    #[arg(long)]
    pub no_decomposition: bool,
    #[command(flatten)]
    pub drop: DropRelations,
}

pub fn ablate(g: &Global, args: &AblateArgs) -> Result<()> {
    let ablation = Ablation {
        no_indicator: args.no_indicator,
        no_mpo: args.no_mpo,
        no_decomposition: args.no_decomposition,
    };
    let outcome = run_solve(
        g,
        &args.solve.model,
        &args.solve.instances,
        args.solve.index,
        args.solve.subproblems,
        ablation,
        &args.drop,
        "ablate",
    )?;
    print_run_summary(&outcome.metrics);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_solve(
    g: &Global,
    model: &Path,
    instances: &Path,
    index: usize,
    subproblems: Option<usize>,
    ablation: Ablation,
    drop: &DropRelations,
    command: &str,
) -> Result<SolveOutcome> {
    let (mut params, _) = load_checkpoint(model)
        .with_context(|| format!("loading checkpoint {}", model.display()))?;
    let instance = load_instance_at(instances, index)?;
    check_model_matches(&params, &instance)?;

    // Relation drops only ever turn trained attention paths off; the encoder
    // has no weights for paths that were off at training time.
    if drop.drop_n2p {
        if !params.config.use_n2p {
            bail!("--drop-n2p: the checkpoint already has node-to-point attention off");
        }
        params.config.use_n2p = false;
    }
    if drop.drop_p2n {
        if !params.config.use_p2n {
            bail!("--drop-p2n: the checkpoint already has point-to-node attention off");
        }
        params.config.use_p2n = false;
    }
    if drop.drop_p2p {
        if !params.config.use_p2p {
            bail!("--drop-p2p: the checkpoint already has point-to-point attention off");
        }
        params.config.use_p2p = false;
    }

    let mpo = g.file.mpo.build(g.mpo_mode);
    let mut cfg = g.file.solve.build(instance.kind(), mpo, g.aug);
    cfg.ablation = ablation;
    if let Some(n) = subproblems {
        cfg.subproblems = n;
    }

    let streams = g.streams();
    let outcome = solve(&params, &instance, &cfg, &streams)?;

    g.prepare_out_dir()?;
    let front_path = g.out("front.csv");
    save_front_csv(&front_path, &front_rows(&outcome.front))?;
    let metrics_path = g.out("metrics.json");
    write_metrics(&metrics_path, &outcome.metrics)?;
    let trace_path = g.out("trace.csv");
    save_trace_csv(&trace_path, &outcome.trace)?;
    let config = serde_json::json!({
        "solve": cfg, "model": params.config, "index": index,
    });
    save_manifest(
        g.out("manifest.json"),
        &g.manifest(
            command,
            config,
            &[model, instances],
            &[&front_path, &metrics_path, &trace_path],
        ),
    )?;
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    WsDp,
    Pls,
    Greedy,
    Random,
}

impl FromStr for BaselineMethod {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ws-dp" => Ok(BaselineMethod::WsDp),
            "pls" => Ok(BaselineMethod::Pls),
            "greedy" => Ok(BaselineMethod::Greedy),
            "random" => Ok(BaselineMethod::Random),
            other => bail!("unknown baseline method '{other}' (ws-dp, pls, greedy, random)"),
        }
    }
}

impl BaselineMethod {
    fn as_str(&self) -> &'static str {
        match self {
            BaselineMethod::WsDp => "ws-dp",
            BaselineMethod::Pls => "pls",
            BaselineMethod::Greedy => "greedy",
            BaselineMethod::Random => "random",
        }
    }
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Method: ws-dp (knapsack scalarized optimum), pls (local search),
    /// greedy (scalarized sweep), or random.
    #[arg(long, value_parser = BaselineMethod::from_str)]
    pub method: BaselineMethod,
    /// Instance dataset (JSONL).
    #[arg(long)]
    pub instances: PathBuf,
    /// Index of the instance within the dataset.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Preference weight for ws-dp, comma-separated.
    #[arg(long, default_value = "0.5,0.5")]
    pub weight: String,
}

pub fn baseline(g: &Global, args: &BaselineArgs) -> Result<()> {
    let instance = load_instance_at(&args.instances, args.index)?;
    let m = instance.objectives;
    let bx = ReferenceBox::for_problem(instance.kind(), instance.n, m)?;
    let streams = g.streams();
    let start = Instant::now();

    // Each method yields the solutions it generated (for duplicate counting)
    // plus an archive of the non-dominated ones.
    let mut generated: Vec<Vec<f64>> = Vec::new();
    let mut archive: ParetoArchive<Solution> = ParetoArchive::new();
    let mut scalar_report: Option<String> = None;

    match args.method {
        BaselineMethod::WsDp => {
            let weight = Weight::new(parse_components(&args.weight)?)?;
            let resolution = g.file.baseline.resolution();
            let (value, solution) = ws_dp_knapsack(&instance, &weight, resolution)?;
            // The optimum is exact for the floor-discretized capacity, which
            // admits slightly more sets than the continuous one; on the rare
            // boundary case the witness set is not continuously feasible and
            // only the (still valid upper-bound) value is reported.
            match evaluate(&instance, &solution) {
                Ok(v) => {
                    let objs = v.min_space();
                    generated.push(objs.clone());
                    archive.insert(objs, solution);
                }
                Err(e) => eprintln!(
                    "note: optimum attained only at the discretized capacity boundary ({e}); front left empty"
                ),
            }
            scalar_report = Some(format!("{value}"));
        }
        BaselineMethod::Greedy => {
            let count = g.file.baseline.greedy_weights();
            let h = nhde_core::scalarization::granularity_for_count(m, count)?;
            for w in uniform_weight_set(m, h)? {
                let solution = greedy_ws_construct(&instance, &w)?;
                let objs = evaluate(&instance, &solution)?.min_space();
                generated.push(objs.clone());
                archive.insert(objs, solution);
            }
        }
        BaselineMethod::Random => {
            let count = g.file.baseline.random_count();
            for solution in random_policy(&instance, count, &streams)? {
                let objs = evaluate(&instance, &solution)?.min_space();
                generated.push(objs.clone());
                archive.insert(objs, solution);
            }
        }
        BaselineMethod::Pls => {
            let seeds = random_policy(&instance, g.file.baseline.pls_seeds(), &streams)?;
            archive = pareto_local_search(
                &instance,
                &seeds,
                g.file.baseline.pls_iterations(),
                &streams,
            )?;
            // The search only reports its final archive, so the duplicate
            // count covers nothing here.
        }
    }

    let (hv, nds) = archive_metrics(&archive, &bx);
    let metrics = RunMetrics {
        hv,
        nds,
        ds: duplicates_count(&generated),
        time_ms: start.elapsed().as_millis(),
    };

    let mut rows: Vec<FrontRow> = archive
        .entries()
        .iter()
        .map(|e| FrontRow {
            objectives: e.objectives.clone(),
            solution: e.payload.encode(),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.objectives[0]
            .partial_cmp(&b.objectives[0])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    g.prepare_out_dir()?;
    let front_path = g.out("front.csv");
    save_front_csv(&front_path, &rows)?;
    let metrics_path = g.out("metrics.json");
    write_metrics(&metrics_path, &metrics)?;
    let config = serde_json::json!({
        "method": args.method.as_str(),
        "index": args.index,
        "baseline": {
            "resolution": g.file.baseline.resolution(),
            "pls_iterations": g.file.baseline.pls_iterations(),
            "pls_seeds": g.file.baseline.pls_seeds(),
            "random_count": g.file.baseline.random_count(),
            "greedy_weights": g.file.baseline.greedy_weights(),
        },
        "weight": args.weight,
    });
    save_manifest(
        g.out("manifest.json"),
        &g.manifest(
            "baseline",
            config,
            &[&args.instances],
            &[&front_path, &metrics_path],
        ),
    )?;
    if let Some(value) = scalar_report {
        println!("{value}");
    } else {
        print_run_summary(&metrics);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Instance dataset (JSONL).
    #[arg(long)]
    pub instances: PathBuf,
    /// Evaluate only the first N instances.
    #[arg(long)]
    pub limit: Option<usize>,
}

pub fn eval(g: &Global, args: &EvalArgs) -> Result<()> {
    let (params, _) = load_checkpoint(&args.model)
        .with_context(|| format!("loading checkpoint {}", args.model.display()))?;
    let mut instances = load_instances(&args.instances)
        .with_context(|| format!("loading instances {}", args.instances.display()))?;
    if let Some(limit) = args.limit {
        instances.truncate(limit);
    }
    if instances.is_empty() {
        bail!("no instances to evaluate in {}", args.instances.display());
    }
    for inst in &instances {
        check_model_matches(&params, inst)?;
    }

    let mpo = g.file.mpo.build(g.mpo_mode);
    let cfg = g.file.solve.build(instances[0].kind(), mpo, g.aug);
    let streams = g.streams();

    // Each instance gets an independent derived stream, so the per-instance
    // work is order-free and safe to fan out across threads.
    let jobs: Vec<(usize, &Instance, u64)> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| (i, inst, streams.derive("eval-instance", &[i as u64])))
        .collect();
    let run = |(i, inst, seed): &(usize, &Instance, u64)| -> Result<(usize, RunMetrics)> {
        let outcome = solve(&params, inst, &cfg, &SeedStreams::new(*seed))?;
        Ok((*i, outcome.metrics))
    };
    let mut results: Vec<(usize, RunMetrics)> = if g.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(g.threads)
            .build()
            .context("building thread pool")?;
        pool.install(|| {
            use rayon::prelude::*;
            jobs.par_iter().map(run).collect::<Result<Vec<_>>>()
        })?
    } else {
        jobs.iter().map(run).collect::<Result<Vec<_>>>()?
    };
    results.sort_by_key(|(i, _)| *i);

    let n = results.len() as f64;
    let mean_hv = results.iter().map(|(_, m)| m.hv).sum::<f64>() / n;
    let mean_nds = results.iter().map(|(_, m)| m.nds as f64).sum::<f64>() / n;
    let mean_ds = results.iter().map(|(_, m)| m.ds as f64).sum::<f64>() / n;
    let mean_time = results.iter().map(|(_, m)| m.time_ms as f64).sum::<f64>() / n;

    g.prepare_out_dir()?;
    let eval_path = g.out("eval.csv");
    let mut text = String::from("instance,hv,nds,ds,time_ms\n");
    for (i, m) in &results {
        text.push_str(&format!("{i},{},{},{},{}\n", m.hv, m.nds, m.ds, m.time_ms));
    }
    text.push_str(&format!("mean,{mean_hv},{mean_nds},{mean_ds},{mean_time}\n"));
    std::fs::write(&eval_path, text)
        .with_context(|| format!("writing {}", eval_path.display()))?;

    let summary_path = g.out("summary.json");
    let summary = serde_json::json!({
        "count": results.len(),
        "mean_hv": mean_hv,
        "mean_nds": mean_nds,
        "mean_ds": mean_ds,
        "mean_time_ms": mean_time,
    });
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    let config = serde_json::json!({ "solve": cfg, "model": params.config });
    save_manifest(
        g.out("manifest.json"),
        &g.manifest(
            "eval",
            config,
            &[&args.model, &args.instances],
            &[&eval_path, &summary_path],
        ),
    )?;
    println!(
        "evaluated {} instances: mean hv={mean_hv} nds={mean_nds} ds={mean_ds} time_ms={mean_time}",
        results.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// hv
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct HvArgs {
    /// Front CSV (columns f1..fM, optional trailing solution column).
    #[arg(long)]
    pub front: PathBuf,
    /// Reference point (worst corner), comma-separated.
    #[arg(long)]
    pub reference: String,
    /// Ideal point (best corner), comma-separated; defaults to the origin.
    #[arg(long)]
    pub ideal: Option<String>,
    /// Clip out-of-box points to zero contribution instead of erroring.
    #[arg(long)]
    pub clip: bool,
}

pub fn hv(g: &Global, args: &HvArgs) -> Result<()> {
    let rows = load_front_csv(&args.front)
        .with_context(|| format!("loading front {}", args.front.display()))?;
    let points: Vec<Vec<f64>> = rows.into_iter().map(|r| r.objectives).collect();
    let r = parse_components(&args.reference)?;
    let z = match &args.ideal {
        Some(text) => parse_components(text)?,
        None => vec![0.0; r.len()],
    };
    let bx = ReferenceBox::new(r.clone(), z.clone())?;
    let value = if args.clip {
        hv_normalized_clipped(&points, &bx)
    } else {
        hv_normalized(&points, &bx)?
    };

    g.prepare_out_dir()?;
    let config = serde_json::json!({
        "reference": r, "ideal": z, "clip": args.clip, "points": points.len(),
    });
    save_manifest(
        g.out("manifest.json"),
        &g.manifest("hv", config, &[&args.front], &[]),
    )?;
    println!("{value}");
    Ok(())
}
