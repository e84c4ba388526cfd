//! Policy training: preference-decomposed REINFORCE with a shared multi-start
//! baseline and a hypervolume-shaped reward, plus the meta-training loop and
//! the per-preference adaptation used by the direct-decoder variant.

use crate::autodiff::{GradStore, Tape};
use crate::error::{invalid, Error, Result};
use crate::hga::{decoder_weights, encode, rollout, BoundParams, ModelParams, RolloutMode, Variant};
use crate::mpo::{mpo_update, select_top_j, select_top_k, MpoConfig, SurrogateFront, UpdateStats};
use crate::pareto::{hv_normalized_clipped, InsertOutcome, ParetoArchive, ReferenceBox};
use crate::problems::{evaluate, feasible_actions, generate, Instance, ProblemKind, Solution};
use crate::rng::SeedStreams;
use crate::scalarization::{sample_training_preference, ws_scalarize, DiversityFactor, Weight};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

/// Adam with coupled (L2-style) weight decay: the decay term joins the raw
/// gradient before the moment updates, and every stored tensor decays each
/// step whether or not the loss touched it.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &GradStore) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, p) in params.tensors.iter_mut() {
            let zero = Array2::zeros(p.dim());
            let raw = grads.map.get(name).unwrap_or(&zero);
            let g = raw + &(&*p * self.weight_decay);
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(p.dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(p.dim()));
            *m = &*m * self.beta1 + &g * (1.0 - self.beta1);
            *v = &*v * self.beta2 + &g.mapv(|x| x * x) * (1.0 - self.beta2);
            for ((pv, mv), vv) in p.iter_mut().zip(m.iter()).zip(v.iter()) {
                let mhat = mv / bc1;
                let vhat = vv / bc2;
                *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Component ablations, applied identically at training and solve time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Drop the hypervolume shaping entirely: the reward is the scalarized
    /// objective alone and the model is conditioned on an empty front (only
    /// the reference corner).
    pub no_indicator: bool,
    /// Replace the candidate-pool archive update with keeping only the single
    /// best-reward rollout per subproblem.
    pub no_mpo: bool,
    /// Fix the weight vector to uniform instead of decomposing.
    pub no_decomposition: bool,
}

impl Ablation {
    /// Preference actually used after ablation overrides.
    pub fn apply(
        &self,
        weight: Weight,
        div: DiversityFactor,
        objectives: usize,
    ) -> (Weight, DiversityFactor) {
        let weight = if self.no_decomposition {
            Weight(vec![1.0 / objectives as f64; objectives])
        } else {
            weight
        };
        let div = if self.no_indicator { DiversityFactor([1.0, 0.0]) } else { div };
        (weight, div)
    }

    /// Surrogate-front size used for model conditioning.
    pub fn front_k(&self, k: usize) -> usize {
        if self.no_indicator {
            0
        } else {
            k
        }
    }
}

/// Reward for one rollout under one preference: the negated, box-normalized
/// weighted sum plus the diversity-weighted normalized hypervolume of the
/// surrogate front with the rollout's objective vector added.
pub fn reward(
    f_min: &[f64],
    weight: &Weight,
    div: DiversityFactor,
    front: &SurrogateFront,
    bx: &ReferenceBox,
) -> f64 {
    let g = ws_scalarize(f_min, weight);
    let denom: f64 = weight
        .0
        .iter()
        .zip(bx.r.iter().zip(&bx.z))
        .map(|(w, (r, z))| w * (r - z))
        .sum();
    let g_norm = g / denom;
    let hv = if div.0[1] == 0.0 {
        0.0
    } else {
        let mut pts = front.points.clone();
        pts.push(f_min.to_vec());
        hv_normalized_clipped(&pts, bx)
    };
    -div.0[0] * g_norm + div.0[1] * hv
}

/// Feasible first actions: every node for tours, every item that fits for
/// knapsacks. One rollout starts from each.
pub fn rollout_starts(instance: &Instance) -> Result<Vec<usize>> {
    let mask0 = feasible_actions(instance, &Solution(Vec::new()))?;
    let starts: Vec<usize> = (0..instance.n).filter(|&a| mask0[a]).collect();
    if starts.is_empty() {
        return Err(Error::Infeasible("instance admits no first action".into()));
    }
    Ok(starts)
}

/// Solutions and rewards of one training rollout batch on one instance.
#[derive(Debug, Clone)]
pub struct InstanceRollout {
    pub solutions: Vec<Solution>,
    /// Minimization-space objective vectors, aligned with `solutions`.
    pub objectives: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub mean_reward: f64,
}

/// Samples one multi-start rollout batch, scores it, and accumulates the
/// REINFORCE gradient of `-sum_s (R_s - mean R) * logp_s * batch_scale` into
/// `store`. The shared baseline is the mean reward over this instance's
/// starts.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_instance_gradient(
    params: &ModelParams,
    instance: &Instance,
    front: &SurrogateFront,
    weight: &Weight,
    div: DiversityFactor,
    bx: &ReferenceBox,
    batch_scale: f64,
    rng: &mut impl Rng,
    store: &mut GradStore,
) -> Result<InstanceRollout> {
    let cfg = &params.config;
    let starts = rollout_starts(instance)?;
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params);
    let emb = encode(&mut tape, &bound, cfg, instance, &front.model_points(), bx, None);
    let dec = decoder_weights(
        &mut tape,
        &bound,
        cfg,
        instance.kind(),
        params.objectives,
        weight,
        div,
    )?;
    let out = rollout(
        &mut tape,
        cfg,
        instance,
        &emb,
        &dec,
        &starts,
        RolloutMode::Sample,
        true,
        rng,
    )?;

    let mut objectives = Vec::with_capacity(out.solutions.len());
    let mut rewards = Vec::with_capacity(out.solutions.len());
    for sol in &out.solutions {
        let f = evaluate(instance, sol)?.min_space();
        rewards.push(reward(&f, weight, div, front, bx));
        objectives.push(f);
    }
    let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;

    let coeffs: Vec<f64> = rewards
        .iter()
        .map(|r| -(r - mean_reward) * batch_scale)
        .collect();
    let total = out.total_logp.expect("recording rollout returns totals");
    let c = tape.constant(Array2::from_shape_fn((1, coeffs.len()), |(_, i)| coeffs[i]));
    let loss = tape.matmul(c, total);
    tape.backward(loss, store);

    Ok(InstanceRollout { solutions: out.solutions, objectives, rewards, mean_reward })
}

/// Feeds one rollout batch into the archive: the candidate-pool update, or —
/// under the no-MPO ablation — insertion of only the best-reward solution.
pub fn update_archive(
    archive: &mut ParetoArchive<Solution>,
    front: &SurrogateFront,
    ro: &InstanceRollout,
    weight: &Weight,
    mpo: &MpoConfig,
    no_mpo: bool,
) -> UpdateStats {
    if no_mpo {
        let best = ro
            .rewards
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("rollout is never empty");
        let mut stats = UpdateStats::default();
        match archive.insert(ro.objectives[best].clone(), ro.solutions[best].clone()) {
            InsertOutcome::Accepted { evicted } => {
                stats.admitted = 1;
                stats.evicted = evicted;
            }
            InsertOutcome::Duplicate => stats.duplicates = 1,
            InsertOutcome::Dominated => stats.dominated = 1,
        }
        return stats;
    }
    let kept = select_top_j(&ro.objectives, weight, mpo.j);
    let candidates: Vec<(Vec<f64>, Solution)> = kept
        .into_iter()
        .map(|i| (ro.objectives[i].clone(), ro.solutions[i].clone()))
        .collect();
    mpo_update(archive, front, candidates, mpo.mode)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub problem: ProblemKind,
    pub n: usize,
    #[serde(rename = "M")]
    pub objectives: usize,
    /// Epochs (instance batches).
    #[serde(rename = "E")]
    pub epochs: usize,
    /// Instances per batch.
    #[serde(rename = "B")]
    pub batch: usize,
    /// Preference samples per batch.
    #[serde(rename = "N_prime")]
    pub inner: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub mpo: MpoConfig,
    #[serde(default)]
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            problem: ProblemKind::Motsp,
            n: 10,
            objectives: 2,
            epochs: 50,
            batch: 8,
            inner: 5,
            lr: 1e-4,
            weight_decay: 1e-6,
            mpo: MpoConfig::default(),
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || self.inner == 0 {
            return Err(invalid("epochs, batch, and inner must be positive"));
        }
        if !(self.lr > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        if params.kind != self.problem || params.objectives != self.objectives {
            return Err(invalid("model was initialized for a different problem"));
        }
        Ok(())
    }
}

/// Published learning rates: knapsack training runs an order of magnitude
/// cooler than the routing problems.
pub fn default_lr(kind: ProblemKind) -> f64 {
    match kind {
        ProblemKind::Mokp => 1e-5,
        _ => 1e-4,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    /// Mean rollout reward per epoch (across batch, preferences, and starts).
    pub reward_trace: Vec<f64>,
    pub wall_ms: u128,
}

/// Preference-sampling training loop: per epoch, draw a fresh instance batch
/// with empty archives; per preference sample, roll out every instance, take
/// one optimizer step on the batch-summed gradient, then feed each instance's
/// rollouts through its archive update.
pub fn train(
    params: &mut ModelParams,
    cfg: &TrainConfig,
    streams: &SeedStreams,
) -> Result<TrainReport> {
    train_with(params, cfg, streams, &mut |_, _, _| Ok(()))
}

/// [`train`] with an observer invoked after every epoch's optimizer steps as
/// `on_epoch(epoch_index, mean_reward, params)` — the hook for validation
/// logging and periodic checkpoints without splitting the optimizer state.
pub fn train_with(
    params: &mut ModelParams,
    cfg: &TrainConfig,
    streams: &SeedStreams,
    on_epoch: &mut dyn FnMut(usize, f64, &ModelParams) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate(params)?;
    let start = Instant::now();
    let bx = ReferenceBox::for_problem(cfg.problem, cfg.n, cfg.objectives)?;
    let mut adam = Adam::new(cfg.lr, cfg.weight_decay);
    let mut reward_trace = Vec::with_capacity(cfg.epochs);

    for e in 0..cfg.epochs {
        let instances: Vec<Instance> = (0..cfg.batch)
            .map(|i| {
                generate(
                    cfg.problem,
                    cfg.n,
                    cfg.objectives,
                    streams.derive("train-instance", &[e as u64, i as u64]),
                )
            })
            .collect::<Result<_>>()?;
        let mut archives: Vec<ParetoArchive<Solution>> =
            (0..cfg.batch).map(|_| ParetoArchive::new()).collect();
        let mut pref_rng = streams.stream("train-pref", &[e as u64]);

        let mut epoch_reward = 0.0;
        let mut samples = 0usize;
        for t in 0..cfg.inner {
            let (weight, div) = sample_training_preference(cfg.objectives, &mut pref_rng);
            let (weight, div) = cfg.ablation.apply(weight, div, cfg.objectives);

            let mut store = GradStore::default();
            let mut batch_rollouts = Vec::with_capacity(cfg.batch);
            for (i, inst) in instances.iter().enumerate() {
                let front =
                    select_top_k(&archives[i], &weight, cfg.ablation.front_k(cfg.mpo.k), &bx);
                let starts = rollout_starts(inst)?.len();
                let scale = 1.0 / (cfg.batch as f64 * starts as f64);
                let mut rng =
                    streams.stream("train-rollout", &[e as u64, t as u64, i as u64]);
                let ro = accumulate_instance_gradient(
                    params, inst, &front, &weight, div, &bx, scale, &mut rng, &mut store,
                )?;
                epoch_reward += ro.mean_reward;
                samples += 1;
                batch_rollouts.push((front, ro));
            }
            adam.step(params, &store);
            for (i, (front, ro)) in batch_rollouts.into_iter().enumerate() {
                update_archive(&mut archives[i], &front, &ro, &weight, &cfg.mpo, cfg.ablation.no_mpo);
            }
        }
        let mean = epoch_reward / samples as f64;
        reward_trace.push(mean);
        on_epoch(e, mean, params)?;
    }

    Ok(TrainReport { epochs: cfg.epochs, reward_trace, wall_ms: start.elapsed().as_millis() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaConfig {
    /// Meta-iterations.
    #[serde(rename = "T_m")]
    pub meta_iters: usize,
    /// Preference tasks per meta-iteration.
    #[serde(rename = "N_prime")]
    pub tasks: usize,
    /// Inner training steps per task.
    #[serde(rename = "E")]
    pub inner_epochs: usize,
    /// Initial meta step size, annealed linearly to zero.
    pub eps0: f64,
    /// Inner-loop settings; `epochs` is ignored (the meta loop drives it).
    pub train: TrainConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            meta_iters: 20,
            tasks: 4,
            inner_epochs: 3,
            eps0: 1.0,
            train: TrainConfig::default(),
        }
    }
}

/// First-order meta-training for the direct-decoder variant: per
/// meta-iteration, draw one instance batch and empty archives; per sampled
/// preference task, fine-tune a clone of the current parameters for
/// `inner_epochs` steps (archives are shared across tasks and keep
/// accumulating); then move the parameters toward the task average with step
/// `eps`, annealed linearly so it reaches zero after the last iteration.
pub fn meta_train(
    params: &mut ModelParams,
    cfg: &MetaConfig,
    streams: &SeedStreams,
) -> Result<TrainReport> {
    if params.config.variant != Variant::NhdeM {
        return Err(invalid("meta-training targets the direct-decoder variant"));
    }
    cfg.train.validate(params)?;
    if cfg.meta_iters == 0 || cfg.tasks == 0 || cfg.inner_epochs == 0 {
        return Err(invalid("meta_iters, tasks, and inner_epochs must be positive"));
    }
    let start = Instant::now();
    let t = &cfg.train;
    let bx = ReferenceBox::for_problem(t.problem, t.n, t.objectives)?;
    let mut eps = cfg.eps0;
    let eps_step = cfg.eps0 / cfg.meta_iters as f64;
    let mut reward_trace = Vec::with_capacity(cfg.meta_iters);

    for it in 0..cfg.meta_iters {
        let instances: Vec<Instance> = (0..t.batch)
            .map(|i| {
                generate(
                    t.problem,
                    t.n,
                    t.objectives,
                    streams.derive("meta-instance", &[it as u64, i as u64]),
                )
            })
            .collect::<Result<_>>()?;
        let mut archives: Vec<ParetoArchive<Solution>> =
            (0..t.batch).map(|_| ParetoArchive::new()).collect();
        let mut pref_rng = streams.stream("meta-pref", &[it as u64]);

        let mut task_sum: BTreeMap<String, Array2<f64>> = params
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), Array2::zeros(v.dim())))
            .collect();
        let mut iter_reward = 0.0;
        let mut samples = 0usize;

        for task in 0..cfg.tasks {
            let (weight, div) = sample_training_preference(t.objectives, &mut pref_rng);
            let (weight, div) = t.ablation.apply(weight, div, t.objectives);
            let mut sub = params.clone();
            let mut adam = Adam::new(t.lr, t.weight_decay);
            for ei in 0..cfg.inner_epochs {
                let mut store = GradStore::default();
                let mut batch_rollouts = Vec::with_capacity(t.batch);
                for (i, inst) in instances.iter().enumerate() {
                    let front =
                        select_top_k(&archives[i], &weight, t.ablation.front_k(t.mpo.k), &bx);
                    let starts = rollout_starts(inst)?.len();
                    let scale = 1.0 / (t.batch as f64 * starts as f64);
                    let mut rng = streams.stream(
                        "meta-rollout",
                        &[it as u64, task as u64, ei as u64, i as u64],
                    );
                    let ro = accumulate_instance_gradient(
                        &sub, inst, &front, &weight, div, &bx, scale, &mut rng, &mut store,
                    )?;
                    iter_reward += ro.mean_reward;
                    samples += 1;
                    batch_rollouts.push((front, ro));
                }
                adam.step(&mut sub, &store);
                for (i, (front, ro)) in batch_rollouts.into_iter().enumerate() {
                    update_archive(&mut archives[i], &front, &ro, &weight, &t.mpo, t.ablation.no_mpo);
                }
            }
            for (name, acc) in task_sum.iter_mut() {
                *acc += &sub.tensors[name];
            }
        }

        for (name, p) in params.tensors.iter_mut() {
            let mean = &task_sum[name] / cfg.tasks as f64;
            let delta = &mean - &*p;
            *p += &(&delta * eps);
        }
        eps -= eps_step;
        reward_trace.push(iter_reward / samples as f64);
    }

    Ok(TrainReport { epochs: cfg.meta_iters, reward_trace, wall_ms: start.elapsed().as_millis() })
}

/// Per-preference adaptation of a meta-trained model on one instance: clones
/// the parameters, runs `steps` single-instance REINFORCE updates (reading the
/// shared archive for the surrogate front and feeding rollouts back through
/// the archive update), and returns the adapted parameters.
#[allow(clippy::too_many_arguments)]
pub fn adapt_preference(
    meta: &ModelParams,
    instance: &Instance,
    archive: &mut ParetoArchive<Solution>,
    weight: &Weight,
    div: DiversityFactor,
    bx: &ReferenceBox,
    mpo: &MpoConfig,
    ablation: Ablation,
    steps: usize,
    lr: f64,
    weight_decay: f64,
    streams: &SeedStreams,
    tag: &[u64],
) -> Result<ModelParams> {
    let mut adapted = meta.clone();
    let mut adam = Adam::new(lr, weight_decay);
    let starts = rollout_starts(instance)?.len();
    let scale = 1.0 / starts as f64;
    for step in 0..steps {
        let front = select_top_k(archive, weight, ablation.front_k(mpo.k), bx);
        let mut indices = tag.to_vec();
        indices.push(step as u64);
        let mut rng = streams.stream("finetune-rollout", &indices);
        let mut store = GradStore::default();
        let ro = accumulate_instance_gradient(
            &adapted, instance, &front, weight, div, bx, scale, &mut rng, &mut store,
        )?;
        adam.step(&mut adapted, &store);
        update_archive(archive, &front, &ro, weight, mpo, ablation.no_mpo);
    }
    Ok(adapted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hga::ModelConfig;

    fn tiny_cfg(variant: Variant) -> ModelConfig {
        ModelConfig {
            d: 8,
            layers: 1,
            heads: 2,
            ff: 16,
            hypernet_hidden: 16,
            variant,
            ..ModelConfig::default()
        }
    }

    fn tiny_train_cfg() -> TrainConfig {
        TrainConfig {
            n: 6,
            epochs: 2,
            batch: 2,
            inner: 2,
            mpo: MpoConfig { k: 4, j: 20, ..MpoConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adam_matches_hand_computed_first_step() {
        let streams = SeedStreams::new(1);
        let mut params =
            ModelParams::init(tiny_cfg(Variant::NhdeM), ProblemKind::Motsp, 2, &streams).unwrap();
        let name = "dec.k_final";
        let before = params.get(name).clone();
        let mut grads = GradStore::default();
        let g = Array2::from_elem(before.dim(), 0.5);
        grads.map.insert(name.to_string(), g.clone());
        let mut adam = Adam::new(1e-2, 0.0);
        adam.step(&mut params, &grads);
        // First step: mhat = g, vhat = g^2, so the update is lr * g/(|g|+eps).
        let after = params.get(name);
        for (a, b) in after.iter().zip(before.iter()) {
            let expected = b - 1e-2 * 0.5 / (0.5 + 1e-8);
            assert!((a - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_weight_decay_touches_gradient_free_tensors() {
        let streams = SeedStreams::new(2);
        let mut params =
            ModelParams::init(tiny_cfg(Variant::NhdeM), ProblemKind::Motsp, 2, &streams).unwrap();
        let name = "enc.node_proj";
        let before = params.get(name).clone();
        let mut adam = Adam::new(1e-3, 1e-2);
        adam.step(&mut params, &GradStore::default());
        let after = params.get(name);
        let moved = after
            .iter()
            .zip(before.iter())
            .any(|(a, b)| (a - b).abs() > 0.0);
        assert!(moved, "decay should move nonzero tensors even without gradients");
    }

    #[test]
    fn reward_hand_case() {
        let bx = ReferenceBox::new(vec![4.0, 4.0], vec![0.0, 0.0]).unwrap();
        let w = Weight::new(vec![0.5, 0.5]).unwrap();
        let front = SurrogateFront {
            entry_ids: vec![],
            points: vec![],
            reference: bx.r.clone(),
        };
        // g = 2, normalizer = 0.5*4 + 0.5*4 = 4, hv({(2,2)}) = 4/16.
        let r = reward(&[2.0, 2.0], &w, DiversityFactor([0.5, 0.5]), &front, &bx);
        assert!((r - (-0.5 * 0.5 + 0.5 * 0.25)).abs() < 1e-12);
        // Pure scalarization ignores the hypervolume term.
        let r = reward(&[2.0, 2.0], &w, DiversityFactor([1.0, 0.0]), &front, &bx);
        assert!((r - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn rewards_prefer_dominating_points() {
        let bx = ReferenceBox::new(vec![10.0, 10.0], vec![0.0, 0.0]).unwrap();
        let w = Weight::new(vec![0.3, 0.7]).unwrap();
        let front = SurrogateFront {
            entry_ids: vec![0],
            points: vec![vec![5.0, 5.0]],
            reference: bx.r.clone(),
        };
        for div in [DiversityFactor([1.0, 0.0]), DiversityFactor([0.4, 0.6]), DiversityFactor([0.0, 1.0])] {
            let better = reward(&[3.0, 4.0], &w, div, &front, &bx);
            let worse = reward(&[4.0, 5.0], &w, div, &front, &bx);
            assert!(better >= worse, "dominating point must never score lower");
        }
    }

    #[test]
    fn training_updates_parameters_deterministically() {
        let streams = SeedStreams::new(33);
        let cfg = tiny_train_cfg();
        let base =
            ModelParams::init(tiny_cfg(Variant::NhdeP), ProblemKind::Motsp, 2, &streams).unwrap();

        let mut a = base.clone();
        let ra = train(&mut a, &cfg, &streams).unwrap();
        let mut b = base.clone();
        let rb = train(&mut b, &cfg, &streams).unwrap();
        assert_eq!(ra.reward_trace, rb.reward_trace);
        for (name, t) in &a.tensors {
            assert_eq!(t, &b.tensors[name], "tensor {name} diverged across identical runs");
        }
        assert!(a.is_finite());
        let changed = a
            .tensors
            .iter()
            .any(|(name, t)| t != base.get(name));
        assert!(changed, "training must move the parameters");

        let mut c = base.clone();
        let rc = train(&mut c, &cfg, &SeedStreams::new(34)).unwrap();
        assert_ne!(ra.reward_trace, rc.reward_trace, "different seeds should differ");
    }

    #[test]
    fn update_archive_no_mpo_keeps_at_most_one_per_call() {
        let bx = ReferenceBox::new(vec![10.0, 10.0], vec![0.0, 0.0]).unwrap();
        let w = Weight::new(vec![0.5, 0.5]).unwrap();
        let mut archive: ParetoArchive<Solution> = ParetoArchive::new();
        let front = select_top_k(&archive, &w, 4, &bx);
        let ro = InstanceRollout {
            solutions: vec![Solution(vec![0]), Solution(vec![1]), Solution(vec![2])],
            objectives: vec![vec![2.0, 8.0], vec![1.0, 9.0], vec![8.0, 2.0]],
            rewards: vec![0.1, 0.5, 0.3],
            mean_reward: 0.3,
        };
        let stats = update_archive(&mut archive, &front, &ro, &w, &MpoConfig::default(), true);
        assert_eq!(archive.len(), 1);
        assert_eq!(stats.admitted, 1);
        assert_eq!(archive.fronts()[0], vec![1.0, 9.0], "keeps the max-reward one");

        let stats = update_archive(&mut archive, &front, &ro, &w, &MpoConfig::default(), false);
        assert!(archive.len() >= 2, "full update admits the rest of the front");
        assert_eq!(stats.duplicates, 1, "the already-present point is a duplicate");
    }

    #[test]
    fn meta_training_requires_direct_decoder_and_runs() {
        let streams = SeedStreams::new(5);
        let mut wrong =
            ModelParams::init(tiny_cfg(Variant::NhdeP), ProblemKind::Motsp, 2, &streams).unwrap();
        let cfg = MetaConfig {
            meta_iters: 2,
            tasks: 2,
            inner_epochs: 1,
            eps0: 0.5,
            train: tiny_train_cfg(),
        };
        assert!(meta_train(&mut wrong, &cfg, &streams).is_err());

        let base =
            ModelParams::init(tiny_cfg(Variant::NhdeM), ProblemKind::Motsp, 2, &streams).unwrap();
        let mut a = base.clone();
        let ra = meta_train(&mut a, &cfg, &streams).unwrap();
        assert_eq!(ra.epochs, 2);
        assert!(a.is_finite());
        let changed = a.tensors.iter().any(|(name, t)| t != base.get(name));
        assert!(changed);
        let mut b = base.clone();
        meta_train(&mut b, &cfg, &streams).unwrap();
        for (name, t) in &a.tensors {
            assert_eq!(t, &b.tensors[name], "meta-training must be deterministic ({name})");
        }
    }

    #[test]
    fn adaptation_returns_tuned_clone_and_feeds_archive() {
        let streams = SeedStreams::new(8);
        let meta =
            ModelParams::init(tiny_cfg(Variant::NhdeM), ProblemKind::Motsp, 2, &streams).unwrap();
        let instance = generate(ProblemKind::Motsp, 6, 2, 7).unwrap();
        let bx = ReferenceBox::for_problem(ProblemKind::Motsp, 6, 2).unwrap();
        let mut archive = ParetoArchive::new();
        let w = Weight::new(vec![0.5, 0.5]).unwrap();
        let adapted = adapt_preference(
            &meta,
            &instance,
            &mut archive,
            &w,
            DiversityFactor([0.5, 0.5]),
            &bx,
            &MpoConfig { k: 4, j: 20, ..MpoConfig::default() },
            Ablation::default(),
            2,
            1e-4,
            1e-6,
            &streams,
            &[0],
        )
        .unwrap();
        assert!(adapted.is_finite());
        let changed = adapted.tensors.iter().any(|(name, t)| t != meta.get(name));
        assert!(changed, "adaptation must move the clone");
        assert!(!archive.is_empty(), "adaptation rollouts must feed the archive");
    }
}
