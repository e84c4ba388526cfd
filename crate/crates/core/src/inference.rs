//! Preference-sweep solving: for each scheduled preference, condition the
//! policy on the current surrogate front, roll out from every start (under
//! coordinate symmetries when enabled), and push the pooled candidates
//! through the archive update. The archive is the answer.

use crate::autodiff::Tape;
use crate::error::Result;
use crate::hga::{
    decoder_weights, encode, rollout, BoundParams, ModelParams, RolloutMode, Variant,
};
use crate::mpo::{mpo_update, select_top_j, select_top_k, MpoConfig};
use crate::pareto::{hv_normalized_clipped, InsertOutcome, ParetoArchive, ReferenceBox};
use crate::problems::{augment, evaluate, Augmentation, Instance, Solution};
use crate::rng::SeedStreams;
use crate::scalarization::{granularity_for_count, ws_scalarize, PreferenceSchedule};
use crate::training::{adapt_preference, rollout_starts, Ablation};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::time::Instant;

/// Rollout selection rule at inference. Greedy is the default (one
/// deterministic solution per start); sampling is exposed for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveRollout {
    #[default]
    Greedy,
    Sample,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Number of scheduled subproblems; must be a lattice size for the
    /// objective count (any value works for two objectives).
    #[serde(rename = "N")]
    pub subproblems: usize,
    pub mpo: MpoConfig,
    pub augmentation: Augmentation,
    #[serde(default)]
    pub rollout: SolveRollout,
    #[serde(default)]
    pub ablation: Ablation,
    /// Adaptation steps per preference (direct-decoder variant only).
    #[serde(rename = "E_f")]
    pub finetune_steps: usize,
    pub finetune_lr: f64,
    pub weight_decay: f64,
    /// Optional non-uniform emphasis multiplied into every scheduled weight
    /// (renormalized).
    pub weight_scale: Option<Vec<f64>>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            subproblems: 40,
            mpo: MpoConfig::default(),
            augmentation: Augmentation::None,
            rollout: SolveRollout::Greedy,
            ablation: Ablation::default(),
            finetune_steps: 3,
            finetune_lr: 1e-4,
            weight_decay: 1e-6,
            weight_scale: None,
        }
    }
}

/// Archive state after each subproblem: the running (clipped) normalized
/// hypervolume is nondecreasing because the archive only improves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub subproblem: usize,
    pub hv: f64,
    pub archive: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Normalized hypervolume of the final archive (out-of-box points
    /// contribute zero volume).
    pub hv: f64,
    /// Final archive size (non-dominated solutions).
    pub nds: usize,
    /// Duplicated generated solutions: objective vectors that exactly repeat
    /// an earlier one within the run.
    pub ds: usize,
    pub time_ms: u128,
}

/// Candidate-flow accounting across all subproblems. Every generated
/// solution ends exactly one way, giving two exact identities:
/// `examined == pool + selection_duplicates + truncated` and
/// `pool == admitted + duplicates + dominated`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountingStats {
    /// Rollout solutions generated (all starts, all augmentations).
    pub examined: usize,
    /// Candidates offered to the archive update after selection.
    pub pool: usize,
    /// Dropped before the update as exact repeats within their subproblem's
    /// candidate pool.
    pub selection_duplicates: usize,
    /// Dropped by the selection cap (or, under the no-archive-update
    /// ablation, by keeping only the best scalarized candidate).
    pub truncated: usize,
    pub admitted: usize,
    pub duplicates: usize,
    pub dominated: usize,
    /// Archive entries evicted by admitted candidates (subset of past
    /// `admitted`, not part of the pool identity).
    pub evicted: usize,
    /// Dominance comparisons spent inside archive updates.
    pub comparisons: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontEntry {
    /// Minimization-space objectives (as kept by the archive).
    pub min_space: Vec<f64>,
    /// Natural-sense objectives.
    pub natural: Vec<f64>,
    pub solution: Solution,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutcome {
    /// Final archive, sorted by the first objective.
    pub front: Vec<FrontEntry>,
    pub metrics: RunMetrics,
    pub trace: Vec<TracePoint>,
    pub stats: AccountingStats,
}

fn objective_key(f: &[f64]) -> Vec<u64> {
    f.iter().map(|v| v.to_bits()).collect()
}

/// Number of objective vectors that exactly repeat an earlier one in the
/// sequence: `[(1,2),(1,2),(3,4)]` has one duplicate.
pub fn duplicates_count(points: &[Vec<f64>]) -> usize {
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    points.iter().filter(|p| !seen.insert(objective_key(p))).count()
}

/// Final-archive quality summary: normalized hypervolume (out-of-box points
/// clipped to zero contribution) and archive size.
pub fn archive_metrics<T>(archive: &ParetoArchive<T>, bx: &ReferenceBox) -> (f64, usize) {
    (hv_normalized_clipped(&archive.fronts(), bx), archive.len())
}

/// Runs a caller-supplied preference schedule on one instance. Each
/// subproblem reads the evolving archive and writes back through the
/// bounded update, so order matters and execution is strictly sequential.
pub fn solve_sequence(
    params: &ModelParams,
    instance: &Instance,
    schedule: &PreferenceSchedule,
    cfg: &SolveConfig,
    streams: &SeedStreams,
) -> Result<SolveOutcome> {
    let start = Instant::now();
    let m = params.objectives;
    let bx = ReferenceBox::for_problem(instance.kind(), instance.n, m)?;
    let starts = rollout_starts(instance)?;
    let variants = augment(instance, cfg.augmentation)?;
    let mode = match cfg.rollout {
        SolveRollout::Greedy => RolloutMode::Greedy,
        SolveRollout::Sample => RolloutMode::Sample,
    };

    let mut archive: ParetoArchive<Solution> = ParetoArchive::new();
    let mut stats = AccountingStats::default();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut duplicates_generated = 0usize;
    let mut trace = Vec::with_capacity(schedule.entries.len());

    for (i, (sched_weight, sched_div)) in schedule.entries.iter().enumerate() {
        let (weight, div) = cfg.ablation.apply(sched_weight.clone(), *sched_div, m);

        // The direct-decoder variant adapts a clone to this preference first;
        // its adaptation rollouts already feed the archive.
        let adapted;
        let model: &ModelParams = match params.config.variant {
            Variant::NhdeP => params,
            Variant::NhdeM => {
                adapted = adapt_preference(
                    params,
                    instance,
                    &mut archive,
                    &weight,
                    div,
                    &bx,
                    &cfg.mpo,
                    cfg.ablation,
                    cfg.finetune_steps,
                    cfg.finetune_lr,
                    cfg.weight_decay,
                    streams,
                    &[i as u64],
                )?;
                &adapted
            }
        };

        let front = select_top_k(&archive, &weight, cfg.ablation.front_k(cfg.mpo.k), &bx);

        let mut pool_objs: Vec<Vec<f64>> = Vec::new();
        let mut pool_sols: Vec<Solution> = Vec::new();
        for (vi, variant) in variants.iter().enumerate() {
            let mut tape = Tape::new();
            let bound = BoundParams::bind(&mut tape, model);
            let emb = encode(
                &mut tape,
                &bound,
                &model.config,
                variant,
                &front.model_points(),
                &bx,
                None,
            );
            let dec = decoder_weights(
                &mut tape,
                &bound,
                &model.config,
                variant.kind(),
                m,
                &weight,
                div,
            )?;
            let mut rng = streams.stream("solve-rollout", &[i as u64, vi as u64]);
            let out = rollout(
                &mut tape,
                &model.config,
                variant,
                &emb,
                &dec,
                &starts,
                mode.clone(),
                false,
                &mut rng,
            )?;
            for sol in out.solutions {
                // Objectives are symmetry-invariant, so scoring against the
                // original instance is exact (and keeps solutions comparable).
                let f = evaluate(instance, &sol)?.min_space();
                if !seen.insert(objective_key(&f)) {
                    duplicates_generated += 1;
                }
                pool_objs.push(f);
                pool_sols.push(sol);
            }
        }
        stats.examined += pool_objs.len();

        if cfg.ablation.no_mpo {
            let best = (0..pool_objs.len())
                .min_by(|&a, &b| {
                    ws_scalarize(&pool_objs[a], &weight)
                        .total_cmp(&ws_scalarize(&pool_objs[b], &weight))
                        .then(a.cmp(&b))
                })
                .expect("pool is never empty");
            stats.pool += 1;
            stats.truncated += pool_objs.len() - 1;
            match archive.insert(pool_objs[best].clone(), pool_sols[best].clone()) {
                InsertOutcome::Accepted { evicted } => {
                    stats.admitted += 1;
                    stats.evicted += evicted;
                }
                InsertOutcome::Duplicate => stats.duplicates += 1,
                InsertOutcome::Dominated => stats.dominated += 1,
            }
        } else {
            let kept = select_top_j(&pool_objs, &weight, cfg.mpo.j);
            let distinct = pool_objs.len() - duplicates_count(&pool_objs);
            stats.pool += kept.len();
            stats.selection_duplicates += pool_objs.len() - distinct;
            stats.truncated += distinct - kept.len();
            let candidates: Vec<(Vec<f64>, Solution)> = kept
                .into_iter()
                .map(|ix| (pool_objs[ix].clone(), pool_sols[ix].clone()))
                .collect();
            let u = mpo_update(&mut archive, &front, candidates, cfg.mpo.mode);
            stats.admitted += u.admitted;
            stats.duplicates += u.duplicates;
            stats.dominated += u.dominated;
            stats.evicted += u.evicted;
            stats.comparisons += u.comparisons;
        }

        trace.push(TracePoint {
            subproblem: i,
            hv: hv_normalized_clipped(&archive.fronts(), &bx),
            archive: archive.len(),
        });
    }

    let mut front: Vec<FrontEntry> = archive
        .entries()
        .iter()
        .map(|e| {
            let natural = evaluate(instance, &e.payload)?.raw;
            Ok(FrontEntry {
                min_space: e.objectives.clone(),
                natural,
                solution: e.payload.clone(),
            })
        })
        .collect::<Result<_>>()?;
    front.sort_by(|a, b| {
        a.min_space[0]
            .total_cmp(&b.min_space[0])
            .then_with(|| a.solution.encode().cmp(&b.solution.encode()))
    });

    let (hv, nds) = archive_metrics(&archive, &bx);
    let metrics = RunMetrics {
        hv,
        nds,
        ds: duplicates_generated,
        time_ms: start.elapsed().as_millis(),
    };
    Ok(SolveOutcome { front, metrics, trace, stats })
}

/// Builds the standard shuffled lattice schedule for `cfg.subproblems`
/// preferences and runs it.
pub fn solve(
    params: &ModelParams,
    instance: &Instance,
    cfg: &SolveConfig,
    streams: &SeedStreams,
) -> Result<SolveOutcome> {
    let m = params.objectives;
    let h = granularity_for_count(m, cfg.subproblems)?;
    let schedule = PreferenceSchedule::build(m, h, streams, cfg.weight_scale.as_deref())?;
    solve_sequence(params, instance, &schedule, cfg, streams)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hga::ModelConfig;
    use crate::pareto::nondominated_filter;
    use crate::problems::{generate, ProblemKind};
    use crate::scalarization::{DiversityFactor, Weight};

    fn tiny_params(kind: ProblemKind, variant: Variant, seed: u64) -> ModelParams {
        let cfg = ModelConfig {
            d: 8,
            layers: 1,
            heads: 2,
            ff: 16,
            hypernet_hidden: 16,
            variant,
            ..ModelConfig::default()
        };
        ModelParams::init(cfg, kind, 2, &SeedStreams::new(seed)).unwrap()
    }

    fn tiny_solve_cfg(subproblems: usize) -> SolveConfig {
        SolveConfig {
            subproblems,
            mpo: MpoConfig { k: 4, j: 50, ..MpoConfig::default() },
            finetune_steps: 1,
            ..SolveConfig::default()
        }
    }

    fn assert_accounting(out: &SolveOutcome) {
        assert_eq!(
            out.stats.examined,
            out.stats.pool + out.stats.selection_duplicates + out.stats.truncated
        );
        assert_eq!(
            out.stats.pool,
            out.stats.admitted + out.stats.duplicates + out.stats.dominated
        );
        assert_eq!(out.metrics.nds, out.stats.admitted - out.stats.evicted);
    }

    #[test]
    fn duplicates_count_matches_examples() {
        assert_eq!(
            duplicates_count(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![3.0, 4.0]]),
            1
        );
        assert_eq!(duplicates_count(&[vec![1.0, 2.0], vec![3.0, 4.0]]), 0);
        assert_eq!(duplicates_count(&[]), 0);
    }

    #[test]
    fn solve_trace_is_monotone_and_final_hv_normalized() {
        let params = tiny_params(ProblemKind::Motsp, Variant::NhdeP, 1);
        let instance = generate(ProblemKind::Motsp, 6, 2, 9).unwrap();
        let out = solve(&params, &instance, &tiny_solve_cfg(5), &SeedStreams::new(2)).unwrap();
        assert_eq!(out.trace.len(), 5);
        for w in out.trace.windows(2) {
            assert!(w[1].hv >= w[0].hv - 1e-12, "hypervolume trace must not decrease");
        }
        let last = out.trace.last().unwrap();
        assert!(last.hv >= 0.0 && last.hv <= 1.0);
        assert!((last.hv - out.metrics.hv).abs() < 1e-15);
        assert_eq!(out.metrics.nds, out.front.len());
        assert!(out.metrics.ds < out.stats.examined);
        assert_accounting(&out);
        for w in out.front.windows(2) {
            assert!(w[0].min_space[0] <= w[1].min_space[0]);
        }
        for e in &out.front {
            let ev = evaluate(&instance, &e.solution).unwrap();
            assert_eq!(ev.min_space(), e.min_space);
            assert_eq!(ev.raw, e.natural);
        }
    }

    #[test]
    fn single_corner_preference_solves_one_scalarized_subproblem() {
        let params = tiny_params(ProblemKind::Motsp, Variant::NhdeP, 2);
        let instance = generate(ProblemKind::Motsp, 5, 2, 10).unwrap();
        let schedule = PreferenceSchedule {
            entries: vec![(Weight(vec![1.0, 0.0]), DiversityFactor([1.0, 0.0]))],
        };
        let out = solve_sequence(
            &params,
            &instance,
            &schedule,
            &tiny_solve_cfg(1),
            &SeedStreams::new(3),
        )
        .unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.stats.examined, 5, "one greedy rollout per start");
        assert!(out.metrics.nds >= 1);
        assert_accounting(&out);
    }

    #[test]
    fn solve_is_deterministic_in_the_seed() {
        let params = tiny_params(ProblemKind::Motsp, Variant::NhdeP, 3);
        let instance = generate(ProblemKind::Motsp, 5, 2, 11).unwrap();
        let a = solve(&params, &instance, &tiny_solve_cfg(4), &SeedStreams::new(7)).unwrap();
        let b = solve(&params, &instance, &tiny_solve_cfg(4), &SeedStreams::new(7)).unwrap();
        assert_eq!(a.metrics.hv, b.metrics.hv);
        assert_eq!(a.metrics.nds, b.metrics.nds);
        assert_eq!(a.metrics.ds, b.metrics.ds);
        assert_eq!(
            a.front.iter().map(|e| e.solution.encode()).collect::<Vec<_>>(),
            b.front.iter().map(|e| e.solution.encode()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn permuted_schedule_still_yields_a_valid_archive() {
        let params = tiny_params(ProblemKind::Motsp, Variant::NhdeP, 12);
        let instance = generate(ProblemKind::Motsp, 6, 2, 29).unwrap();
        let h = granularity_for_count(2, 4).unwrap();
        let fwd = PreferenceSchedule::build(2, h, &SeedStreams::new(1), None).unwrap();
        let mut rev = fwd.clone();
        rev.entries.reverse();
        let cfg = tiny_solve_cfg(4);
        let a = solve_sequence(&params, &instance, &fwd, &cfg, &SeedStreams::new(1)).unwrap();
        let b = solve_sequence(&params, &instance, &rev, &cfg, &SeedStreams::new(1)).unwrap();
        for out in [&a, &b] {
            let fronts: Vec<Vec<f64>> =
                out.front.iter().map(|e| e.min_space.clone()).collect();
            assert_eq!(fronts.len(), nondominated_filter(&fronts).len());
            assert_accounting(out);
        }
        // Order affects the archive trajectory only mildly; both HVs are
        // reported by the callers, not asserted equal.
        assert!(a.metrics.hv > 0.0 && b.metrics.hv > 0.0);
    }

    #[test]
    fn augmentation_multiplies_the_examined_pool() {
        let params = tiny_params(ProblemKind::Motsp, Variant::NhdeP, 4);
        let instance = generate(ProblemKind::Motsp, 5, 2, 13).unwrap();
        let mut cfg = tiny_solve_cfg(2);
        cfg.augmentation = Augmentation::Partial;
        let out = solve(&params, &instance, &cfg, &SeedStreams::new(5)).unwrap();
        // Two objectives under the split scheme: 2 * 4^2 = 32 variants,
        // 5 starts each, 2 subproblems.
        assert_eq!(out.stats.examined, 2 * 32 * 5);
        assert_accounting(&out);
    }

    #[test]
    fn sampled_rollouts_are_supported() {
        let params = tiny_params(ProblemKind::Motsp, Variant::NhdeP, 5);
        let instance = generate(ProblemKind::Motsp, 5, 2, 15).unwrap();
        let mut cfg = tiny_solve_cfg(3);
        cfg.rollout = SolveRollout::Sample;
        let out = solve(&params, &instance, &cfg, &SeedStreams::new(6)).unwrap();
        assert!(out.metrics.nds >= 1);
        assert_accounting(&out);
    }

    #[test]
    fn direct_decoder_variant_adapts_and_solves() {
        let params = tiny_params(ProblemKind::Motsp, Variant::NhdeM, 6);
        let instance = generate(ProblemKind::Motsp, 5, 2, 17).unwrap();
        let out = solve(&params, &instance, &tiny_solve_cfg(3), &SeedStreams::new(8)).unwrap();
        assert!(out.metrics.nds >= 1);
        assert!(out.metrics.hv > 0.0);
    }

    #[test]
    fn ablations_run_and_account_for_candidate_flow() {
        let params = tiny_params(ProblemKind::Motsp, Variant::NhdeP, 9);
        let instance = generate(ProblemKind::Motsp, 6, 2, 19).unwrap();
        let full = solve(&params, &instance, &tiny_solve_cfg(4), &SeedStreams::new(3)).unwrap();
        assert_accounting(&full);

        let mut nomp = tiny_solve_cfg(4);
        nomp.ablation.no_mpo = true;
        let ablated = solve(&params, &instance, &nomp, &SeedStreams::new(3)).unwrap();
        assert_eq!(ablated.stats.pool, 4, "one candidate per subproblem");
        assert_accounting(&ablated);

        let mut noind = tiny_solve_cfg(4);
        noind.ablation.no_indicator = true;
        let out = solve(&params, &instance, &noind, &SeedStreams::new(3)).unwrap();
        assert!(out.metrics.nds >= 1);

        let mut nodec = tiny_solve_cfg(4);
        nodec.ablation.no_decomposition = true;
        let out = solve(&params, &instance, &nodec, &SeedStreams::new(3)).unwrap();
        assert!(out.metrics.nds >= 1);
    }

    #[test]
    fn knapsack_solves_without_augmentation_and_rejects_it() {
        let params = tiny_params(ProblemKind::Mokp, Variant::NhdeP, 10);
        let instance = generate(ProblemKind::Mokp, 8, 2, 23).unwrap();
        let out = solve(&params, &instance, &tiny_solve_cfg(3), &SeedStreams::new(4)).unwrap();
        assert!(out.metrics.nds >= 1);
        assert!(out.metrics.hv > 0.0 && out.metrics.hv <= 1.0);
        assert_accounting(&out);

        let mut cfg = tiny_solve_cfg(3);
        cfg.augmentation = Augmentation::Full;
        assert!(solve(&params, &instance, &cfg, &SeedStreams::new(4)).is_err());
    }
}
