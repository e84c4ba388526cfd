//! Bounded-cost Pareto archive updates.
//!
//! Each subproblem works against a surrogate front: the `K` archive points
//! best aligned with the current weight, plus the reference corner. After the
//! rollouts, the `J` best candidates are admitted by dominance comparisons
//! confined to the surrogate front and candidate pool, so an update costs
//! `O((K + J) * J)` comparisons no matter how large the archive has grown.
//!
//! Two admission modes:
//! - `Literal`: the archive is replaced by the non-dominated subset of
//!   `surrogate ∪ candidates`; points outside the surrogate are forgotten.
//! - `ArchivePreserving` (default): surviving candidates are inserted into the
//!   full archive, which never loses a point that is still non-dominated.

use crate::error::{invalid, Result};
use crate::pareto::{dominates, nondominated_filter, InsertOutcome, ParetoArchive, ReferenceBox};
use crate::scalarization::{ws_scalarize, Weight};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MpoMode {
    Literal,
    ArchivePreserving,
}

impl std::str::FromStr for MpoMode {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(MpoMode::Literal),
            "archive-preserving" => Ok(MpoMode::ArchivePreserving),
            other => Err(invalid(format!("unknown mpo mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpoConfig {
    /// Surrogate front size.
    #[serde(rename = "K")]
    pub k: usize,
    /// Candidate pool size per subproblem.
    #[serde(rename = "J")]
    pub j: usize,
    pub mode: MpoMode,
}

impl Default for MpoConfig {
    fn default() -> Self {
        MpoConfig { k: 20, j: 200, mode: MpoMode::ArchivePreserving }
    }
}

/// Weight-aligned slice of the archive plus the reference corner. `points`
/// are minimization-space objective vectors of the selected entries,
/// `entry_ids` their archive identities.
#[derive(Debug, Clone)]
pub struct SurrogateFront {
    pub entry_ids: Vec<u64>,
    pub points: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
}

impl SurrogateFront {
    /// Points fed to the model: the selected archive points with the
    /// reference corner appended last, so the point graph is never empty.
    pub fn model_points(&self) -> Vec<Vec<f64>> {
        let mut pts = self.points.clone();
        pts.push(self.reference.clone());
        pts
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The `k` archive entries with the best (lowest) scalarized value under
/// `weight`; ties break on insertion order. An empty archive yields an empty
/// surrogate whose model input is the reference corner alone.
pub fn select_top_k<T>(
    archive: &ParetoArchive<T>,
    weight: &Weight,
    k: usize,
    bx: &ReferenceBox,
) -> SurrogateFront {
    let mut ranked: Vec<(f64, u64, usize)> = archive
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (ws_scalarize(&e.objectives, weight), e.id, i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(k);
    SurrogateFront {
        entry_ids: ranked.iter().map(|r| r.1).collect(),
        points: ranked.iter().map(|r| archive.entries()[r.2].objectives.clone()).collect(),
        reference: bx.r.clone(),
    }
}

/// Indices of the `j` best candidates by scalarized value, exact objective
/// duplicates collapsed to their first occurrence, ties broken by position.
pub fn select_top_j(candidates: &[Vec<f64>], weight: &Weight, j: usize) -> Vec<usize> {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if !seen.iter().any(|s| *s == c) {
            seen.push(c);
            kept.push(i);
        }
    }
    kept.sort_by(|&a, &b| {
        ws_scalarize(&candidates[a], weight)
            .total_cmp(&ws_scalarize(&candidates[b], weight))
            .then(a.cmp(&b))
    });
    kept.truncate(j);
    kept
}

/// Counters from one archive update. `comparisons` counts only admission-step
/// dominance comparisons, which stay within `(K + 1 + J) * J`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateStats {
    pub comparisons: usize,
    pub admitted: usize,
    pub duplicates: usize,
    pub dominated: usize,
    pub evicted: usize,
}

/// Admits `candidates` against `surrogate` and merges the survivors into
/// `archive` per `mode`. Candidates must already be the `select_top_j`
/// selection (deduplicated); exact duplicates of surrogate points are counted
/// and skipped here.
pub fn mpo_update<T: Clone>(
    archive: &mut ParetoArchive<T>,
    surrogate: &SurrogateFront,
    candidates: Vec<(Vec<f64>, T)>,
    mode: MpoMode,
) -> UpdateStats {
    let mut stats = UpdateStats::default();

    // Deduplicate candidates against the surrogate and each other.
    let mut pool: Vec<(Vec<f64>, T)> = Vec::with_capacity(candidates.len());
    for (f, payload) in candidates {
        if surrogate.points.iter().any(|p| *p == f) || pool.iter().any(|(p, _)| *p == f) {
            stats.duplicates += 1;
        } else {
            pool.push((f, payload));
        }
    }

    // Admission: each candidate against every surrogate point and every other
    // candidate. Also records which surrogate points a candidate dominates.
    let ncand = pool.len();
    let mut cand_dead = vec![false; ncand];
    let mut front_dead = vec![false; surrogate.points.len()];
    for i in 0..ncand {
        for (s, sp) in surrogate.points.iter().enumerate() {
            stats.comparisons += 1;
            if dominates(sp, &pool[i].0) {
                cand_dead[i] = true;
            }
            if dominates(&pool[i].0, sp) {
                front_dead[s] = true;
            }
        }
        for j in 0..ncand {
            if i == j {
                continue;
            }
            stats.comparisons += 1;
            if dominates(&pool[j].0, &pool[i].0) {
                cand_dead[i] = true;
            }
        }
    }

    match mode {
        MpoMode::Literal => {
            let keep_ids: Vec<u64> = surrogate
                .entry_ids
                .iter()
                .enumerate()
                .filter(|(s, _)| !front_dead[*s])
                .map(|(_, id)| *id)
                .collect();
            let survivors: Vec<(Vec<f64>, T)> = archive
                .entries()
                .iter()
                .filter(|e| keep_ids.contains(&e.id))
                .map(|e| (e.objectives.clone(), e.payload.clone()))
                .collect();
            stats.evicted = archive.len() - survivors.len();
            archive.clear();
            for (f, payload) in survivors {
                archive.insert(f, payload);
            }
            for (i, (f, payload)) in pool.into_iter().enumerate() {
                if cand_dead[i] {
                    stats.dominated += 1;
                    continue;
                }
                match archive.insert(f, payload) {
                    InsertOutcome::Accepted { evicted } => {
                        stats.admitted += 1;
                        stats.evicted += evicted;
                    }
                    InsertOutcome::Duplicate => stats.duplicates += 1,
                    InsertOutcome::Dominated => stats.dominated += 1,
                }
            }
        }
        MpoMode::ArchivePreserving => {
            for (i, (f, payload)) in pool.into_iter().enumerate() {
                if cand_dead[i] {
                    stats.dominated += 1;
                    continue;
                }
                match archive.insert(f, payload) {
                    InsertOutcome::Accepted { evicted } => {
                        stats.admitted += 1;
                        stats.evicted += evicted;
                    }
                    InsertOutcome::Duplicate => stats.duplicates += 1,
                    InsertOutcome::Dominated => stats.dominated += 1,
                }
            }
        }
    }
    stats
}

/// Exhaustive reference update: the non-dominated filter of all archive points
/// and all candidates, with no budget. Test oracle for [`mpo_update`].
pub fn full_update_oracle(archive_points: &[Vec<f64>], candidates: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut all = archive_points.to_vec();
    all.extend_from_slice(candidates);
    nondominated_filter(&all)
}
