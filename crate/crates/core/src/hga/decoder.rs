//! Decoder: preference-conditioned weights, per-step context construction,
//! one heterogeneous glimpse, and clipped-tanh compatibility scoring over
//! instance actions, rolled out from multiple starts in one batch.

use super::{action_row, decoder_shapes, BoundParams, Embeddings, ModelConfig, Variant};
use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::problems::{feasible_actions, replay, Instance, ProblemKind, Solution};
use crate::scalarization::{DiversityFactor, Weight};
use ndarray::Array2;
use rand::Rng;
use std::collections::BTreeMap;

/// Decoder tensors materialized for one preference. Under `NhdeM` they are the
/// stored trainables; under `NhdeP` they are hypernetwork outputs and carry
/// gradients back into the hypernetwork.
pub struct DecoderWeights {
    map: BTreeMap<String, Var>,
}

impl DecoderWeights {
    pub fn get(&self, name: &str) -> Var {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("missing decoder tensor '{name}'"))
    }
}

/// Builds the decoder weights for one `(weight, diversity factor)` preference.
pub fn decoder_weights(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    kind: ProblemKind,
    objectives: usize,
    weight: &Weight,
    diversity: DiversityFactor,
) -> Result<DecoderWeights> {
    if weight.len() != objectives {
        return Err(invalid(format!(
            "weight has {} components, expected {objectives}",
            weight.len()
        )));
    }
    let shapes = decoder_shapes(cfg, kind);
    let mut map = BTreeMap::new();
    match cfg.variant {
        Variant::NhdeM => {
            for (name, _, _, _) in shapes {
                let v = bound.get(&name);
                map.insert(name, v);
            }
        }
        Variant::NhdeP => {
            let mut input = Array2::zeros((1, objectives + 2));
            for (i, w) in weight.0.iter().enumerate() {
                input[(0, i)] = *w;
            }
            input[(0, objectives)] = diversity.0[0];
            input[(0, objectives + 1)] = diversity.0[1];
            let x = tape.constant(input);
            let w1 = bound.get("hyper.w1");
            let b1 = bound.get("hyper.b1");
            let w2 = bound.get("hyper.w2");
            let b2 = bound.get("hyper.b2");
            let a = tape.matmul(x, w1);
            let a = tape.add_row(a, b1);
            let a = tape.relu(a);
            let a = tape.matmul(a, w2);
            let a = tape.add_row(a, b2);
            let hidden = tape.relu(a);
            for (name, r, c, _) in shapes {
                let hw = bound.get(&format!("hyper.head.{name}.w"));
                let hb = bound.get(&format!("hyper.head.{name}.b"));
                let flat = tape.matmul(hidden, hw);
                let flat = tape.add_row(flat, hb);
                let t = tape.reshape(flat, r, c);
                map.insert(name, t);
            }
        }
    }
    Ok(DecoderWeights { map })
}

#[derive(Debug, Clone)]
pub enum RolloutMode {
    /// Highest-probability action each step.
    Greedy,
    /// Sample from the step distribution (uses the provided RNG).
    Sample,
    /// Replay fixed per-start action sequences (first, forced action
    /// included); used by gradient checks and loss replays.
    Forced(Vec<Vec<usize>>),
}

pub struct RolloutOutput {
    /// One complete solution per start.
    pub solutions: Vec<Solution>,
    /// Per-start total log-probability of the taken actions (the forced first
    /// action contributes nothing: it is not a policy decision).
    pub logps: Vec<f64>,
    /// On-tape per-start totals (`starts x 1`), present when recording.
    pub total_logp: Option<Var>,
}

/// Per-rollout tensors that do not change across decode steps.
struct Precomputed {
    keys_n: Vec<Var>,
    vals_n: Vec<Var>,
    keys_p: Vec<Var>,
    vals_p: Vec<Var>,
    keys_final: Var,
}

fn precompute(
    tape: &mut Tape,
    cfg: &ModelConfig,
    instance: &Instance,
    emb: &Embeddings,
    dec: &DecoderWeights,
) -> Precomputed {
    let kind = instance.kind();
    let act_rows: Vec<usize> = (0..instance.n).map(|a| action_row(kind, a)).collect();
    let act = tape.gather_rows(emb.nodes, &act_rows);
    let mut keys_n = Vec::with_capacity(cfg.heads);
    let mut vals_n = Vec::with_capacity(cfg.heads);
    let mut keys_p = Vec::with_capacity(cfg.heads);
    let mut vals_p = Vec::with_capacity(cfg.heads);
    for y in 0..cfg.heads {
        let wk_n = dec.get(&format!("dec.y{y}.wk_n"));
        let wv_n = dec.get(&format!("dec.y{y}.wv_n"));
        let wk_p = dec.get(&format!("dec.y{y}.wk_p"));
        let wv_p = dec.get(&format!("dec.y{y}.wv_p"));
        keys_n.push(tape.matmul(act, wk_n));
        vals_n.push(tape.matmul(act, wv_n));
        keys_p.push(tape.matmul(emb.points, wk_p));
        vals_p.push(tape.matmul(emb.points, wv_p));
    }
    let kf = dec.get("dec.k_final");
    let keys_final = tape.matmul(act, kf);
    Precomputed { keys_n, vals_n, keys_p, vals_p, keys_final }
}

/// Context rows for the current partial solutions. MOTSP: `[graph, first,
/// last]`; MOCVRP: `[graph, position, remaining/capacity]` where position is
/// the depot right after an implicit return; MOKP: `[graph, remaining/capacity]`.
fn build_context(
    tape: &mut Tape,
    instance: &Instance,
    emb: &Embeddings,
    partials: &[Solution],
) -> Result<Var> {
    let s = partials.len();
    let kind = instance.kind();
    let graph_rep = tape.repeat_row(emb.graph, s);
    match kind {
        ProblemKind::Motsp => {
            let first: Vec<usize> =
                partials.iter().map(|p| action_row(kind, p.0[0])).collect();
            let last: Vec<usize> = partials
                .iter()
                .map(|p| action_row(kind, *p.0.last().expect("nonempty partial")))
                .collect();
            let hf = tape.gather_rows(emb.nodes, &first);
            let hl = tape.gather_rows(emb.nodes, &last);
            Ok(tape.concat_cols(&[graph_rep, hf, hl]))
        }
        ProblemKind::Mocvrp => {
            let mut rows = Vec::with_capacity(s);
            let mut caps = Array2::zeros((s, 1));
            for (r, p) in partials.iter().enumerate() {
                let state = replay(instance, p)?;
                // Demands are strictly positive, so a full tank after at least
                // one visit can only mean an implicit depot return.
                let at_depot = state.remaining == state.capacity;
                rows.push(if at_depot {
                    0
                } else {
                    action_row(kind, *p.0.last().expect("nonempty partial"))
                });
                caps[(r, 0)] = state.remaining / state.capacity;
            }
            let hl = tape.gather_rows(emb.nodes, &rows);
            let capv = tape.constant(caps);
            Ok(tape.concat_cols(&[graph_rep, hl, capv]))
        }
        ProblemKind::Mokp => {
            let mut caps = Array2::zeros((s, 1));
            for (r, p) in partials.iter().enumerate() {
                let state = replay(instance, p)?;
                caps[(r, 0)] = state.remaining / state.capacity;
            }
            let capv = tape.constant(caps);
            Ok(tape.concat_cols(&[graph_rep, capv]))
        }
    }
}

/// One decode step: glimpse then compatibility, returning masked per-action
/// log-probabilities (`starts x n`). Rows flagged done get a single dummy
/// open column (column 0) so shapes stay uniform; callers must discard them.
fn step_log_probs(
    tape: &mut Tape,
    cfg: &ModelConfig,
    instance: &Instance,
    emb: &Embeddings,
    dec: &DecoderWeights,
    pre: &Precomputed,
    partials: &[Solution],
    done: &[bool],
) -> Result<(Var, Array2<bool>)> {
    let s = partials.len();
    let n = instance.n;
    let inv_sqrt_dk = 1.0 / (cfg.head_dim() as f64).sqrt();

    let mut mask = Array2::from_elem((s, n), false);
    for r in 0..s {
        if done[r] {
            mask[(r, 0)] = true;
            continue;
        }
        let fa = feasible_actions(instance, &partials[r])?;
        for (a, &ok) in fa.iter().enumerate() {
            mask[(r, a)] = ok;
        }
    }

    let k_rows = tape.value(emb.points).nrows();
    let point_mask: Option<Array2<bool>> = emb
        .point_valid
        .as_ref()
        .map(|v| Array2::from_shape_fn((s, k_rows), |(_, j)| v[j]));

    let ctx = build_context(tape, instance, emb, partials)?;
    let mut head_outs = Vec::with_capacity(cfg.heads);
    for y in 0..cfg.heads {
        let wq = dec.get(&format!("dec.y{y}.wq_ctx"));
        let q = tape.matmul(ctx, wq);
        // Context-to-node, masked to feasible actions; its own softmax.
        let s_n = tape.matmul_nt(q, pre.keys_n[y]);
        let s_n = tape.scale(s_n, inv_sqrt_dk);
        let a_n = tape.softmax_rows(s_n, Some(&mask));
        let mut read = tape.matmul(a_n, pre.vals_n[y]);
        // Context-to-point; separate softmax, contribution summed.
        let s_p = tape.matmul_nt(q, pre.keys_p[y]);
        let s_p = tape.scale(s_p, inv_sqrt_dk);
        let a_p = tape.softmax_rows(s_p, point_mask.as_ref());
        let read_p = tape.matmul(a_p, pre.vals_p[y]);
        read = tape.add(read, read_p);
        head_outs.push(read);
    }
    let cat = tape.concat_cols(&head_outs);
    let wo = dec.get("dec.wo");
    let qc = tape.matmul(cat, wo);

    let compat = tape.matmul_nt(qc, pre.keys_final);
    let compat = tape.scale(compat, inv_sqrt_dk);
    let t = tape.tanh(compat);
    let logits = tape.scale(t, cfg.clip);
    let logp = tape.log_softmax_rows(logits, Some(&mask));
    Ok((logp, mask))
}

/// Step distribution for explicit (non-terminal) partial solutions:
/// `(probabilities, log-probabilities, feasibility mask)`, each `len x n`.
pub fn decode_distribution(
    tape: &mut Tape,
    cfg: &ModelConfig,
    instance: &Instance,
    emb: &Embeddings,
    dec: &DecoderWeights,
    partials: &[Solution],
) -> Result<(Var, Var, Array2<bool>)> {
    if partials.is_empty() {
        return Err(invalid("decode_distribution needs at least one partial"));
    }
    for p in partials {
        if crate::problems::is_terminal(instance, p)? {
            return Err(invalid("decode_distribution requires non-terminal partials"));
        }
    }
    let pre = precompute(tape, cfg, instance, emb, dec);
    let done = vec![false; partials.len()];
    let (logp, mask) = step_log_probs(tape, cfg, instance, emb, dec, &pre, partials, &done)?;
    // Recompute the probabilities from the same logits path for convenience.
    let probs = {
        let v = tape.value(logp).mapv(f64::exp);
        tape.constant(v)
    };
    Ok((probs, logp, mask))
}

/// Multi-start rollout. Every start's first action is forced to the start
/// index; remaining steps follow `mode`. With `record` set, each decision's
/// log-probability stays on the tape and `total_logp` is returned for loss
/// construction; otherwise per-step nodes are truncated to bound memory.
#[allow(clippy::too_many_arguments)]
pub fn rollout<R: Rng>(
    tape: &mut Tape,
    cfg: &ModelConfig,
    instance: &Instance,
    emb: &Embeddings,
    dec: &DecoderWeights,
    starts: &[usize],
    mode: RolloutMode,
    record: bool,
    rng: &mut R,
) -> Result<RolloutOutput> {
    if starts.is_empty() {
        return Err(invalid("rollout needs at least one start"));
    }
    let n = instance.n;
    let s_count = starts.len();
    let empty = Solution(Vec::new());
    let initial_mask = feasible_actions(instance, &empty)?;
    for &s in starts {
        if s >= n {
            return Err(invalid(format!("start {s} out of range for n={n}")));
        }
        if !initial_mask[s] {
            return Err(Error::Infeasible(format!("start {s} is not a feasible first action")));
        }
    }
    if let RolloutMode::Forced(seqs) = &mode {
        if seqs.len() != s_count {
            return Err(invalid("forced sequences must match start count"));
        }
        for (r, seq) in seqs.iter().enumerate() {
            if seq.first() != Some(&starts[r]) {
                return Err(invalid(format!("forced sequence {r} does not begin with its start")));
            }
        }
    }

    let pre = precompute(tape, cfg, instance, emb, dec);

    let mut partials: Vec<Solution> =
        starts.iter().map(|&s| Solution(vec![s])).collect();
    let mut done = Vec::with_capacity(s_count);
    for p in &partials {
        done.push(crate::problems::is_terminal(instance, p)?);
    }
    let mut logps = vec![0.0; s_count];
    let mut step_vars: Vec<Var> = Vec::new();

    while done.iter().any(|&d| !d) {
        let mark = tape.mark();
        let (logp, mask) =
            step_log_probs(tape, cfg, instance, emb, dec, &pre, &partials, &done)?;
        let active: Vec<f64> = done.iter().map(|&d| if d { 0.0 } else { 1.0 }).collect();

        let mut acts = vec![0usize; s_count];
        for r in 0..s_count {
            if done[r] {
                continue;
            }
            acts[r] = match &mode {
                RolloutMode::Greedy => {
                    let row = tape.value(logp);
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for a in 0..n {
                        if mask[(r, a)] && row[(r, a)] > best_v {
                            best_v = row[(r, a)];
                            best = a;
                        }
                    }
                    best
                }
                RolloutMode::Sample => {
                    let row = tape.value(logp);
                    let total: f64 =
                        (0..n).filter(|&a| mask[(r, a)]).map(|a| row[(r, a)].exp()).sum();
                    let u: f64 = rng.gen::<f64>() * total;
                    let mut acc = 0.0;
                    let mut chosen = None;
                    for a in 0..n {
                        if mask[(r, a)] {
                            acc += row[(r, a)].exp();
                            chosen = Some(a);
                            if u < acc {
                                break;
                            }
                        }
                    }
                    chosen.expect("non-terminal row has a feasible action")
                }
                RolloutMode::Forced(seqs) => {
                    let step = partials[r].0.len();
                    let a = *seqs[r].get(step).ok_or_else(|| {
                        invalid(format!("forced sequence {r} ended before construction did"))
                    })?;
                    if !mask[(r, a)] {
                        return Err(Error::Infeasible(format!(
                            "forced action {a} infeasible at step {step} of row {r}"
                        )));
                    }
                    a
                }
            };
        }

        if record {
            let picked = tape.pick_per_row(logp, &acts);
            let picked = tape.mul_col_const(picked, &active);
            step_vars.push(picked);
        }
        {
            let values = tape.value(logp);
            for r in 0..s_count {
                if !done[r] {
                    logps[r] += values[(r, acts[r])];
                }
            }
        }
        for r in 0..s_count {
            if !done[r] {
                partials[r].0.push(acts[r]);
            }
        }
        for r in 0..s_count {
            if !done[r] {
                done[r] = crate::problems::is_terminal(instance, &partials[r])?;
            }
        }
        if !record {
            tape.truncate(mark);
        }
    }

    if let RolloutMode::Forced(seqs) = &mode {
        for (r, seq) in seqs.iter().enumerate() {
            if &partials[r].0 != seq {
                return Err(invalid(format!(
                    "forced sequence {r} longer than construction: replay ended at {} actions",
                    partials[r].0.len()
                )));
            }
        }
    }

    let total_logp = if record {
        let mut acc = tape.constant(Array2::zeros((s_count, 1)));
        for v in step_vars {
            acc = tape.add(acc, v);
        }
        Some(acc)
    } else {
        None
    };

    Ok(RolloutOutput { solutions: partials, logps, total_logp })
}
