//! End-to-end gradient verification: analytic reverse-mode gradients of a
//! rollout log-probability loss against central finite differences, through
//! the encoder, the hypernetwork (when present), and every decode step.

use super::{decoder_weights, encode, rollout, BoundParams, ModelParams, RolloutMode};
use crate::autodiff::{GradStore, Tape};
use crate::error::Result;
use crate::pareto::ReferenceBox;
use crate::problems::Instance;
use crate::rng::SeedStreams;
use crate::scalarization::{DiversityFactor, Weight};
use ndarray::Array2;
use rand::seq::SliceRandom;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Parameter entries compared.
    pub checked: usize,
    /// Largest floored relative error observed (see below).
    pub max_rel_err: f64,
    /// `tensor[r,c]` of the worst entry.
    pub worst: String,
    /// Worst analytic/numeric pair, for diagnostics.
    pub worst_pair: (f64, f64),
}

/// Compares analytic gradients against central differences on
/// `entries_per_tensor` randomly chosen entries of every stored tensor.
///
/// The loss is a fixed linear combination of per-start total
/// log-probabilities of a frozen action sequence (sampled once from the base
/// parameters), so it is a smooth function of the parameters. The error
/// metric is `|a - n| / max(|a|, |n|, 1e-4)`: flooring the denominator turns
/// the metric into an absolute error for near-zero gradients, where a pure
/// ratio would only amplify finite-difference noise.
///
/// Callers must supply a configuration where the loss is differentiable.
/// In particular, avoid point sets with an exact affine relation between
/// rows (one point equal to the mean of the others): under shared-statistics
/// normalization such a row's standardized embedding is exactly zero, and
/// with zero-initialized shifts the feed-forward relu inputs sit exactly on
/// their kink, where central differences do not measure a derivative.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    params: &ModelParams,
    instance: &Instance,
    points: &[Vec<f64>],
    bx: &ReferenceBox,
    weight: &Weight,
    diversity: DiversityFactor,
    starts: &[usize],
    entries_per_tensor: usize,
    streams: &SeedStreams,
) -> Result<GradCheckReport> {
    let cfg = params.config.clone();
    let objectives = params.objectives;
    let fd_eps = 1e-5;

    // Freeze one action sequence per start by sampling from the base model.
    let seqs: Vec<Vec<usize>> = {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, params);
        let emb = encode(&mut tape, &bound, &cfg, instance, points, bx, None);
        let dec = decoder_weights(&mut tape, &bound, &cfg, instance.kind(), objectives, weight, diversity)?;
        let mut rng = streams.stream("gradcheck-rollout", &[]);
        let out = rollout(
            &mut tape,
            &cfg,
            instance,
            &emb,
            &dec,
            starts,
            RolloutMode::Sample,
            false,
            &mut rng,
        )?;
        out.solutions.into_iter().map(|s| s.0).collect()
    };
    // Distinct per-start coefficients so symmetric errors cannot cancel.
    let coeffs: Vec<f64> = (0..starts.len()).map(|r| 1.0 + 0.25 * r as f64).collect();

    let loss_value = |p: &ModelParams| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, p);
        let emb = encode(&mut tape, &bound, &cfg, instance, points, bx, None);
        let dec = decoder_weights(&mut tape, &bound, &cfg, instance.kind(), objectives, weight, diversity)?;
        let mut rng = streams.stream("gradcheck-unused", &[]);
        let out = rollout(
            &mut tape,
            &cfg,
            instance,
            &emb,
            &dec,
            starts,
            RolloutMode::Forced(seqs.clone()),
            false,
            &mut rng,
        )?;
        Ok(out.logps.iter().zip(&coeffs).map(|(l, c)| l * c).sum())
    };

    // Analytic gradients in one reverse pass.
    let mut store = GradStore::default();
    {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, params);
        let emb = encode(&mut tape, &bound, &cfg, instance, points, bx, None);
        let dec = decoder_weights(&mut tape, &bound, &cfg, instance.kind(), objectives, weight, diversity)?;
        let mut rng = streams.stream("gradcheck-unused", &[]);
        let out = rollout(
            &mut tape,
            &cfg,
            instance,
            &emb,
            &dec,
            starts,
            RolloutMode::Forced(seqs.clone()),
            true,
            &mut rng,
        )?;
        let total = out.total_logp.expect("recording rollout returns totals");
        let cmat = tape.constant(Array2::from_shape_fn((1, starts.len()), |(_, r)| coeffs[r]));
        let loss = tape.matmul(cmat, total);
        tape.backward(loss, &mut store);
    }

    let mut rng = streams.stream("gradcheck-entries", &[]);
    let mut checked = 0usize;
    let mut max_rel_err: f64 = 0.0;
    let mut worst = String::new();
    let mut worst_pair = (0.0, 0.0);
    for (name, tensor) in &params.tensors {
        let len = tensor.len();
        let cols = tensor.ncols();
        let mut indices: Vec<usize> = (0..len).collect();
        indices.shuffle(&mut rng);
        indices.truncate(entries_per_tensor.min(len));
        for idx in indices {
            let (r, c) = (idx / cols, idx % cols);
            let mut plus = params.clone();
            plus.tensors.get_mut(name).unwrap()[(r, c)] += fd_eps;
            let mut minus = params.clone();
            minus.tensors.get_mut(name).unwrap()[(r, c)] -= fd_eps;
            let numeric = (loss_value(&plus)? - loss_value(&minus)?) / (2.0 * fd_eps);
            let analytic = store.map.get(name).map_or(0.0, |g| g[(r, c)]);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = format!("{name}[{r},{c}]");
                worst_pair = (analytic, numeric);
            }
            checked += 1;
        }
    }

    Ok(GradCheckReport { checked, max_rel_err, worst, worst_pair })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hga::{ModelConfig, Variant};
    use crate::problems::{feasible_actions, generate, ProblemKind, Solution};

    fn small_cfg(variant: Variant) -> ModelConfig {
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

    fn check(kind: ProblemKind, variant: Variant, seed: u64) -> GradCheckReport {
        let streams = SeedStreams::new(seed);
        let params = ModelParams::init(small_cfg(variant), kind, 2, &streams).unwrap();
        let instance = generate(kind, 6, 2, seed).unwrap();
        let bx = ReferenceBox::new(vec![25.0, 25.0], vec![0.0, 0.0]).unwrap();
        let points = vec![vec![6.0, 15.0], vec![11.0, 8.0], vec![25.0, 25.0]];
        let weight = Weight::new(vec![0.4, 0.6]).unwrap();
        let div = DiversityFactor::new(0.5, 0.5).unwrap();
        let empty = Solution(Vec::new());
        let mask0 = feasible_actions(&instance, &empty).unwrap();
        let starts: Vec<usize> = (0..6).filter(|&a| mask0[a]).take(2).collect();
        grad_check(&params, &instance, &points, &bx, &weight, div, &starts, 1, &streams)
            .unwrap()
    }

    #[test]
    fn tsp_hypernet_policy_gradients_match_finite_differences() {
        let report = check(ProblemKind::Motsp, Variant::NhdeP, 3);
        assert!(report.checked >= 40, "only {} entries checked", report.checked);
        assert!(
            report.max_rel_err <= 1e-3,
            "worst {} rel err {} (analytic {}, numeric {})",
            report.worst,
            report.max_rel_err,
            report.worst_pair.0,
            report.worst_pair.1
        );
    }

    #[test]
    fn kp_direct_decoder_gradients_match_finite_differences() {
        let report = check(ProblemKind::Mokp, Variant::NhdeM, 4);
        assert!(report.max_rel_err <= 1e-3, "worst {} rel err {}", report.worst, report.max_rel_err);
    }

    #[test]
    fn cvrp_gradients_match_finite_differences() {
        let report = check(ProblemKind::Mocvrp, Variant::NhdeP, 5);
        assert!(report.max_rel_err <= 1e-3, "worst {} rel err {}", report.worst, report.max_rel_err);
    }
}
