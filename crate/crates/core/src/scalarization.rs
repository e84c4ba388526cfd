//! Weighted-sum decomposition: weight vectors, diversity factors, and the
//! per-run preference schedule pairing the two.

use crate::error::{invalid, Result};
use crate::rng::SeedStreams;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Point on the (M-1)-simplex: nonnegative components summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight(pub Vec<f64>);

impl Weight {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("weight needs at least one component"));
        }
        if components.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(invalid("weight components must be nonnegative and finite"));
        }
        let sum: f64 = components.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("weight components sum to {sum}, expected 1")));
        }
        Ok(Weight(components))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Element-wise rescaling followed by renormalization, for runs that bias
    /// the search toward a subset of objectives.
    pub fn scaled(&self, scale: &[f64]) -> Result<Weight> {
        if scale.len() != self.0.len() {
            return Err(invalid("scale length must match weight length"));
        }
        if scale.iter().any(|s| *s <= 0.0 || !s.is_finite()) {
            return Err(invalid("scale factors must be positive and finite"));
        }
        let raw: Vec<f64> = self.0.iter().zip(scale).map(|(w, s)| w * s).collect();
        let sum: f64 = raw.iter().sum();
        Weight::new(raw.into_iter().map(|v| v / sum).collect())
    }
}

/// Two-component trade-off between the scalarized objective and the
/// hypervolume term of the reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityFactor(pub [f64; 2]);

impl DiversityFactor {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if w1 < 0.0 || w2 < 0.0 || (w1 + w2 - 1.0).abs() > 1e-9 {
            return Err(invalid("diversity factor must be nonnegative and sum to 1"));
        }
        Ok(DiversityFactor([w1, w2]))
    }
}

/// Weighted sum of a minimization-space objective vector.
pub fn ws_scalarize(f: &[f64], weight: &Weight) -> f64 {
    assert_eq!(f.len(), weight.len(), "objective/weight dimension mismatch");
    f.iter().zip(&weight.0).map(|(v, w)| v * w).sum()
}

/// Number of lattice weights for `objectives` components at granularity `h`:
/// compositions of `h` into `objectives` parts.
pub fn uniform_weight_count(objectives: usize, h: usize) -> usize {
    // C(h + objectives - 1, objectives - 1), small enough for direct u128 math.
    let m = objectives - 1;
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 0..m {
        num *= (h + m - i) as u128;
        den *= (i + 1) as u128;
    }
    (num / den) as usize
}

/// Simplex-lattice weight set `{k/h}` in lexicographic order. `h = 39` yields
/// 40 weights for two objectives; `h = 19` yields 210 for three.
pub fn uniform_weight_set(objectives: usize, h: usize) -> Result<Vec<Weight>> {
    if objectives < 2 {
        return Err(invalid("need at least two objectives"));
    }
    if h == 0 {
        return Err(invalid("granularity h must be positive"));
    }
    let mut out = Vec::with_capacity(uniform_weight_count(objectives, h));
    let mut parts = vec![0usize; objectives];
    fill(&mut out, &mut parts, 0, h, objectives);
    fn fill(out: &mut Vec<Weight>, parts: &mut Vec<usize>, idx: usize, left: usize, m: usize) {
        if idx == m - 1 {
            parts[idx] = left;
            let h_total: usize = parts.iter().sum();
            out.push(Weight(
                parts.iter().map(|&k| k as f64 / h_total as f64).collect(),
            ));
            return;
        }
        for k in 0..=left {
            parts[idx] = k;
            fill(out, parts, idx + 1, left - k, m);
        }
    }
    Ok(out)
}

/// Granularity whose lattice has exactly `count` weights, if one exists.
pub fn granularity_for_count(objectives: usize, count: usize) -> Result<usize> {
    for h in 1..=4000 {
        let c = uniform_weight_count(objectives, h);
        if c == count {
            return Ok(h);
        }
        if c > count {
            break;
        }
    }
    Err(invalid(format!(
        "no lattice of {objectives}-objective weights has exactly {count} members"
    )))
}

/// Linear diversity-factor schedule across `n` subproblems: starts fully on
/// the scalarized objective, ends fully on the hypervolume term.
pub fn diversity_schedule(n: usize) -> Result<Vec<DiversityFactor>> {
    if n == 0 {
        return Err(invalid("schedule needs at least one subproblem"));
    }
    if n == 1 {
        return Ok(vec![DiversityFactor([1.0, 0.0])]);
    }
    Ok((1..=n)
        .map(|i| {
            let w2 = (i - 1) as f64 / (n - 1) as f64;
            DiversityFactor([1.0 - w2, w2])
        })
        .collect())
}

/// Uniform draw from the (m-1)-simplex via normalized exponentials, plus a
/// uniform diversity factor from the 1-simplex.
pub fn sample_training_preference(
    objectives: usize,
    rng: &mut impl Rng,
) -> (Weight, DiversityFactor) {
    let mut e: Vec<f64> = (0..objectives)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let sum: f64 = e.iter().sum();
    for v in &mut e {
        *v /= sum;
    }
    let w2 = rng.gen::<f64>();
    (Weight(e), DiversityFactor([1.0 - w2, w2]))
}

/// Ordered list of (weight, diversity factor) pairs driving one solve run:
/// the lattice weights in shuffled order, paired with the unshuffled linear
/// diversity schedule.
#[derive(Debug, Clone)]
pub struct PreferenceSchedule {
    pub entries: Vec<(Weight, DiversityFactor)>,
}

impl PreferenceSchedule {
    pub fn build(
        objectives: usize,
        h: usize,
        streams: &SeedStreams,
        scale: Option<&[f64]>,
    ) -> Result<Self> {
        let mut weights = uniform_weight_set(objectives, h)?;
        if let Some(s) = scale {
            weights = weights
                .into_iter()
                .map(|w| w.scaled(s))
                .collect::<Result<Vec<_>>>()?;
        }
        let mut rng = streams.stream("weights", &[]);
        // Fisher-Yates keeps the shuffle a bijection on the weight set.
        for i in (1..weights.len()).rev() {
            let j = rng.gen_range(0..=i);
            weights.swap(i, j);
        }
        let factors = diversity_schedule(weights.len())?;
        Ok(PreferenceSchedule {
            entries: weights.into_iter().zip(factors).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn weighted_sum_examples() {
        let w = Weight::new(vec![0.3, 0.7]).unwrap();
        assert!((ws_scalarize(&[10.0, 0.0], &w) - 3.0).abs() < 1e-12);
        let w = Weight::new(vec![0.5, 0.5]).unwrap();
        assert!((ws_scalarize(&[2.0, 4.0], &w) - 3.0).abs() < 1e-12);
        let w = Weight::new(vec![1.0, 0.0]).unwrap();
        assert!((ws_scalarize(&[-5.0, 100.0], &w) + 5.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_small_case() {
        let ws = uniform_weight_set(2, 2).unwrap();
        let got: Vec<Vec<f64>> = ws.into_iter().map(|w| w.0).collect();
        assert_eq!(got, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
    }

    #[test]
    fn lattice_counts_match_benchmark_settings() {
        assert_eq!(uniform_weight_set(2, 39).unwrap().len(), 40);
        assert_eq!(uniform_weight_set(3, 19).unwrap().len(), 210);
        assert_eq!(granularity_for_count(2, 40).unwrap(), 39);
        assert_eq!(granularity_for_count(3, 210).unwrap(), 19);
        assert!(granularity_for_count(3, 211).is_err());
    }

    #[test]
    fn count_formula_matches_enumeration() {
        for m in 2..=3 {
            for h in 1..=50 {
                assert_eq!(
                    uniform_weight_set(m, h).unwrap().len(),
                    uniform_weight_count(m, h),
                    "m={m} h={h}"
                );
            }
        }
    }

    #[test]
    fn every_lattice_weight_is_on_the_simplex() {
        for w in uniform_weight_set(3, 7).unwrap() {
            let sum: f64 = w.0.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(w.0.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn diversity_schedule_endpoints() {
        let s = diversity_schedule(3).unwrap();
        assert_eq!(s[0].0, [1.0, 0.0]);
        assert_eq!(s[1].0, [0.5, 0.5]);
        assert_eq!(s[2].0, [0.0, 1.0]);
        let s = diversity_schedule(2).unwrap();
        assert_eq!(s[0].0, [1.0, 0.0]);
        assert_eq!(s[1].0, [0.0, 1.0]);
        let s = diversity_schedule(1).unwrap();
        assert_eq!(s[0].0, [1.0, 0.0]);
    }

    #[test]
    fn preference_samples_are_uniform_on_the_simplex() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let n = 1_000_000;
        let mut mean = [0.0f64; 3];
        for _ in 0..n {
            let (w, d) = sample_training_preference(3, &mut rng);
            let sum: f64 = w.0.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            let dsum = d.0[0] + d.0[1];
            assert!((dsum - 1.0).abs() < 1e-9);
            for (m, v) in mean.iter_mut().zip(&w.0) {
                *m += v;
            }
        }
        for m in mean {
            assert!((m / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn schedule_is_a_shuffled_bijection() {
        let streams = SeedStreams::new(5);
        let sched = PreferenceSchedule::build(2, 9, &streams, None).unwrap();
        assert_eq!(sched.len(), 10);
        let mut weights: Vec<Vec<f64>> = sched.entries.iter().map(|(w, _)| w.0.clone()).collect();
        weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected: Vec<Vec<f64>> = uniform_weight_set(2, 9).unwrap().into_iter().map(|w| w.0).collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(weights, expected);
        // Diversity factors stay in schedule order.
        assert_eq!(sched.entries[0].1 .0, [1.0, 0.0]);
        assert_eq!(sched.entries[9].1 .0, [0.0, 1.0]);
        // Same seed, same order.
        let again = PreferenceSchedule::build(2, 9, &streams, None).unwrap();
        let a: Vec<Vec<f64>> = sched.entries.iter().map(|(w, _)| w.0.clone()).collect();
        let b: Vec<Vec<f64>> = again.entries.iter().map(|(w, _)| w.0.clone()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn nonuniform_scaling_renormalizes() {
        let w = Weight::new(vec![0.5, 0.5]).unwrap();
        let s = w.scaled(&[1.0, 3.0]).unwrap();
        assert!((s.0[0] - 0.25).abs() < 1e-12);
        assert!((s.0[1] - 0.75).abs() < 1e-12);
        assert!(w.scaled(&[0.0, 1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn scalarization_is_linear(
            a in proptest::collection::vec(-5.0f64..5.0, 2),
            b in proptest::collection::vec(-5.0f64..5.0, 2),
            t in 0.0f64..1.0,
        ) {
            let w = Weight::new(vec![0.3, 0.7]).unwrap();
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let lhs = ws_scalarize(&mix, &w);
            let rhs = t * ws_scalarize(&a, &w) + (1.0 - t) * ws_scalarize(&b, &w);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn scalarization_respects_dominance(
            a in proptest::collection::vec(0.0f64..5.0, 2),
            delta in proptest::collection::vec(0.0f64..1.0, 2),
        ) {
            // A weakly dominating point never scalarizes worse.
            let w = Weight::new(vec![0.4, 0.6]).unwrap();
            let better: Vec<f64> = a.iter().zip(&delta).map(|(x, d)| x - d).collect();
            prop_assert!(ws_scalarize(&better, &w) <= ws_scalarize(&a, &w) + 1e-12);
        }
    }
}
