//! Problem families: multi-objective TSP, bi-objective capacitated VRP, and
//! bi-objective knapsack.
//!
//! Conventions shared by every family:
//! - A solution is an ordered action sequence: node visits (MOTSP), customer
//!   visits with implicit depot returns (MOCVRP), or item picks (MOKP).
//! - Objectives are reported in their natural sense; knapsack values are
//!   maximized. [`ObjectiveVector::min_space`] negates where needed so every
//!   downstream consumer minimizes.
//! - Generation is fully determined by `(kind, n, M, seed)`.

use crate::error::{invalid, Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Motsp,
    Mocvrp,
    Mokp,
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::Motsp => "motsp",
            ProblemKind::Mocvrp => "mocvrp",
            ProblemKind::Mokp => "mokp",
        }
    }

    pub fn maximizing(&self) -> bool {
        matches!(self, ProblemKind::Mokp)
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "motsp" => Ok(ProblemKind::Motsp),
            "mocvrp" => Ok(ProblemKind::Mocvrp),
            "mokp" => Ok(ProblemKind::Mokp),
            other => Err(invalid(format!("unknown problem kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One benchmark instance. `objectives` serializes as `"M"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub n: usize,
    #[serde(rename = "M")]
    pub objectives: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub data: InstanceData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceData {
    /// `coords[i][m]` is node i's coordinate pair under objective m.
    Motsp { coords: Vec<Vec<[f64; 2]>> },
    /// Depot plus `n` customers; demands are integral, capacity exceeds any
    /// single demand.
    Mocvrp {
        depot: [f64; 2],
        coords: Vec<[f64; 2]>,
        demands: Vec<u32>,
        capacity: f64,
    },
    /// `values[i]` holds item i's two objective values.
    Mokp {
        weights: Vec<f64>,
        values: Vec<[f64; 2]>,
        capacity: f64,
    },
}

impl Instance {
    pub fn kind(&self) -> ProblemKind {
        match self.data {
            InstanceData::Motsp { .. } => ProblemKind::Motsp,
            InstanceData::Mocvrp { .. } => ProblemKind::Mocvrp,
            InstanceData::Mokp { .. } => ProblemKind::Mokp,
        }
    }

    /// Checks every structural invariant of the instance.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("instance must have at least one node"));
        }
        match &self.data {
            InstanceData::Motsp { coords } => {
                if self.objectives != 2 && self.objectives != 3 {
                    return Err(invalid("motsp supports 2 or 3 objectives"));
                }
                if coords.len() != self.n {
                    return Err(invalid("coords length must equal n"));
                }
                for node in coords {
                    if node.len() != self.objectives {
                        return Err(invalid("each node needs one coordinate pair per objective"));
                    }
                    for c in node {
                        if !in_unit(c) {
                            return Err(invalid("coordinates must lie in the unit square"));
                        }
                    }
                }
            }
            InstanceData::Mocvrp { depot, coords, demands, capacity } => {
                if self.objectives != 2 {
                    return Err(invalid("mocvrp supports exactly 2 objectives"));
                }
                if coords.len() != self.n || demands.len() != self.n {
                    return Err(invalid("coords and demands length must equal n"));
                }
                if !in_unit(depot) || coords.iter().any(|c| !in_unit(c)) {
                    return Err(invalid("coordinates must lie in the unit square"));
                }
                if demands.iter().any(|&d| d == 0 || d > 9) {
                    return Err(invalid("demands must lie in 1..=9"));
                }
                let max_d = *demands.iter().max().unwrap() as f64;
                if *capacity <= max_d {
                    return Err(invalid("capacity must exceed the largest demand"));
                }
            }
            InstanceData::Mokp { weights, values, capacity } => {
                if self.objectives != 2 {
                    return Err(invalid("mokp supports exactly 2 objectives"));
                }
                if weights.len() != self.n || values.len() != self.n {
                    return Err(invalid("weights and values length must equal n"));
                }
                if weights.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
                    return Err(invalid("weights must lie in (0, 1]"));
                }
                if values.iter().flatten().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
                    return Err(invalid("values must lie in [0, 1]"));
                }
                let max_w = weights.iter().cloned().fold(0.0, f64::max);
                if *capacity <= max_w {
                    return Err(invalid("capacity must exceed the largest weight"));
                }
            }
        }
        Ok(())
    }
}

fn in_unit(c: &[f64; 2]) -> bool {
    c.iter().all(|v| *v >= 0.0 && *v <= 1.0)
}

/// Vehicle capacity for an MOCVRP of `n` customers: published sizes 20/50/100
/// use 30/40/50; other sizes interpolate linearly and never drop to the demand
/// ceiling.
pub fn cvrp_capacity(n: usize) -> f64 {
    let anchors = [(20.0, 30.0), (50.0, 40.0), (100.0, 50.0)];
    piecewise_clamped(&anchors, n as f64).max(10.0)
}

/// Knapsack capacity for `n` items: published sizes 50/100/200 use
/// 12.5/25/25; other sizes interpolate linearly and always exceed the largest
/// possible item weight.
pub fn kp_capacity(n: usize) -> f64 {
    let anchors = [(50.0, 12.5), (100.0, 25.0), (200.0, 25.0)];
    piecewise_clamped(&anchors, n as f64).max(1.25)
}

fn piecewise_clamped(anchors: &[(f64, f64)], x: f64) -> f64 {
    let n = anchors.len();
    let ((x0, y0), (x1, y1)) = if x <= anchors[0].0 {
        (anchors[0], anchors[1])
    } else if x >= anchors[n - 1].0 {
        (anchors[n - 2], anchors[n - 1])
    } else {
        let mut s = (anchors[0], anchors[1]);
        for w in anchors.windows(2) {
            if x >= w[0].0 && x <= w[1].0 {
                s = (w[0], w[1]);
                break;
            }
        }
        s
    };
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Generates an instance. Coordinates are uniform in the unit square, demands
/// uniform in `{1..9}`, item weights and values uniform in `(0,1]` / `[0,1]`.
pub fn generate(kind: ProblemKind, n: usize, objectives: usize, seed: u64) -> Result<Instance> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let data = match kind {
        ProblemKind::Motsp => {
            if objectives != 2 && objectives != 3 {
                return Err(invalid("motsp supports 2 or 3 objectives"));
            }
            let coords = (0..n)
                .map(|_| (0..objectives).map(|_| [rng.gen(), rng.gen()]).collect())
                .collect();
            InstanceData::Motsp { coords }
        }
        ProblemKind::Mocvrp => {
            if objectives != 2 {
                return Err(invalid("mocvrp supports exactly 2 objectives"));
            }
            let depot = [rng.gen(), rng.gen()];
            let coords = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
            let demands = (0..n).map(|_| rng.gen_range(1..=9)).collect();
            InstanceData::Mocvrp { depot, coords, demands, capacity: cvrp_capacity(n) }
        }
        ProblemKind::Mokp => {
            if objectives != 2 {
                return Err(invalid("mokp supports exactly 2 objectives"));
            }
            let weights = (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect();
            let values = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
            InstanceData::Mokp { weights, values, capacity: kp_capacity(n) }
        }
    };
    let inst = Instance { n, objectives, seed, data };
    inst.validate()?;
    Ok(inst)
}

/// Ordered action sequence; see the module doc for per-family semantics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Solution(pub Vec<usize>);

impl Solution {
    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn encode(&self) -> String {
        self.0.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("-")
    }

    pub fn decode(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Ok(Solution(Vec::new()));
        }
        let actions = s
            .split('-')
            .map(|t| t.parse::<usize>().map_err(|_| invalid(format!("bad action token '{t}'"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Solution(actions))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Objective values in their natural sense plus that sense.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveVector {
    pub raw: Vec<f64>,
    pub sense: Sense,
}

impl ObjectiveVector {
    /// Values in minimization space (negated when the problem maximizes).
    pub fn min_space(&self) -> Vec<f64> {
        match self.sense {
            Sense::Minimize => self.raw.clone(),
            Sense::Maximize => self.raw.iter().map(|v| -v).collect(),
        }
    }

    /// Restores natural-sense values from a minimization-space vector.
    pub fn from_min_space(values: &[f64], kind: ProblemKind) -> Vec<f64> {
        if kind.maximizing() {
            values.iter().map(|v| -v).collect()
        } else {
            values.to_vec()
        }
    }
}

pub(crate) fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Evaluates a complete solution. Errors on malformed or infeasible input.
pub fn evaluate(instance: &Instance, solution: &Solution) -> Result<ObjectiveVector> {
    match &instance.data {
        InstanceData::Motsp { coords } => {
            check_permutation(instance.n, solution)?;
            let tour = &solution.0;
            let mut raw = vec![0.0; instance.objectives];
            for (m, obj) in raw.iter_mut().enumerate() {
                for i in 0..tour.len() {
                    let a = &coords[tour[i]][m];
                    let b = &coords[tour[(i + 1) % tour.len()]][m];
                    *obj += dist(a, b);
                }
            }
            Ok(ObjectiveVector { raw, sense: Sense::Minimize })
        }
        InstanceData::Mocvrp { .. } => {
            check_permutation(instance.n, solution)?;
            let routes = split_routes(instance, &solution.0)?;
            let (depot, coords) = match &instance.data {
                InstanceData::Mocvrp { depot, coords, .. } => (depot, coords),
                _ => unreachable!(),
            };
            let mut total = 0.0;
            let mut makespan = 0.0f64;
            for route in &routes {
                let mut len = 0.0;
                let mut prev = depot;
                for &c in route {
                    len += dist(prev, &coords[c]);
                    prev = &coords[c];
                }
                len += dist(prev, depot);
                total += len;
                makespan = makespan.max(len);
            }
            Ok(ObjectiveVector { raw: vec![total, makespan], sense: Sense::Minimize })
        }
        InstanceData::Mokp { weights, values, capacity } => {
            let mut seen = vec![false; instance.n];
            let mut weight = 0.0;
            let mut raw = vec![0.0; 2];
            for &i in &solution.0 {
                if i >= instance.n {
                    return Err(invalid(format!("item index {i} out of range")));
                }
                if seen[i] {
                    return Err(Error::Infeasible(format!("item {i} picked twice")));
                }
                seen[i] = true;
                weight += weights[i];
                raw[0] += values[i][0];
                raw[1] += values[i][1];
            }
            if weight > *capacity + 1e-12 {
                return Err(Error::Infeasible(format!(
                    "total weight {weight} exceeds capacity {capacity}"
                )));
            }
            Ok(ObjectiveVector { raw, sense: Sense::Maximize })
        }
    }
}

fn check_permutation(n: usize, solution: &Solution) -> Result<()> {
    if solution.0.len() != n {
        return Err(Error::Infeasible(format!(
            "expected all {n} nodes, got {}",
            solution.0.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in &solution.0 {
        if i >= n || seen[i] {
            return Err(Error::Infeasible(format!("node {i} missing or repeated")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Splits an MOCVRP customer sequence into capacity-feasible routes: a depot
/// return happens exactly when the next customer no longer fits.
pub fn split_routes(instance: &Instance, sequence: &[usize]) -> Result<Vec<Vec<usize>>> {
    let (demands, capacity) = match &instance.data {
        InstanceData::Mocvrp { demands, capacity, .. } => (demands, *capacity),
        _ => return Err(invalid("split_routes requires an mocvrp instance")),
    };
    let mut routes = vec![Vec::new()];
    let mut remaining = capacity;
    for &c in sequence {
        let d = demands[c] as f64;
        if d > remaining {
            routes.push(Vec::new());
            remaining = capacity;
        }
        routes.last_mut().unwrap().push(c);
        remaining -= d;
    }
    if routes.last().unwrap().is_empty() {
        routes.pop();
    }
    Ok(routes)
}

/// Construction state replayed from a partial action sequence.
#[derive(Debug, Clone)]
pub struct ReplayState {
    pub visited: Vec<bool>,
    /// Remaining vehicle/knapsack capacity against which the next action is
    /// masked; `f64::INFINITY` for MOTSP.
    pub remaining: f64,
    /// Total capacity for normalizing the context feature.
    pub capacity: f64,
}

/// Replays a partial solution to the state the next decision sees. For MOCVRP
/// the remaining capacity reflects implicit depot returns, including a reset
/// when no unvisited customer fits.
pub fn replay(instance: &Instance, partial: &Solution) -> Result<ReplayState> {
    let mut visited = vec![false; instance.n];
    for &a in &partial.0 {
        if a >= instance.n {
            return Err(invalid(format!("action {a} out of range")));
        }
        if visited[a] {
            return Err(Error::Infeasible(format!("action {a} repeated")));
        }
        visited[a] = true;
    }
    match &instance.data {
        InstanceData::Motsp { .. } => Ok(ReplayState {
            visited,
            remaining: f64::INFINITY,
            capacity: f64::INFINITY,
        }),
        InstanceData::Mocvrp { demands, capacity, .. } => {
            let mut remaining = *capacity;
            for &c in &partial.0 {
                let d = demands[c] as f64;
                if d > remaining {
                    remaining = *capacity;
                }
                remaining -= d;
            }
            let any_unvisited = visited.iter().any(|v| !v);
            let any_fits = demands
                .iter()
                .enumerate()
                .any(|(i, &d)| !visited[i] && d as f64 <= remaining);
            if any_unvisited && !any_fits {
                remaining = *capacity;
            }
            Ok(ReplayState { visited, remaining, capacity: *capacity })
        }
        InstanceData::Mokp { weights, capacity, .. } => {
            let used: f64 = partial.0.iter().map(|&i| weights[i]).sum();
            Ok(ReplayState { visited, remaining: *capacity - used, capacity: *capacity })
        }
    }
}

/// Feasible next actions given a partial solution. MOTSP masks visited nodes;
/// MOCVRP additionally masks customers whose demand exceeds the remaining
/// capacity (after any implicit depot return); MOKP masks items that no longer
/// fit. The mask is all-false only when construction has terminated.
pub fn feasible_actions(instance: &Instance, partial: &Solution) -> Result<Vec<bool>> {
    let state = replay(instance, partial)?;
    let mask = match &instance.data {
        InstanceData::Motsp { .. } => state.visited.iter().map(|v| !v).collect(),
        InstanceData::Mocvrp { demands, .. } => demands
            .iter()
            .enumerate()
            .map(|(i, &d)| !state.visited[i] && d as f64 <= state.remaining)
            .collect(),
        InstanceData::Mokp { weights, .. } => weights
            .iter()
            .enumerate()
            .map(|(i, &w)| !state.visited[i] && w <= state.remaining)
            .collect(),
    };
    Ok(mask)
}

/// Construction is over when no action remains feasible.
pub fn is_terminal(instance: &Instance, partial: &Solution) -> Result<bool> {
    Ok(feasible_actions(instance, partial)?.iter().all(|m| !m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augmentation {
    None,
    Partial,
    Full,
}

impl std::str::FromStr for Augmentation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Augmentation::None),
            "partial" => Ok(Augmentation::Partial),
            "full" => Ok(Augmentation::Full),
            other => Err(invalid(format!("unknown augmentation mode '{other}'"))),
        }
    }
}

const TRANSFORMS: [fn(f64, f64) -> (f64, f64); 8] = [
    |x, y| (x, y),
    |x, y| (1.0 - x, y),
    |x, y| (x, 1.0 - y),
    |x, y| (1.0 - x, 1.0 - y),
    |x, y| (y, x),
    |x, y| (1.0 - y, x),
    |x, y| (y, 1.0 - x),
    |x, y| (1.0 - y, 1.0 - x),
];

fn apply_transform(t: usize, c: &[f64; 2]) -> [f64; 2] {
    let (x, y) = TRANSFORMS[t](c[0], c[1]);
    [x, y]
}

/// Coordinate-symmetry variants of an instance. Every transform is an isometry
/// of the unit square, so objective values of any fixed solution are preserved.
///
/// MOTSP transforms each objective's coordinate group independently: `full`
/// yields `8^M` variants, `partial` the `2 * 4^M` variants where all groups
/// draw from the first or last four transforms. MOCVRP has a single coordinate
/// group and yields 8 variants in either mode. MOKP has no coordinates and
/// errors.
pub fn augment(instance: &Instance, mode: Augmentation) -> Result<Vec<Instance>> {
    if matches!(mode, Augmentation::None) {
        return Ok(vec![instance.clone()]);
    }
    match &instance.data {
        InstanceData::Motsp { coords } => {
            let m = instance.objectives;
            let assignments = transform_assignments(m, mode);
            let mut out = Vec::with_capacity(assignments.len());
            for assign in assignments {
                let new_coords = coords
                    .iter()
                    .map(|node| {
                        node.iter()
                            .enumerate()
                            .map(|(g, c)| apply_transform(assign[g], c))
                            .collect()
                    })
                    .collect();
                out.push(Instance {
                    data: InstanceData::Motsp { coords: new_coords },
                    ..instance.clone()
                });
            }
            Ok(out)
        }
        InstanceData::Mocvrp { depot, coords, demands, capacity } => {
            let mut out = Vec::with_capacity(8);
            for t in 0..8 {
                out.push(Instance {
                    data: InstanceData::Mocvrp {
                        depot: apply_transform(t, depot),
                        coords: coords.iter().map(|c| apply_transform(t, c)).collect(),
                        demands: demands.clone(),
                        capacity: *capacity,
                    },
                    ..instance.clone()
                });
            }
            Ok(out)
        }
        InstanceData::Mokp { .. } => Err(Error::Unsupported {
            kind: "mokp".into(),
            detail: "no coordinate symmetries to augment".into(),
        }),
    }
}

/// Transform index per coordinate group, in lexicographic order.
fn transform_assignments(groups: usize, mode: Augmentation) -> Vec<Vec<usize>> {
    fn product(choices: &[usize], groups: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for _ in 0..groups {
            let mut next = Vec::with_capacity(out.len() * choices.len());
            for prefix in &out {
                for &c in choices {
                    let mut v = prefix.clone();
                    v.push(c);
                    next.push(v);
                }
            }
            out = next;
        }
        out
    }
    match mode {
        Augmentation::None => vec![vec![0; groups]],
        Augmentation::Full => product(&[0, 1, 2, 3, 4, 5, 6, 7], groups),
        Augmentation::Partial => {
            let mut out = product(&[0, 1, 2, 3], groups);
            out.extend(product(&[4, 5, 6, 7], groups));
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn generation_is_deterministic_and_valid() {
        let a = generate(ProblemKind::Motsp, 20, 2, 7).unwrap();
        let b = generate(ProblemKind::Motsp, 20, 2, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n, 20);
        a.validate().unwrap();
        let c = generate(ProblemKind::Motsp, 20, 2, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn published_capacities() {
        let inst = generate(ProblemKind::Mocvrp, 20, 2, 1).unwrap();
        match inst.data {
            InstanceData::Mocvrp { capacity, .. } => assert_eq!(capacity, 30.0),
            _ => unreachable!(),
        }
        assert_eq!(cvrp_capacity(50), 40.0);
        assert_eq!(cvrp_capacity(100), 50.0);
        assert_eq!(kp_capacity(50), 12.5);
        assert_eq!(kp_capacity(100), 25.0);
        assert_eq!(kp_capacity(200), 25.0);
    }

    #[test]
    fn instances_valid_across_seeds() {
        for seed in 0..2000 {
            generate(ProblemKind::Motsp, 12, 2, seed).unwrap().validate().unwrap();
            generate(ProblemKind::Mocvrp, 12, 2, seed).unwrap().validate().unwrap();
            generate(ProblemKind::Mokp, 12, 2, seed).unwrap().validate().unwrap();
        }
    }

    fn unit_square_tsp() -> Instance {
        // Both objectives share the same four corner coordinates.
        let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        Instance {
            n: 4,
            objectives: 2,
            seed: 0,
            data: InstanceData::Motsp {
                coords: corners.iter().map(|c| vec![*c, *c]).collect(),
            },
        }
    }

    #[test]
    fn tsp_tour_length_unit_square() {
        let inst = unit_square_tsp();
        let f = evaluate(&inst, &Solution(vec![0, 1, 2, 3])).unwrap();
        assert_eq!(f.raw, vec![4.0, 4.0]);
        assert_eq!(f.min_space(), vec![4.0, 4.0]);
    }

    #[test]
    fn tsp_rejects_non_permutations() {
        let inst = unit_square_tsp();
        assert!(evaluate(&inst, &Solution(vec![0, 1, 2, 2])).is_err());
        assert!(evaluate(&inst, &Solution(vec![0, 1, 2])).is_err());
    }

    #[test]
    fn cvrp_single_customer_route() {
        let inst = Instance {
            n: 1,
            objectives: 2,
            seed: 0,
            data: InstanceData::Mocvrp {
                depot: [0.0, 0.0],
                coords: vec![[1.0, 0.0]],
                demands: vec![5],
                capacity: 30.0,
            },
        };
        let f = evaluate(&inst, &Solution(vec![0])).unwrap();
        assert_eq!(f.raw, vec![2.0, 2.0]);
    }

    #[test]
    fn cvrp_splits_when_capacity_exceeded() {
        let inst = Instance {
            n: 3,
            objectives: 2,
            seed: 0,
            data: InstanceData::Mocvrp {
                depot: [0.0, 0.0],
                coords: vec![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
                demands: vec![6, 6, 6],
                capacity: 10.0,
            },
        };
        // 6 + 6 > 10 so the second customer opens a new route.
        let routes = split_routes(&inst, &[0, 1, 2]).unwrap();
        assert_eq!(routes, vec![vec![0], vec![1], vec![2]]);
        let f = evaluate(&inst, &Solution(vec![0, 1, 2])).unwrap();
        let r3 = 2.0 * (2.0f64).sqrt();
        assert!((f.raw[0] - (2.0 + 2.0 + r3)).abs() < 1e-12);
        assert!((f.raw[1] - r3).abs() < 1e-12);
    }

    #[test]
    fn kp_values_and_feasibility() {
        let inst = Instance {
            n: 2,
            objectives: 2,
            seed: 0,
            data: InstanceData::Mokp {
                weights: vec![0.6, 0.6],
                values: vec![[1.0, 0.5], [0.5, 1.0]],
                capacity: 1.0,
            },
        };
        let f = evaluate(&inst, &Solution(vec![0])).unwrap();
        assert_eq!(f.raw, vec![1.0, 0.5]);
        assert_eq!(f.min_space(), vec![-1.0, -0.5]);
        assert!(matches!(
            evaluate(&inst, &Solution(vec![0, 1])),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn masks_follow_capacity() {
        let inst = Instance {
            n: 3,
            objectives: 2,
            seed: 0,
            data: InstanceData::Mocvrp {
                depot: [0.0, 0.0],
                coords: vec![[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]],
                demands: vec![6, 9, 2],
                capacity: 10.0,
            },
        };
        // After serving customer 0 (demand 6) only demand <= 4 fits.
        let mask = feasible_actions(&inst, &Solution(vec![0])).unwrap();
        assert_eq!(mask, vec![false, false, true]);
        // After 0 then 2 (remaining 2), customer 1 (demand 9) no longer fits:
        // implicit depot return resets capacity and unmasks it.
        let mask = feasible_actions(&inst, &Solution(vec![0, 2])).unwrap();
        assert_eq!(mask, vec![false, true, false]);
        let st = replay(&inst, &Solution(vec![0, 2])).unwrap();
        assert_eq!(st.remaining, 10.0);
    }

    #[test]
    fn kp_mask_and_termination() {
        let inst = Instance {
            n: 2,
            objectives: 2,
            seed: 0,
            data: InstanceData::Mokp {
                weights: vec![0.6, 0.6],
                values: vec![[1.0, 0.5], [0.5, 1.0]],
                capacity: 1.0,
            },
        };
        let mask = feasible_actions(&inst, &Solution(vec![0])).unwrap();
        assert_eq!(mask, vec![false, false]);
        assert!(is_terminal(&inst, &Solution(vec![0])).unwrap());
        assert!(!is_terminal(&inst, &Solution(vec![])).unwrap());
    }

    #[test]
    fn augmentation_counts() {
        let tsp2 = generate(ProblemKind::Motsp, 6, 2, 3).unwrap();
        assert_eq!(augment(&tsp2, Augmentation::Full).unwrap().len(), 64);
        assert_eq!(augment(&tsp2, Augmentation::Partial).unwrap().len(), 32);
        assert_eq!(augment(&tsp2, Augmentation::None).unwrap().len(), 1);
        let tsp3 = generate(ProblemKind::Motsp, 6, 3, 3).unwrap();
        assert_eq!(augment(&tsp3, Augmentation::Full).unwrap().len(), 512);
        let cvrp = generate(ProblemKind::Mocvrp, 6, 2, 3).unwrap();
        assert_eq!(augment(&cvrp, Augmentation::Full).unwrap().len(), 8);
        assert_eq!(augment(&cvrp, Augmentation::Partial).unwrap().len(), 8);
        let kp = generate(ProblemKind::Mokp, 6, 2, 3).unwrap();
        assert!(augment(&kp, Augmentation::Full).is_err());
    }

    #[test]
    fn augmentation_preserves_objectives() {
        let inst = generate(ProblemKind::Motsp, 8, 2, 11).unwrap();
        let tour = Solution(vec![3, 1, 4, 0, 7, 6, 2, 5]);
        let base = evaluate(&inst, &tour).unwrap().raw;
        for variant in augment(&inst, Augmentation::Full).unwrap() {
            variant.validate().unwrap();
            let f = evaluate(&variant, &tour).unwrap().raw;
            for (a, b) in f.iter().zip(&base) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let cvrp = generate(ProblemKind::Mocvrp, 8, 2, 11).unwrap();
        let seq = Solution(vec![3, 1, 4, 0, 7, 6, 2, 5]);
        let base = evaluate(&cvrp, &seq).unwrap().raw;
        for variant in augment(&cvrp, Augmentation::Full).unwrap() {
            let f = evaluate(&variant, &seq).unwrap().raw;
            for (a, b) in f.iter().zip(&base) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn solution_string_roundtrip() {
        let s = Solution(vec![0, 3, 2, 1]);
        assert_eq!(s.encode(), "0-3-2-1");
        assert_eq!(Solution::decode("0-3-2-1").unwrap(), s);
        assert_eq!(Solution::decode("").unwrap(), Solution(vec![]));
        assert!(Solution::decode("0-x").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tsp_eval_is_rotation_invariant(seed in 0u64..500, rot in 1usize..7) {
            let inst = generate(ProblemKind::Motsp, 8, 2, seed).unwrap();
            let tour: Vec<usize> = (0..8).collect();
            let mut rotated = tour.clone();
            rotated.rotate_left(rot);
            let a = evaluate(&inst, &Solution(tour)).unwrap().raw;
            let b = evaluate(&inst, &Solution(rotated)).unwrap().raw;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn greedy_construction_always_terminates(seed in 0u64..200) {
            for kind in [ProblemKind::Motsp, ProblemKind::Mocvrp, ProblemKind::Mokp] {
                let inst = generate(kind, 10, 2, seed).unwrap();
                let mut partial = Solution(Vec::new());
                let mut steps = 0;
                loop {
                    let mask = feasible_actions(&inst, &partial).unwrap();
                    match mask.iter().position(|&m| m) {
                        Some(a) => partial.0.push(a),
                        None => break,
                    }
                    steps += 1;
                    prop_assert!(steps <= 10);
                }
                if kind != ProblemKind::Mokp {
                    prop_assert_eq!(partial.0.len(), 10);
                }
                evaluate(&inst, &partial).unwrap();
            }
        }
    }
}
