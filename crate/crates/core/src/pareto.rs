//! Pareto dominance, non-dominated archives, and hypervolume computation.
//!
//! All functions operate on minimization-sense objective vectors. Maximization
//! problems are negated before reaching this module. `hv_exact` supports 2 and 3
//! objectives; `hv_monte_carlo` is the seeded statistical oracle for any dimension.

use crate::error::{invalid, Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::problems::ProblemKind;

/// `a` dominates `b`: no component worse, at least one strictly better.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// Dominates-or-equal: no component worse.
pub fn weakly_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Indices of the non-dominated subset, duplicates collapsed to the first
/// occurrence. Order of survivors follows the input order.
pub fn nondominated_indices(points: &[Vec<f64>]) -> Vec<usize> {
    let mut keep = Vec::new();
    'outer: for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            if dominates(q, p) {
                continue 'outer;
            }
            if q == p && j < i {
                continue 'outer;
            }
        }
        keep.push(i);
    }
    keep
}

/// Non-dominated subset of `points`, duplicates collapsed to one.
pub fn nondominated_filter(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    nondominated_indices(points)
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

fn check_dims(points: &[Vec<f64>], m: usize) -> Result<()> {
    for p in points {
        if p.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "point has {} components, expected {}",
                p.len(),
                m
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite objective value"));
        }
    }
    Ok(())
}

/// Exact hypervolume dominated by `points` within the region bounded above by `r`.
///
/// Supports 2 or 3 objectives. Points need not be mutually non-dominated or
/// deduplicated; dominated duplicates contribute nothing. Errors if any point
/// fails to strictly dominate `r` in every component.
pub fn hv_exact(points: &[Vec<f64>], r: &[f64]) -> Result<f64> {
    check_dims(points, r.len())?;
    for p in points {
        if !p.iter().zip(r).all(|(v, rv)| v < rv) {
            return Err(Error::ReferenceViolation {
                point: p.clone(),
                reference: r.to_vec(),
            });
        }
    }
    Ok(hv_exact_clipped(points, r))
}

/// Like [`hv_exact`] but points that fail to strictly dominate `r` contribute
/// zero instead of erroring. Used during training where early policies may
/// produce out-of-box solutions.
pub fn hv_exact_clipped(points: &[Vec<f64>], r: &[f64]) -> f64 {
    let m = r.len();
    let inside: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p.len() == m && p.iter().zip(r).all(|(v, rv)| v < rv))
        .cloned()
        .collect();
    if inside.is_empty() {
        return 0.0;
    }
    let front = nondominated_filter(&inside);
    match m {
        2 => hv2(&front, r),
        3 => hv3(&front, r),
        _ => panic!("hv_exact supports 2 or 3 objectives, got {}", m),
    }
}

/// Sweep over points sorted by the first objective. `front` must be mutually
/// non-dominated and strictly inside `r`.
fn hv2(front: &[Vec<f64>], r: &[f64]) -> f64 {
    let mut pts: Vec<[f64; 2]> = front.iter().map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut hv = 0.0;
    let mut prev_y = r[1];
    for p in &pts {
        hv += (r[0] - p[0]) * (prev_y - p[1]);
        prev_y = p[1];
    }
    hv
}

/// Dimension sweep along the third objective: accumulate 2-D slabs between
/// consecutive distinct third-coordinate levels.
fn hv3(front: &[Vec<f64>], r: &[f64]) -> f64 {
    let mut pts: Vec<[f64; 3]> = front.iter().map(|p| [p[0], p[1], p[2]]).collect();
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let n = pts.len();
    let mut stair: Vec<[f64; 2]> = Vec::new();
    let mut hv = 0.0;
    let mut i = 0;
    while i < n {
        let level = pts[i][2];
        while i < n && pts[i][2] == level {
            stair_insert(&mut stair, [pts[i][0], pts[i][1]]);
            i += 1;
        }
        let next = if i < n { pts[i][2] } else { r[2] };
        hv += hv2_stair(&stair, r) * (next - level);
    }
    hv
}

/// Inserts into a 2-D staircase kept sorted by x ascending (y strictly
/// descending); drops the point if weakly dominated, evicts points it dominates.
fn stair_insert(stair: &mut Vec<[f64; 2]>, p: [f64; 2]) {
    if stair
        .iter()
        .any(|q| q[0] <= p[0] && q[1] <= p[1])
    {
        return;
    }
    stair.retain(|q| !(p[0] <= q[0] && p[1] <= q[1]));
    let pos = stair.partition_point(|q| q[0] < p[0]);
    stair.insert(pos, p);
}

fn hv2_stair(stair: &[[f64; 2]], r: &[f64]) -> f64 {
    let mut hv = 0.0;
    let mut prev_y = r[1];
    for p in stair {
        hv += (r[0] - p[0]) * (prev_y - p[1]);
        prev_y = p[1];
    }
    hv
}

/// Axis-aligned evaluation region: `z` (ideal corner) strictly better than
/// `r` (reference corner) in every component, minimization sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBox {
    pub r: Vec<f64>,
    pub z: Vec<f64>,
}

impl ReferenceBox {
    pub fn new(r: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if r.len() != z.len() || r.is_empty() {
            return Err(Error::DimensionMismatch(
                "reference box corners must share a nonzero dimension".into(),
            ));
        }
        if !r.iter().zip(&z).all(|(rv, zv)| zv < rv) {
            return Err(invalid("reference box requires z < r componentwise"));
        }
        Ok(ReferenceBox { r, z })
    }

    pub fn objectives(&self) -> usize {
        self.r.len()
    }

    pub fn volume(&self) -> f64 {
        self.r.iter().zip(&self.z).map(|(r, z)| r - z).product()
    }

    /// Maps a point into `[0,1]^M` coordinates of the box.
    pub fn normalize_point(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(m, v)| (v - self.z[m]) / (self.r[m] - self.z[m]))
            .collect()
    }

    /// Default evaluation box for a problem family and size, minimization sense
    /// (knapsack corners are negated). Sizes between published anchors are
    /// linearly interpolated; sizes outside extend the nearest segment.
    pub fn for_problem(kind: ProblemKind, n: usize, m: usize) -> Result<Self> {
        let x = n as f64;
        match kind {
            ProblemKind::Motsp => {
                if m != 2 && m != 3 {
                    return Err(invalid("motsp supports 2 or 3 objectives"));
                }
                let anchors = [(20.0, 20.0), (50.0, 35.0), (100.0, 65.0), (150.0, 85.0), (200.0, 115.0)];
                let r = piecewise(&anchors, x);
                ReferenceBox::new(vec![r; m], vec![0.0; m])
            }
            ProblemKind::Mocvrp => {
                if m != 2 {
                    return Err(invalid("mocvrp supports exactly 2 objectives"));
                }
                let anchors = [(20.0, 30.0), (50.0, 45.0), (100.0, 80.0)];
                let r0 = piecewise(&anchors, x);
                ReferenceBox::new(vec![r0, 4.0], vec![0.0, 0.0])
            }
            ProblemKind::Mokp => {
                if m != 2 {
                    return Err(invalid("mokp supports exactly 2 objectives"));
                }
                // Raw maximization corners (r below the front, z above); sizes
                // under the smallest anchor fall back to the loose box [0, n].
                let (r_raw, z_raw) = if x < 50.0 {
                    (0.0, x)
                } else {
                    let r_anchors = [(50.0, 5.0), (100.0, 20.0), (200.0, 30.0)];
                    let z_anchors = [(50.0, 30.0), (100.0, 50.0), (200.0, 75.0)];
                    (piecewise(&r_anchors, x), piecewise(&z_anchors, x))
                };
                ReferenceBox::new(vec![-r_raw; 2], vec![-z_raw; 2])
            }
        }
    }
}

/// Piecewise-linear interpolation through `(x, y)` anchors sorted by x;
/// extrapolates the first/last segment beyond the ends.
fn piecewise(anchors: &[(f64, f64)], x: f64) -> f64 {
    let n = anchors.len();
    let seg = if x <= anchors[0].0 {
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
    let ((x0, y0), (x1, y1)) = seg;
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Hypervolume of `points` divided by the box volume; lies in `[0,1]` for
/// points inside the box. Errors if any point violates the reference corner.
pub fn hv_normalized(points: &[Vec<f64>], bx: &ReferenceBox) -> Result<f64> {
    Ok(hv_exact(points, &bx.r)? / bx.volume())
}

/// Clipping variant of [`hv_normalized`] for training-time rewards.
pub fn hv_normalized_clipped(points: &[Vec<f64>], bx: &ReferenceBox) -> f64 {
    hv_exact_clipped(points, &bx.r) / bx.volume()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Seeded Monte-Carlo hypervolume: fraction of uniform box samples weakly
/// dominated by some point, times the box volume. Works for any dimension.
pub fn hv_monte_carlo(points: &[Vec<f64>], bx: &ReferenceBox, samples: usize, seed: u64) -> McEstimate {
    assert!(samples > 0, "need at least one sample");
    let m = bx.objectives();
    // Largest exclusive boxes first so dominated samples exit early.
    let mut pts: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(&bx.r).all(|(v, rv)| v < rv))
        .cloned()
        .collect();
    pts.sort_by(|a, b| {
        let va: f64 = a.iter().zip(&bx.r).map(|(v, rv)| rv - v).product();
        let vb: f64 = b.iter().zip(&bx.r).map(|(v, rv)| rv - v).product();
        vb.total_cmp(&va)
    });
    let flat: Vec<f64> = pts.iter().flatten().copied().collect();
    let npts = pts.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits: u64 = 0;
    let mut u = vec![0.0f64; m];
    for _ in 0..samples {
        for (d, ud) in u.iter_mut().enumerate() {
            *ud = bx.z[d] + (bx.r[d] - bx.z[d]) * rng.gen::<f64>();
        }
        'pts: for p in 0..npts {
            let base = p * m;
            for d in 0..m {
                if flat[base + d] > u[d] {
                    continue 'pts;
                }
            }
            hits += 1;
            break;
        }
    }
    let vol = bx.volume();
    let p_hat = hits as f64 / samples as f64;
    McEstimate {
        value: p_hat * vol,
        stderr: vol * (p_hat * (1.0 - p_hat) / samples as f64).sqrt(),
    }
}

/// Outcome of offering a point to a [`ParetoArchive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    /// Entered the archive; `evicted` entries it dominated were removed.
    Accepted { evicted: usize },
    /// Exactly equal objective vector already present.
    Duplicate,
    /// Weakly dominated by an existing entry.
    Dominated,
}

/// Mutually non-dominated set of objective vectors with attached payloads.
/// Entries keep their insertion order; ties in any downstream ranking break on
/// that order, which makes every consumer deterministic.
#[derive(Debug, Clone)]
pub struct ParetoArchive<T> {
    entries: Vec<ArchiveEntry<T>>,
    next_id: u64,
}

#[derive(Debug, Clone)]
pub struct ArchiveEntry<T> {
    pub objectives: Vec<f64>,
    pub payload: T,
    pub id: u64,
}

impl<T> Default for ParetoArchive<T> {
    fn default() -> Self {
        ParetoArchive { entries: Vec::new(), next_id: 0 }
    }
}

impl<T> ParetoArchive<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ArchiveEntry<T>] {
        &self.entries
    }

    pub fn fronts(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.objectives.clone()).collect()
    }

    /// Offers a point. Duplicates and dominated points are rejected; an accepted
    /// point evicts every entry it dominates.
    pub fn insert(&mut self, objectives: Vec<f64>, payload: T) -> InsertOutcome {
        for e in &self.entries {
            if e.objectives == objectives {
                return InsertOutcome::Duplicate;
            }
        }
        for e in &self.entries {
            if dominates(&e.objectives, &objectives) {
                return InsertOutcome::Dominated;
            }
        }
        let before = self.entries.len();
        self.entries.retain(|e| !dominates(&objectives, &e.objectives));
        let evicted = before - self.entries.len();
        self.entries.push(ArchiveEntry { objectives, payload, id: self.next_id });
        self.next_id += 1;
        InsertOutcome::Accepted { evicted }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}
