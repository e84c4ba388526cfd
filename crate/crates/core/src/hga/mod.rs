//! Heterogeneous graph attention policy.
//!
//! The policy embeds two node populations: the instance graph (cities,
//! customers, or items) and the point graph (the surrogate front plus the
//! reference corner). Each encoder layer runs three attention relations:
//! node-to-node, node-to-point, and point-to-node (point-to-point exists as an
//! ablation toggle and is off by default). The decoder builds a context
//! embedding per partial solution, refines it with one heterogeneous attention
//! hop over both populations, and scores actions with a clipped-tanh
//! compatibility over instance nodes only.
//!
//! Two conditioning variants:
//! - `NhdeP`: decoder weights are emitted by a hypernetwork from the current
//!   preference (weight vector + diversity factor); one model serves every
//!   preference.
//! - `NhdeM`: decoder weights are ordinary trainables; preferences are handled
//!   by meta-training plus per-preference fine-tuning.

mod decoder;
mod encoder;
mod gradcheck;

pub use decoder::{decode_distribution, decoder_weights, rollout, DecoderWeights, RolloutMode, RolloutOutput};
pub use encoder::{encode, Embeddings};
pub use gradcheck::{grad_check, GradCheckReport};

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Result};
use crate::pareto::ReferenceBox;
use crate::problems::{Instance, InstanceData, ProblemKind};
use crate::rng::SeedStreams;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Hypernetwork-conditioned decoder.
    NhdeP,
    /// Meta-trained model with plain decoder weights.
    NhdeM,
}

impl std::str::FromStr for Variant {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nhde-p" => Ok(Variant::NhdeP),
            "nhde-m" => Ok(Variant::NhdeM),
            other => Err(invalid(format!("unknown variant '{other}'"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::NhdeP => "nhde-p",
            Variant::NhdeM => "nhde-m",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width.
    pub d: usize,
    /// Encoder layers.
    #[serde(rename = "L")]
    pub layers: usize,
    /// Attention heads.
    #[serde(rename = "Y")]
    pub heads: usize,
    /// Feed-forward hidden width.
    pub ff: usize,
    /// Compatibility clipping constant.
    #[serde(rename = "C")]
    pub clip: f64,
    /// Hypernetwork hidden width (NhdeP only).
    pub hypernet_hidden: usize,
    pub variant: Variant,
    /// Node-to-point attention (nodes read the front).
    pub use_n2p: bool,
    /// Point-to-node attention (points read the instance).
    pub use_p2n: bool,
    /// Point-to-point attention; off in the reference configuration.
    pub use_p2p: bool,
    pub norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 16,
            layers: 2,
            heads: 2,
            ff: 64,
            clip: 10.0,
            hypernet_hidden: 64,
            variant: Variant::NhdeP,
            use_n2p: true,
            use_p2n: true,
            use_p2p: false,
            norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// Full-size settings for reference runs (the defaults are desk-scale).
    pub fn full_scale() -> Self {
        ModelConfig {
            d: 128,
            layers: 6,
            heads: 8,
            ff: 512,
            hypernet_hidden: 256,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.layers == 0 || self.heads == 0 || self.ff == 0 {
            return Err(invalid("model dimensions must be positive"));
        }
        if self.d % self.heads != 0 {
            return Err(invalid(format!(
                "embedding width {} not divisible by {} heads",
                self.d, self.heads
            )));
        }
        if self.variant == Variant::NhdeP && self.hypernet_hidden == 0 {
            return Err(invalid("hypernetwork hidden width must be positive"));
        }
        if !(self.clip > 0.0) || !(self.norm_eps > 0.0) {
            return Err(invalid("clip and norm_eps must be positive"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }
}

/// Per-node input feature width of the main projection.
pub fn node_feature_dim(kind: ProblemKind, objectives: usize) -> usize {
    match kind {
        ProblemKind::Motsp => 2 * objectives,
        ProblemKind::Mocvrp => 3,
        ProblemKind::Mokp => 3,
    }
}

/// Context embedding width fed to the decoder query.
pub fn context_dim(kind: ProblemKind, d: usize) -> usize {
    match kind {
        ProblemKind::Motsp => 3 * d,
        ProblemKind::Mocvrp => 2 * d + 1,
        ProblemKind::Mokp => d + 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Uniform,
    Zero,
    One,
}

/// One registered tensor: name, shape, initialization.
pub type ShapeEntry = (String, usize, usize, InitKind);

/// Encoder tensor registry for a problem family.
pub fn encoder_shapes(cfg: &ModelConfig, kind: ProblemKind, objectives: usize) -> Vec<ShapeEntry> {
    let d = cfg.d;
    let dk = cfg.head_dim();
    let mut s: Vec<ShapeEntry> = Vec::new();
    s.push(("enc.node_proj".into(), node_feature_dim(kind, objectives), d, InitKind::Uniform));
    if kind == ProblemKind::Mocvrp {
        s.push(("enc.depot_proj".into(), 2, d, InitKind::Uniform));
    }
    s.push(("enc.point_proj".into(), objectives, d, InitKind::Uniform));
    for l in 0..cfg.layers {
        for y in 0..cfg.heads {
            for w in ["wq_h", "wk_h", "wv_h", "wq_g", "wk_g", "wv_g"] {
                s.push((format!("enc.l{l}.y{y}.{w}"), d, dk, InitKind::Uniform));
            }
        }
        s.push((format!("enc.l{l}.wo_h"), d, d, InitKind::Uniform));
        s.push((format!("enc.l{l}.wo_g"), d, d, InitKind::Uniform));
        for side in ["h", "g"] {
            for norm in ["norm1", "norm2"] {
                s.push((format!("enc.l{l}.{norm}_{side}.gamma"), 1, d, InitKind::One));
                s.push((format!("enc.l{l}.{norm}_{side}.beta"), 1, d, InitKind::Zero));
            }
            s.push((format!("enc.l{l}.ff_{side}.w1"), d, cfg.ff, InitKind::Uniform));
            s.push((format!("enc.l{l}.ff_{side}.b1"), 1, cfg.ff, InitKind::Zero));
            s.push((format!("enc.l{l}.ff_{side}.w2"), cfg.ff, d, InitKind::Uniform));
            s.push((format!("enc.l{l}.ff_{side}.b2"), 1, d, InitKind::Zero));
        }
    }
    s
}

/// Decoder tensor registry. Under `NhdeP` these shapes are hypernetwork
/// outputs rather than stored parameters.
pub fn decoder_shapes(cfg: &ModelConfig, kind: ProblemKind) -> Vec<ShapeEntry> {
    let d = cfg.d;
    let dk = cfg.head_dim();
    let ctx = context_dim(kind, d);
    let mut s: Vec<ShapeEntry> = Vec::new();
    for y in 0..cfg.heads {
        s.push((format!("dec.y{y}.wq_ctx"), ctx, dk, InitKind::Uniform));
        for w in ["wk_n", "wv_n", "wk_p", "wv_p"] {
            s.push((format!("dec.y{y}.{w}"), d, dk, InitKind::Uniform));
        }
    }
    s.push(("dec.wo".into(), d, d, InitKind::Uniform));
    s.push(("dec.k_final".into(), d, d, InitKind::Uniform));
    s
}

/// Hypernetwork tensor registry: a two-hidden-layer MLP over the
/// `(weight, diversity factor)` input plus one linear head per decoder tensor.
pub fn hypernet_shapes(cfg: &ModelConfig, kind: ProblemKind, objectives: usize) -> Vec<ShapeEntry> {
    let hh = cfg.hypernet_hidden;
    let mut s: Vec<ShapeEntry> = vec![
        ("hyper.w1".into(), objectives + 2, hh, InitKind::Uniform),
        ("hyper.b1".into(), 1, hh, InitKind::Zero),
        ("hyper.w2".into(), hh, hh, InitKind::Uniform),
        ("hyper.b2".into(), 1, hh, InitKind::Zero),
    ];
    for (name, r, c, _) in decoder_shapes(cfg, kind) {
        s.push((format!("hyper.head.{name}.w"), hh, r * c, InitKind::Uniform));
        s.push((format!("hyper.head.{name}.b"), 1, r * c, InitKind::Zero));
    }
    s
}

/// Every stored tensor for the configured variant.
pub fn all_shapes(cfg: &ModelConfig, kind: ProblemKind, objectives: usize) -> Vec<ShapeEntry> {
    let mut s = encoder_shapes(cfg, kind, objectives);
    match cfg.variant {
        Variant::NhdeP => s.extend(hypernet_shapes(cfg, kind, objectives)),
        Variant::NhdeM => s.extend(decoder_shapes(cfg, kind)),
    }
    s
}

/// Model parameters: named tensors plus the configuration they were built for.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub kind: ProblemKind,
    pub objectives: usize,
    pub tensors: BTreeMap<String, Array2<f64>>,
}

impl ModelParams {
    /// Fresh parameters: weight matrices uniform in `[-1/sqrt(d), 1/sqrt(d)]`,
    /// biases zero, normalization scales one. Deterministic in the seed.
    pub fn init(
        config: ModelConfig,
        kind: ProblemKind,
        objectives: usize,
        streams: &SeedStreams,
    ) -> Result<Self> {
        config.validate()?;
        let limit = 1.0 / (config.d as f64).sqrt();
        let mut rng = streams.stream("init", &[]);
        let mut tensors = BTreeMap::new();
        for (name, r, c, init) in all_shapes(&config, kind, objectives) {
            let t = match init {
                InitKind::Uniform => {
                    Array2::from_shape_fn((r, c), |_| rng.gen_range(-limit..limit))
                }
                InitKind::Zero => Array2::zeros((r, c)),
                InitKind::One => Array2::ones((r, c)),
            };
            tensors.insert(name, t);
        }
        Ok(ModelParams { config, kind, objectives, tensors })
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing tensor '{name}'"))
    }

    /// All values finite.
    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Tape bindings of every stored tensor, so gradients land under tensor names.
pub struct BoundParams {
    pub vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn bind(tape: &mut Tape, params: &ModelParams) -> Self {
        let mut vars = BTreeMap::new();
        for (name, tensor) in &params.tensors {
            vars.insert(name.clone(), tape.param(name, tensor.clone()));
        }
        BoundParams { vars }
    }

    pub fn get(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("missing bound tensor '{name}'"))
    }
}

/// Instance node features. MOTSP: the M coordinate pairs; MOCVRP customers:
/// `(x, y, demand/capacity)` with the depot handled by its own projection;
/// MOKP items: `(weight, value1, value2)`.
pub fn node_features(instance: &Instance) -> (Array2<f64>, Option<Array2<f64>>) {
    match &instance.data {
        InstanceData::Motsp { coords } => {
            let m = instance.objectives;
            let mut f = Array2::zeros((instance.n, 2 * m));
            for (i, node) in coords.iter().enumerate() {
                for (g, c) in node.iter().enumerate() {
                    f[(i, 2 * g)] = c[0];
                    f[(i, 2 * g + 1)] = c[1];
                }
            }
            (f, None)
        }
        InstanceData::Mocvrp { depot, coords, demands, capacity } => {
            let mut f = Array2::zeros((instance.n, 3));
            for i in 0..instance.n {
                f[(i, 0)] = coords[i][0];
                f[(i, 1)] = coords[i][1];
                f[(i, 2)] = demands[i] as f64 / capacity;
            }
            let mut dep = Array2::zeros((1, 2));
            dep[(0, 0)] = depot[0];
            dep[(0, 1)] = depot[1];
            (f, Some(dep))
        }
        InstanceData::Mokp { weights, values, .. } => {
            let mut f = Array2::zeros((instance.n, 3));
            for i in 0..instance.n {
                f[(i, 0)] = weights[i];
                f[(i, 1)] = values[i][0];
                f[(i, 2)] = values[i][1];
            }
            (f, None)
        }
    }
}

/// Point features: objective vectors normalized into the evaluation box, so
/// the appended reference corner becomes the all-ones row.
pub fn point_features(points: &[Vec<f64>], bx: &ReferenceBox) -> Array2<f64> {
    let m = bx.objectives();
    let mut f = Array2::zeros((points.len(), m));
    for (i, p) in points.iter().enumerate() {
        let norm = bx.normalize_point(p);
        for (j, v) in norm.into_iter().enumerate() {
            f[(i, j)] = v;
        }
    }
    f
}

/// Rows in the encoded node graph; MOCVRP prepends the depot.
pub fn node_rows(instance: &Instance) -> usize {
    match instance.kind() {
        ProblemKind::Mocvrp => instance.n + 1,
        _ => instance.n,
    }
}

/// Node row holding a given action's embedding.
pub fn action_row(kind: ProblemKind, action: usize) -> usize {
    match kind {
        ProblemKind::Mocvrp => action + 1,
        _ => action,
    }
}
