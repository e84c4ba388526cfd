//! Layered run configuration: an optional TOML file provides sections,
//! command-line flags override, defaults fill the rest. Hyperparameters keep
//! their symbolic names (K, J, N, N_prime, B, d, L, Y, C, E_f, eps0, T_m).

use anyhow::{Context, Result};
use nhde_core::hga::Variant;
use nhde_core::inference::{SolveConfig, SolveRollout};
use nhde_core::mpo::{MpoConfig, MpoMode};
use nhde_core::problems::{Augmentation, ProblemKind};
use nhde_core::training::{default_lr, MetaConfig, TrainConfig};
use nhde_core::ModelConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub mpo: MpoSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub meta: MetaSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub gen: GenSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: Option<ProblemKind>,
    pub n: Option<usize>,
    #[serde(rename = "M")]
    pub objectives: Option<usize>,
}

impl ProblemSection {
    pub fn kind(&self) -> ProblemKind {
        self.kind.unwrap_or(ProblemKind::Motsp)
    }
    pub fn n(&self) -> usize {
        self.n.unwrap_or(10)
    }
    pub fn objectives(&self) -> usize {
        self.objectives.unwrap_or(2)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub d: Option<usize>,
    #[serde(rename = "L")]
    pub layers: Option<usize>,
    #[serde(rename = "Y")]
    pub heads: Option<usize>,
    pub ff: Option<usize>,
    #[serde(rename = "C")]
    pub clip: Option<f64>,
    pub hypernet_hidden: Option<usize>,
    pub variant: Option<Variant>,
    pub use_n2p: Option<bool>,
    pub use_p2n: Option<bool>,
    pub use_p2p: Option<bool>,
}

impl ModelSection {
    /// Resolved model configuration; the flag wins over the file.
    pub fn build(&self, variant_flag: Option<Variant>) -> ModelConfig {
        let base = ModelConfig::default();
        ModelConfig {
            d: self.d.unwrap_or(base.d),
            layers: self.layers.unwrap_or(base.layers),
            heads: self.heads.unwrap_or(base.heads),
            ff: self.ff.unwrap_or(base.ff),
            clip: self.clip.unwrap_or(base.clip),
            hypernet_hidden: self.hypernet_hidden.unwrap_or(base.hypernet_hidden),
            variant: variant_flag.or(self.variant).unwrap_or(base.variant),
            use_n2p: self.use_n2p.unwrap_or(base.use_n2p),
            use_p2n: self.use_p2n.unwrap_or(base.use_p2n),
            use_p2p: self.use_p2p.unwrap_or(base.use_p2p),
            norm_eps: base.norm_eps,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpoSection {
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "J")]
    pub j: Option<usize>,
    pub mode: Option<MpoMode>,
}

impl MpoSection {
    pub fn build(&self, mode_flag: Option<MpoMode>) -> MpoConfig {
        let base = MpoConfig::default();
        MpoConfig {
            k: self.k.unwrap_or(base.k),
            j: self.j.unwrap_or(base.j),
            mode: mode_flag.or(self.mode).unwrap_or(base.mode),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(rename = "E")]
    pub epochs: Option<usize>,
    #[serde(rename = "B")]
    pub batch: Option<usize>,
    #[serde(rename = "N_prime")]
    pub inner: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    /// Epoch interval for validation rows in the training log (0 = off).
    pub val_interval: Option<usize>,
    /// Subproblems per validation solve.
    pub val_subproblems: Option<usize>,
    /// Epoch interval for intermediate checkpoints (0 = off).
    pub checkpoint_interval: Option<usize>,
}

impl TrainSection {
    pub fn build(&self, problem: &ProblemSection, mpo: MpoConfig) -> TrainConfig {
        let kind = problem.kind();
        TrainConfig {
            problem: kind,
            n: problem.n(),
            objectives: problem.objectives(),
            epochs: self.epochs.unwrap_or(40),
            batch: self.batch.unwrap_or(4),
            inner: self.inner.unwrap_or(5),
            lr: self.lr.unwrap_or_else(|| default_lr(kind)),
            weight_decay: self.weight_decay.unwrap_or(1e-6),
            mpo,
            ablation: Default::default(),
        }
    }
    pub fn val_interval(&self) -> usize {
        self.val_interval.unwrap_or(0)
    }
    pub fn val_subproblems(&self) -> usize {
        self.val_subproblems.unwrap_or(5)
    }
    pub fn checkpoint_interval(&self) -> usize {
        self.checkpoint_interval.unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaSection {
    #[serde(rename = "T_m")]
    pub meta_iters: Option<usize>,
    #[serde(rename = "N_prime")]
    pub tasks: Option<usize>,
    #[serde(rename = "E")]
    pub inner_epochs: Option<usize>,
    pub eps0: Option<f64>,
}

impl MetaSection {
    pub fn build(&self, train: TrainConfig) -> MetaConfig {
        let base = MetaConfig::default();
        MetaConfig {
            meta_iters: self.meta_iters.unwrap_or(base.meta_iters),
            tasks: self.tasks.unwrap_or(base.tasks),
            inner_epochs: self.inner_epochs.unwrap_or(base.inner_epochs),
            eps0: self.eps0.unwrap_or(base.eps0),
            train,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    #[serde(rename = "N")]
    pub subproblems: Option<usize>,
    #[serde(rename = "E_f")]
    pub finetune_steps: Option<usize>,
    pub finetune_lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub aug: Option<Augmentation>,
    pub rollout: Option<SolveRollout>,
    pub weight_scale: Option<Vec<f64>>,
}

impl SolveSection {
    pub fn build(
        &self,
        kind: ProblemKind,
        mpo: MpoConfig,
        aug_flag: Option<Augmentation>,
    ) -> SolveConfig {
        let base = SolveConfig::default();
        SolveConfig {
            subproblems: self.subproblems.unwrap_or(base.subproblems),
            mpo,
            augmentation: aug_flag.or(self.aug).unwrap_or(Augmentation::None),
            rollout: self.rollout.unwrap_or_default(),
            ablation: Default::default(),
            finetune_steps: self.finetune_steps.unwrap_or(base.finetune_steps),
            finetune_lr: self.finetune_lr.unwrap_or_else(|| default_lr(kind)),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            weight_scale: self.weight_scale.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    /// Knapsack DP discretization (weights and capacity scaled then floored).
    pub resolution: Option<f64>,
    pub pls_iterations: Option<usize>,
    pub pls_seeds: Option<usize>,
    pub random_count: Option<usize>,
    /// Greedy sweep size (scalarized constructions across a uniform set).
    pub greedy_weights: Option<usize>,
}

impl BaselineSection {
    pub fn resolution(&self) -> f64 {
        self.resolution.unwrap_or(nhde_core::baselines::DEFAULT_DP_RESOLUTION)
    }
    pub fn pls_iterations(&self) -> usize {
        self.pls_iterations.unwrap_or(50)
    }
    pub fn pls_seeds(&self) -> usize {
        self.pls_seeds.unwrap_or(8)
    }
    pub fn random_count(&self) -> usize {
        self.random_count.unwrap_or(200)
    }
    pub fn greedy_weights(&self) -> usize {
        self.greedy_weights.unwrap_or(11)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    pub count: Option<usize>,
}

impl GenSection {
    pub fn count(&self) -> usize {
        self.count.unwrap_or(20)
    }
}
