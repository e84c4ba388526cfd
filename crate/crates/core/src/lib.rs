//! Multi-objective combinatorial optimization engine.

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod hga;
pub mod inference;
pub mod io;
pub mod mpo;
pub mod pareto;
pub mod problems;
pub mod rng;
pub mod scalarization;
pub mod training;

pub use error::{Error, Result};
pub use hga::{ModelConfig, ModelParams, Variant};
pub use inference::{RunMetrics, SolveConfig, SolveOutcome, SolveRollout};
pub use mpo::{MpoConfig, MpoMode, SurrogateFront};
pub use pareto::{ParetoArchive, ReferenceBox};
pub use problems::{Instance, InstanceData, ProblemKind, Solution};
pub use rng::SeedStreams;
pub use scalarization::{DiversityFactor, PreferenceSchedule, Weight};
pub use training::{Ablation, MetaConfig, TrainConfig, TrainReport};
