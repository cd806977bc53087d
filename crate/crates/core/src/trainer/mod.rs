//! A dot-product model trained with sampled softmax, the samplers it can
//! use, synthetic data, and the bias/convergence experiments.

pub mod config;
pub mod data;
pub mod experiments;
pub mod sampler;
pub mod train;

pub use config::ExperimentConfig;
pub use data::{generate_synthetic, Example, SyntheticDataset};
pub use experiments::{
    run_bias_experiment, run_convergence_experiment, BiasAnalysis, BiasTable, ConvergenceCurves,
};
pub use sampler::{NegativeSampler, SamplerKind};
pub use train::{train, DotModel, MetricsRow, MetricsTable, RunSpec, TrainOutcome};
