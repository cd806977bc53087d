//! Adaptive sampled softmax with kernel-based sampling.
//!
//! Negatives for sampled softmax are drawn from `q_i ∝ K(h, w_i)` where `K`
//! is a polynomial kernel with an explicit feature map. A divide-and-conquer
//! tree over per-node feature sums samples in `O(D log n)` and absorbs
//! embedding updates in the same time, so the sampling distribution tracks
//! the model as it trains.
//!
//! - [`kernels`]: kernels and feature maps.
//! - [`tree`]: the sampling tree.
//! - [`softmax`]: full and sampled softmax losses and gradients.
//! - [`oracle`]: brute-force references and the chi-square test.
//! - [`trainer`]: a dot-product model, samplers, synthetic data and the
//!   bias/convergence experiments.

pub mod embeddings;
pub mod error;
pub mod kernels;
pub mod oracle;
pub mod rng;
pub mod softmax;
pub mod trainer;
pub mod tree;

pub use embeddings::EmbeddingMatrix;
pub use error::{Error, Result};
pub use kernels::{KernelKind, KernelSpec};
pub use softmax::{PredictionMode, SampleBatch};
pub use trainer::{ExperimentConfig, MetricsTable, SamplerKind};
pub use tree::{Draw, DrawTrace, SamplingTree};
