use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::weighted::{WeightedAliasIndex, WeightedIndex};
use rand_distr::Distribution;

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelSpec};
use crate::softmax::PredictionMode;
use crate::tree::{default_leaf_capacity, SamplingTree, DEFAULT_FEATURE_CAP};

use super::data::Example;

/// How negatives are chosen during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplerKind {
    /// No sampling: the full softmax loss over every class.
    Full,
    /// `q_i = 1 / n`.
    Uniform,
    /// `q_i ∝ count_i + 1` over training labels.
    Unigram,
    /// `q_j ∝ exp(o_j)` (or `exp(|o_j|)` in absolute mode) over the classes
    /// other than the positive, computed exactly in `O(n d)`.
    Softmax,
    /// `q_i ∝ K(h, w_i)` drawn from a [`SamplingTree`].
    Kernel(KernelKind),
}

impl SamplerKind {
    /// Absolute softmax for even polynomial kernels, standard otherwise.
    pub fn default_mode(&self) -> PredictionMode {
        match self {
            SamplerKind::Kernel(k) if k.is_even_polynomial() => PredictionMode::Absolute,
            _ => PredictionMode::Standard,
        }
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(SamplerKind::Full),
            "unigram" => Ok(SamplerKind::Unigram),
            "uniform" => Ok(SamplerKind::Uniform),
            "softmax" => Ok(SamplerKind::Softmax),
            _ => match s.parse::<KernelKind>()? {
                KernelKind::Uniform => Ok(SamplerKind::Uniform),
                KernelKind::ExactSoftmax => Ok(SamplerKind::Softmax),
                k => Ok(SamplerKind::Kernel(k)),
            },
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerKind::Full => f.write_str("full"),
            SamplerKind::Uniform => f.write_str("uniform"),
            SamplerKind::Unigram => f.write_str("unigram"),
            SamplerKind::Softmax => f.write_str("softmax"),
            SamplerKind::Kernel(k) => k.fmt(f),
        }
    }
}

/// A sampler bound to a model, ready to draw negatives.
#[derive(Debug)]
pub enum NegativeSampler {
    Full,
    Uniform { n: usize },
    Unigram { alias: WeightedAliasIndex<f64>, probs: Vec<f64> },
    Softmax { mode: PredictionMode },
    Kernel(SamplingTree),
}

impl NegativeSampler {
    pub fn new(
        kind: &SamplerKind,
        classes: &EmbeddingMatrix,
        train: &[Example],
        mode: PredictionMode,
        leaf_capacity: usize,
    ) -> Result<Self> {
        let n = classes.n();
        Ok(match kind {
            SamplerKind::Full => NegativeSampler::Full,
            SamplerKind::Uniform => NegativeSampler::Uniform { n },
            SamplerKind::Unigram => {
                let mut counts = vec![1.0; n];
                for e in train {
                    counts[e.label] += 1.0;
                }
                let total: f64 = counts.iter().sum();
                let probs: Vec<f64> = counts.iter().map(|c| c / total).collect();
                let alias = WeightedAliasIndex::new(counts)
                    .map_err(|e| Error::Config(format!("unigram table: {e}")))?;
                NegativeSampler::Unigram { alias, probs }
            }
            SamplerKind::Softmax => {
                if n < 2 {
                    return Err(Error::Config("softmax sampler needs at least two classes".into()));
                }
                NegativeSampler::Softmax { mode }
            }
            SamplerKind::Kernel(k) => {
                let spec = KernelSpec::new(*k, classes.d())?;
                let tau = if leaf_capacity == 0 {
                    default_leaf_capacity(&spec)
                } else {
                    leaf_capacity
                };
                NegativeSampler::Kernel(SamplingTree::build_with(
                    classes.clone(),
                    spec,
                    tau,
                    DEFAULT_FEATURE_CAP,
                )?)
            }
        })
    }

    pub fn is_full(&self) -> bool {
        matches!(self, NegativeSampler::Full)
    }

    pub fn tree(&self) -> Option<&SamplingTree> {
        match self {
            NegativeSampler::Kernel(t) => Some(t),
            _ => None,
        }
    }

    /// Appends `m` draws `(class, q)` for query embedding `h` with positive
    /// class `positive`.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        classes: &EmbeddingMatrix,
        h: &[f64],
        positive: usize,
        m: usize,
        rng: &mut R,
        out: &mut Vec<(usize, f64)>,
    ) -> Result<()> {
        match self {
            NegativeSampler::Full => {}
            NegativeSampler::Uniform { n } => {
                let q = 1.0 / *n as f64;
                out.extend((0..m).map(|_| (rng.random_range(0..*n), q)));
            }
            NegativeSampler::Unigram { alias, probs } => {
                out.extend((0..m).map(|_| {
                    let c = alias.sample(rng);
                    (c, probs[c])
                }));
            }
            NegativeSampler::Softmax { mode } => {
                let mut weights: Vec<f64> = classes
                    .rows()
                    .map(|w| mode.transform(crate::kernels::dot(w, h)))
                    .collect();
                weights[positive] = f64::NEG_INFINITY;
                let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for w in weights.iter_mut() {
                    *w = (*w - max).exp();
                    total += *w;
                }
                let index = WeightedIndex::new(&weights)
                    .map_err(|e| Error::Config(format!("softmax sampler: {e}")))?;
                out.extend((0..m).map(|_| {
                    let c = index.sample(rng);
                    (c, weights[c] / total)
                }));
            }
            NegativeSampler::Kernel(tree) => {
                let query = tree.query(h)?;
                out.extend((0..m).map(|_| {
                    let d = query.sample(rng);
                    (d.class, d.prob)
                }));
            }
        }
        Ok(())
    }

    /// Keeps the sampler in sync after the model changed row `class`.
    pub fn on_class_update(&mut self, class: usize, w: &[f64]) -> Result<()> {
        if let NegativeSampler::Kernel(tree) = self {
            tree.update_embedding(class, w)?;
        }
        Ok(())
    }
}
