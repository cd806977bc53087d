use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng;
use crate::softmax::softmax_in_place;

use super::config::ExperimentConfig;

const DATA_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Example {
    pub query: usize,
    pub label: usize,
}

/// Queries and classes with known ground-truth embeddings; each label is
/// drawn from `softmax(<u_q, v_i> / temperature)` for its query.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub truth_queries: EmbeddingMatrix,
    pub truth_classes: EmbeddingMatrix,
    pub temperature: f64,
    pub train: Vec<Example>,
    pub eval: Vec<Example>,
}

impl SyntheticDataset {
    pub fn n(&self) -> usize {
        self.truth_classes.n()
    }

    pub fn num_queries(&self) -> usize {
        self.truth_queries.n()
    }

    /// Ground-truth label distribution of `query`.
    pub fn truth_distribution(&self, query: usize) -> Vec<f64> {
        let mut p = self.truth_classes.logits(self.truth_queries.row(query));
        for v in p.iter_mut() {
            *v /= self.temperature;
        }
        softmax_in_place(&mut p);
        p
    }

    /// Mean cross-entropy of the ground truth on the eval set: the floor any
    /// model can reach in expectation.
    pub fn truth_eval_loss(&self) -> f64 {
        let dists: Vec<Vec<f64>> = (0..self.num_queries())
            .map(|q| self.truth_distribution(q))
            .collect();
        let total: f64 = self
            .eval
            .iter()
            .map(|e| -dists[e.query][e.label].ln())
            .sum();
        total / self.eval.len() as f64
    }
}

/// Deterministic in `seed`. Queries are assigned round-robin so every query
/// gets the same number of examples; train and eval are separate draws.
pub fn generate_synthetic(config: &ExperimentConfig, seed: u64) -> Result<SyntheticDataset> {
    if config.num_queries == 0 || config.n == 0 {
        return Err(Error::Config("need at least one query and one class".into()));
    }
    let mut rng = rng::stream(seed, DATA_STREAM);
    let truth_queries = EmbeddingMatrix::random_normal(config.num_queries, config.d, 1.0, &mut rng)?;
    let truth_classes = EmbeddingMatrix::random_normal(config.n, config.d, 1.0, &mut rng)?;

    let samplers: Vec<WeightedIndex<f64>> = (0..config.num_queries)
        .map(|q| {
            let mut p = truth_classes.logits(truth_queries.row(q));
            for v in p.iter_mut() {
                *v /= config.temperature;
            }
            softmax_in_place(&mut p);
            WeightedIndex::new(&p).map_err(|e| Error::Config(format!("label distribution: {e}")))
        })
        .collect::<Result<_>>()?;

    let draw = |count: usize, rng: &mut rng::SeededRng| -> Vec<Example> {
        (0..count)
            .map(|k| {
                let query = k % config.num_queries;
                Example {
                    query,
                    label: samplers[query].sample(rng),
                }
            })
            .collect()
    };
    let train = draw(config.examples_per_epoch, &mut rng);
    let eval = draw(config.eval_examples, &mut rng);

    Ok(SyntheticDataset {
        truth_queries,
        truth_classes,
        temperature: config.temperature,
        train,
        eval,
    })
}
