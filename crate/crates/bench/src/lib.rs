//! Fixtures shared by the criterion benches.

use ksmp::rng::stream;
use ksmp::{EmbeddingMatrix, KernelSpec, SamplingTree};

pub const QUERY_POOL: usize = 64;

/// A tree over `n` random classes plus a pool of random queries, both with
/// entries drawn from `N(0, 1/d)`.
pub fn fixture(n: usize, spec: KernelSpec, seed: u64) -> (SamplingTree, EmbeddingMatrix) {
    let d = spec.input_dim();
    let scale = 1.0 / (d as f64).sqrt();
    let mut rng = stream(seed, 0);
    let classes = EmbeddingMatrix::random_normal(n, d, scale, &mut rng).expect("valid shape");
    let queries = EmbeddingMatrix::random_normal(QUERY_POOL, d, scale, &mut rng).expect("valid shape");
    (SamplingTree::build(classes, spec).expect("tree builds"), queries)
}
