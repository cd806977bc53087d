//! Divide-and-conquer sampler for kernel distributions.
//!
//! Classes are laid out in index order over `ceil(n / tau)` contiguous leaves
//! of at most `tau` classes each. The leaves sit at the bottom of an implicit
//! complete binary heap padded to a power of two, so every root-to-leaf path
//! has the same length `ceil(log2(ceil(n / tau)))`. Each node stores the
//! summary vector `z(C) = sum_{j in C} phi(w_j)` of the classes below it;
//! padding leaves hold `z = 0` and are never selected.
//!
//! A draw walks from the root, picking a child with probability
//! `<phi(h), z(child)> / (<phi(h), z(left)> + <phi(h), z(right)>)`, then picks
//! a class inside the leaf proportionally to `K(h, w_j)` evaluated in the
//! input space. The product of the choices telescopes to
//! `q_i = K(h, w_i) / <phi(h), z(root)>`.
//!
//! Each draw consumes exactly one uniform variate per internal node and one
//! for the leaf.
//!
//! Readers (`partition`, `probability`, sampling) may run concurrently;
//! [`SamplingTree::update_embedding`] takes `&mut self`.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rand::Rng;

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::kernels::{dot, KernelSpec};

/// Default cap on `D`, the number of `f64` entries stored per node.
pub const DEFAULT_FEATURE_CAP: usize = 1_000_000;

/// Node masses at or below this are treated as degenerate.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// `max(1, floor(D / d))`.
pub fn default_leaf_capacity(spec: &KernelSpec) -> usize {
    spec.feature_dim()
        .map_or(1, |dim| (dim / spec.input_dim()).max(1))
}

/// One sampled class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub class: usize,
    /// `q_i = K(h, w_i) / partition`.
    pub prob: f64,
    /// Product of the conditional choices made on the way down.
    pub path_prob: f64,
}

/// Work done by a single draw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DrawTrace {
    pub internal_visits: usize,
    pub leaf_evals: usize,
    pub degenerate: bool,
}

#[derive(Debug)]
pub struct SamplingTree {
    spec: KernelSpec,
    embeddings: EmbeddingMatrix,
    leaf_capacity: usize,
    feature_dim: usize,
    leaf_count: usize,
    padded_leaves: usize,
    height: usize,
    /// `(2 * padded_leaves - 1) * feature_dim` entries, heap order.
    z: Vec<f64>,
    degenerate_events: AtomicU64,
    last_internal_visits: AtomicUsize,
    last_leaf_evals: AtomicUsize,
}

impl Clone for SamplingTree {
    fn clone(&self) -> Self {
        SamplingTree {
            spec: self.spec,
            embeddings: self.embeddings.clone(),
            leaf_capacity: self.leaf_capacity,
            feature_dim: self.feature_dim,
            leaf_count: self.leaf_count,
            padded_leaves: self.padded_leaves,
            height: self.height,
            z: self.z.clone(),
            degenerate_events: AtomicU64::new(self.degenerate_events()),
            last_internal_visits: AtomicUsize::new(self.last_internal_visits.load(Ordering::Relaxed)),
            last_leaf_evals: AtomicUsize::new(self.last_leaf_evals.load(Ordering::Relaxed)),
        }
    }
}

impl SamplingTree {
    /// Builds with the default leaf capacity and feature cap.
    pub fn build(embeddings: EmbeddingMatrix, spec: KernelSpec) -> Result<Self> {
        let tau = default_leaf_capacity(&spec);
        Self::build_with(embeddings, spec, tau, DEFAULT_FEATURE_CAP)
    }

    pub fn build_with(
        embeddings: EmbeddingMatrix,
        spec: KernelSpec,
        leaf_capacity: usize,
        feature_cap: usize,
    ) -> Result<Self> {
        let feature_dim = spec
            .feature_dim()
            .ok_or_else(|| Error::NoFeatureMap(spec.kind().to_string()))?;
        if feature_dim > feature_cap {
            return Err(Error::FeatureDimTooLarge {
                dim: feature_dim,
                cap: feature_cap,
            });
        }
        if leaf_capacity == 0 {
            return Err(Error::ZeroLeafCapacity);
        }
        if embeddings.d() != spec.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.input_dim(),
                actual: embeddings.d(),
            });
        }
        let n = embeddings.n();
        let leaf_count = n.div_ceil(leaf_capacity);
        let padded_leaves = leaf_count.next_power_of_two();
        let height = padded_leaves.trailing_zeros() as usize;
        let mut tree = SamplingTree {
            spec,
            embeddings,
            leaf_capacity,
            feature_dim,
            leaf_count,
            padded_leaves,
            height,
            z: vec![0.0; (2 * padded_leaves - 1) * feature_dim],
            degenerate_events: AtomicU64::new(0),
            last_internal_visits: AtomicUsize::new(0),
            last_leaf_evals: AtomicUsize::new(0),
        };
        tree.fill_summaries();
        Ok(tree)
    }

    fn fill_summaries(&mut self) {
        let dim = self.feature_dim;
        let mut phi = vec![0.0; dim];
        for leaf in 0..self.leaf_count {
            let node = self.padded_leaves - 1 + leaf;
            let (lo, hi) = self.leaf_range(leaf);
            for class in lo..hi {
                self.spec
                    .feature_map_into(self.embeddings.row(class), &mut phi);
                for (acc, v) in self.z[node * dim..(node + 1) * dim].iter_mut().zip(&phi) {
                    *acc += v;
                }
            }
        }
        for node in (0..self.padded_leaves - 1).rev() {
            let (head, tail) = self.z.split_at_mut((2 * node + 1) * dim);
            let parent = &mut head[node * dim..(node + 1) * dim];
            let (left, right) = tail[..2 * dim].split_at(dim);
            for ((p, l), r) in parent.iter_mut().zip(left).zip(right) {
                *p = l + r;
            }
        }
    }

    /// A fresh tree over the current embeddings with the same layout.
    pub fn rebuilt(&self) -> Self {
        Self::build_with(
            self.embeddings.clone(),
            self.spec,
            self.leaf_capacity,
            usize::MAX,
        )
        .expect("layout was valid at construction")
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn n(&self) -> usize {
        self.embeddings.n()
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Number of leaves holding at least one class.
    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Internal nodes on every root-to-leaf path.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn internal_node_count(&self) -> usize {
        self.padded_leaves - 1
    }

    pub fn node_count(&self) -> usize {
        2 * self.padded_leaves - 1
    }

    pub fn summary(&self, node: usize) -> &[f64] {
        &self.z[node * self.feature_dim..(node + 1) * self.feature_dim]
    }

    pub fn root_summary(&self) -> &[f64] {
        self.summary(0)
    }

    fn leaf_range(&self, leaf: usize) -> (usize, usize) {
        let n = self.n();
        let lo = (leaf * self.leaf_capacity).min(n);
        let hi = ((leaf + 1) * self.leaf_capacity).min(n);
        (lo, hi)
    }

    /// Class range `[lo, hi)` covered by `node`.
    pub fn node_range(&self, node: usize) -> (usize, usize) {
        let depth = (usize::BITS - 1 - (node + 1).leading_zeros()) as usize;
        let pos = node + 1 - (1 << depth);
        let span = 1 << (self.height - depth);
        let n = self.n();
        let lo = (pos * span * self.leaf_capacity).min(n);
        let hi = ((pos + 1) * span * self.leaf_capacity).min(n);
        (lo, hi)
    }

    /// Heap index of the leaf holding `class`.
    pub fn leaf_node_of(&self, class: usize) -> usize {
        self.padded_leaves - 1 + class / self.leaf_capacity
    }

    fn check_query(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim(),
                actual: h.len(),
            });
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("query"));
        }
        Ok(())
    }

    /// Precomputes `phi(h)` and the partition function for repeated draws.
    pub fn query(&self, h: &[f64]) -> Result<Query<'_>> {
        self.check_query(h)?;
        let mut phi_h = vec![0.0; self.feature_dim];
        self.spec.feature_map_into(h, &mut phi_h);
        let partition = dot(&phi_h, self.root_summary());
        Ok(Query {
            tree: self,
            h: h.to_vec(),
            phi_h,
            partition,
        })
    }

    /// `sum_j K(h, w_j)` as `<phi(h), z(root)>`.
    pub fn partition(&self, h: &[f64]) -> Result<f64> {
        Ok(self.query(h)?.partition)
    }

    /// `q_i` for class `i`.
    pub fn probability(&self, h: &[f64], class: usize) -> Result<f64> {
        self.query(h)?.probability(class)
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, h: &[f64], rng: &mut R) -> Result<Draw> {
        Ok(self.query(h)?.sample(rng))
    }

    /// `m` independent draws with replacement.
    pub fn sample_negatives<R: Rng + ?Sized>(
        &self,
        h: &[f64],
        m: usize,
        rng: &mut R,
    ) -> Result<Vec<Draw>> {
        Ok(self.query(h)?.sample_negatives(m, rng))
    }

    /// Counters of the most recent draw.
    pub fn visit_count_probe(&self) -> DrawTrace {
        DrawTrace {
            internal_visits: self.last_internal_visits.load(Ordering::Relaxed),
            leaf_evals: self.last_leaf_evals.load(Ordering::Relaxed),
            degenerate: false,
        }
    }

    /// How many times a draw fell back to uniform sampling inside a node.
    pub fn degenerate_events(&self) -> u64 {
        self.degenerate_events.load(Ordering::Relaxed)
    }

    /// Replaces `w_i` and adds `phi(w_new) - phi(w_old)` to every summary on
    /// the path from the root to `i`'s leaf. Returns the number of internal
    /// nodes touched, which is always [`height`](Self::height).
    pub fn update_embedding(&mut self, class: usize, w_new: &[f64]) -> Result<usize> {
        let n = self.n();
        if class >= n {
            return Err(Error::ClassOutOfRange { index: class, n });
        }
        if w_new.len() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim(),
                actual: w_new.len(),
            });
        }
        if w_new.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding update"));
        }
        let dim = self.feature_dim;
        let mut delta = vec![0.0; dim];
        let mut old = vec![0.0; dim];
        self.spec.feature_map_into(w_new, &mut delta);
        self.spec
            .feature_map_into(self.embeddings.row(class), &mut old);
        for (d, o) in delta.iter_mut().zip(&old) {
            *d -= o;
        }
        self.embeddings.row_mut(class).copy_from_slice(w_new);

        let mut node = self.leaf_node_of(class);
        let mut touched = 0;
        loop {
            for (z, d) in self.z[node * dim..(node + 1) * dim].iter_mut().zip(&delta) {
                *z += d;
            }
            if node == 0 {
                break;
            }
            node = (node - 1) / 2;
            touched += 1;
        }
        Ok(touched)
    }

    /// Largest elementwise gap between corresponding summaries.
    pub fn max_deviation(&self, other: &SamplingTree) -> f64 {
        assert_eq!(self.z.len(), other.z.len(), "trees have different layouts");
        self.z
            .iter()
            .zip(&other.z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest elementwise `|z(parent) - z(left) - z(right)|` over all
    /// internal nodes.
    pub fn max_parent_residual(&self) -> f64 {
        let dim = self.feature_dim;
        let mut worst: f64 = 0.0;
        for node in 0..self.internal_node_count() {
            let (l, r) = (2 * node + 1, 2 * node + 2);
            for k in 0..dim {
                let gap = self.z[node * dim + k] - self.z[l * dim + k] - self.z[r * dim + k];
                worst = worst.max(gap.abs());
            }
        }
        worst
    }
}

/// A query with `phi(h)` and the partition function cached.
#[derive(Debug, Clone)]
pub struct Query<'t> {
    tree: &'t SamplingTree,
    h: Vec<f64>,
    phi_h: Vec<f64>,
    partition: f64,
}

impl Query<'_> {
    pub fn partition(&self) -> f64 {
        self.partition
    }

    pub fn kernel(&self, class: usize) -> f64 {
        self.tree
            .spec
            .eval_unchecked(&self.h, self.tree.embeddings.row(class))
    }

    pub fn probability(&self, class: usize) -> Result<f64> {
        let n = self.tree.n();
        if class >= n {
            return Err(Error::ClassOutOfRange { index: class, n });
        }
        Ok(self.kernel(class) / self.partition)
    }

    fn mass(&self, node: usize) -> f64 {
        dot(&self.phi_h, self.tree.summary(node)).max(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        self.sample_traced(rng).0
    }

    pub fn sample_traced<R: Rng + ?Sized>(&self, rng: &mut R) -> (Draw, DrawTrace) {
        let tree = self.tree;
        let mut trace = DrawTrace::default();
        let mut path_prob = 1.0;
        let mut node = 0;

        for _ in 0..tree.height {
            let (left, right) = (2 * node + 1, 2 * node + 2);
            let ml = self.mass(left);
            let mr = self.mass(right);
            let total = ml + mr;
            let u: f64 = rng.random();
            trace.internal_visits += 1;
            if total.is_nan() || total <= DEGENERATE_EPS {
                let (lo, hi) = tree.node_range(node);
                let class = lo + ((u * (hi - lo) as f64) as usize).min(hi - lo - 1);
                return self.finish_degenerate(class, path_prob / (hi - lo) as f64, trace);
            }
            let p_left = (ml / total).clamp(0.0, 1.0);
            if u < p_left {
                node = left;
                path_prob *= p_left;
            } else {
                node = right;
                path_prob *= (mr / total).clamp(0.0, 1.0);
            }
        }

        let leaf = node + 1 - tree.padded_leaves;
        let (lo, hi) = tree.leaf_range(leaf);
        let u: f64 = rng.random();
        let mut weights = [0.0f64; 64];
        let mut heap_weights;
        let weights: &mut [f64] = if hi - lo <= weights.len() {
            &mut weights[..hi - lo]
        } else {
            heap_weights = vec![0.0; hi - lo];
            &mut heap_weights
        };
        let mut total = 0.0;
        for (w, class) in weights.iter_mut().zip(lo..hi) {
            *w = self.kernel(class);
            total += *w;
        }
        trace.leaf_evals = hi - lo;
        if total.is_nan() || total <= DEGENERATE_EPS {
            let class = lo + ((u * (hi - lo) as f64) as usize).min(hi - lo - 1);
            return self.finish_degenerate(class, path_prob / (hi - lo) as f64, trace);
        }
        let target = u * total;
        let mut acc = 0.0;
        let mut pick = hi - lo - 1;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                pick = k;
                break;
            }
        }
        // Rounding can leave `target` at the top edge; never land on a
        // zero-weight tail entry.
        while weights[pick] <= 0.0 && pick > 0 {
            pick -= 1;
        }
        let class = lo + pick;
        path_prob *= weights[pick] / total;
        self.record(trace);
        (
            Draw {
                class,
                prob: weights[pick] / self.partition,
                path_prob,
            },
            trace,
        )
    }

    fn finish_degenerate(&self, class: usize, path_prob: f64, mut trace: DrawTrace) -> (Draw, DrawTrace) {
        trace.degenerate = true;
        self.tree.degenerate_events.fetch_add(1, Ordering::Relaxed);
        self.record(trace);
        let prob = if self.partition > DEGENERATE_EPS {
            self.kernel(class) / self.partition
        } else {
            1.0 / self.tree.n() as f64
        };
        (
            Draw {
                class,
                prob,
                path_prob,
            },
            trace,
        )
    }

    fn record(&self, trace: DrawTrace) {
        self.tree
            .last_internal_visits
            .store(trace.internal_visits, Ordering::Relaxed);
        self.tree
            .last_leaf_evals
            .store(trace.leaf_evals, Ordering::Relaxed);
    }

    pub fn sample_negatives<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<Draw> {
        (0..m).map(|_| self.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn random_tree(n: usize, d: usize, spec: KernelSpec, tau: usize, seed: u64) -> SamplingTree {
        let mut rng = seeded(seed);
        let w = EmbeddingMatrix::random_normal(n, d, 0.5, &mut rng).unwrap();
        SamplingTree::build_with(w, spec, tau, DEFAULT_FEATURE_CAP).unwrap()
    }

    #[test]
    fn single_class() {
        let w = EmbeddingMatrix::from_rows(&[vec![0.3, -0.2]]).unwrap();
        let spec = KernelSpec::quadratic(2, 100.0).unwrap();
        for tau in [1, 5] {
            let tree = SamplingTree::build_with(w.clone(), spec, tau, DEFAULT_FEATURE_CAP).unwrap();
            assert_eq!(tree.height(), 0);
            assert_eq!(tree.internal_node_count(), 0);
            assert_eq!(tree.root_summary(), &spec.feature_map(w.row(0)).unwrap()[..]);
            let mut rng = seeded(1);
            for _ in 0..10 {
                let d = tree.sample_one(&[1.0, 2.0], &mut rng).unwrap();
                assert_eq!(d.class, 0);
                assert!((d.prob - 1.0).abs() < 1e-12);
                assert_eq!(
                    tree.visit_count_probe(),
                    DrawTrace { internal_visits: 0, leaf_evals: 1, degenerate: false }
                );
            }
        }
    }

    #[test]
    fn eight_singleton_leaves() {
        let spec = KernelSpec::quadratic(3, 2.0).unwrap();
        let tree = random_tree(8, 3, spec, 1, 4);
        assert_eq!(tree.internal_node_count(), 7);
        assert_eq!(tree.height(), 3);
        let mut expected = vec![0.0; spec.feature_dim().unwrap()];
        for w in tree.embeddings().rows() {
            for (e, v) in expected.iter_mut().zip(spec.feature_map(w).unwrap()) {
                *e += v;
            }
        }
        for (a, b) in tree.root_summary().iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn layout_arithmetic() {
        let spec = KernelSpec::quadratic(8, 100.0).unwrap();
        assert_eq!(spec.feature_dim(), Some(65));
        assert_eq!(default_leaf_capacity(&spec), 8);
        let tree = random_tree(1000, 8, spec, 8, 2);
        assert_eq!(tree.leaf_count(), 125);
        assert_eq!(tree.height(), 7);
        assert_eq!(tree.node_range(0), (0, 1000));
        assert_eq!(tree.node_range(1), (0, 512));
        assert_eq!(tree.node_range(2), (512, 1000));
        // last real leaf holds 992..1000; padding after it is empty
        assert_eq!(tree.node_range(127 + 124), (992, 1000));
        assert_eq!(tree.node_range(127 + 125), (1000, 1000));
        assert_eq!(tree.leaf_node_of(999), 127 + 124);
    }

    #[test]
    fn uniform_partition_counts_classes() {
        let spec = KernelSpec::uniform(3).unwrap();
        let tree = random_tree(10, 3, spec, 1, 0);
        assert_eq!(tree.partition(&[0.4, 1.0, -3.0]).unwrap(), 10.0);

        let quad = KernelSpec::quadratic(3, 100.0).unwrap();
        let tree = random_tree(37, 3, quad, 4, 0);
        assert!((tree.partition(&[0.0; 3]).unwrap() - 37.0).abs() < 1e-9);
    }

    #[test]
    fn unchanged_update_is_noop() {
        let spec = KernelSpec::quadratic(4, 100.0).unwrap();
        let mut tree = random_tree(50, 4, spec, 3, 9);
        let before = tree.clone();
        let w = tree.embeddings().row(17).to_vec();
        assert_eq!(tree.update_embedding(17, &w).unwrap(), tree.height());
        assert_eq!(tree.max_deviation(&before), 0.0);
    }

    #[test]
    fn single_class_update() {
        let spec = KernelSpec::quadratic(2, 3.0).unwrap();
        let mut tree = random_tree(1, 2, spec, 1, 9);
        tree.update_embedding(0, &[0.7, -1.1]).unwrap();
        let phi = spec.feature_map(&[0.7, -1.1]).unwrap();
        for (a, b) in tree.root_summary().iter().zip(&phi) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn update_rejects_bad_input() {
        let spec = KernelSpec::quadratic(2, 3.0).unwrap();
        let mut tree = random_tree(4, 2, spec, 1, 9);
        assert!(tree.update_embedding(4, &[0.0, 0.0]).is_err());
        assert!(tree.update_embedding(0, &[0.0]).is_err());
        assert!(matches!(
            tree.update_embedding(0, &[f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn build_errors() {
        let w = EmbeddingMatrix::zeros(4, 8).unwrap();
        let quartic = KernelSpec::quartic(8, 1.0).unwrap();
        assert!(matches!(
            SamplingTree::build_with(w.clone(), quartic, 1, 1000),
            Err(Error::FeatureDimTooLarge { dim: 4097, cap: 1000 })
        ));
        let soft = KernelSpec::exact_softmax(8).unwrap();
        assert!(matches!(SamplingTree::build(w.clone(), soft), Err(Error::NoFeatureMap(_))));
        let quad = KernelSpec::quadratic(8, 1.0).unwrap();
        assert!(matches!(
            SamplingTree::build_with(w.clone(), quad, 0, DEFAULT_FEATURE_CAP),
            Err(Error::ZeroLeafCapacity)
        ));
        let quad3 = KernelSpec::quadratic(3, 1.0).unwrap();
        assert!(SamplingTree::build(w, quad3).is_err());
    }

    #[test]
    fn zero_negatives() {
        let spec = KernelSpec::quadratic(2, 1.0).unwrap();
        let tree = random_tree(5, 2, spec, 1, 1);
        assert!(tree.sample_negatives(&[0.1, 0.2], 0, &mut seeded(0)).unwrap().is_empty());
    }

    #[test]
    fn degenerate_node_falls_back_to_uniform() {
        // Polynomial kernels never give a zero-mass node; zero them by hand.
        let spec = KernelSpec::quadratic(2, 1.0).unwrap();
        let mut tree = random_tree(4, 2, spec, 2, 1);
        for v in tree.z.iter_mut() {
            *v = 0.0;
        }
        let mut rng = seeded(5);
        let (draw, trace) = tree.query(&[1.0, 1.0]).unwrap().sample_traced(&mut rng);
        assert!(trace.degenerate);
        assert!(draw.class < 4);
        assert_eq!(tree.degenerate_events(), 1);
    }

    #[test]
    fn telescoping_and_leaf_bounds() {
        let spec = KernelSpec::quadratic(3, 100.0).unwrap();
        let tree = random_tree(300, 3, spec, 3, 8);
        let mut rng = seeded(10);
        let q = tree.query(&[0.3, -0.8, 0.5]).unwrap();
        for _ in 0..2000 {
            let (draw, trace) = q.sample_traced(&mut rng);
            assert!((draw.path_prob - draw.prob).abs() <= 1e-9 * draw.prob);
            assert_eq!(trace.internal_visits, tree.height());
            assert!(trace.leaf_evals <= tree.leaf_capacity());
        }
    }
}
