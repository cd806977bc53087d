//! Brute-force references: exact kernel distributions, a chi-square
//! goodness-of-fit test, and exact enumeration of the expected sampled
//! softmax gradient over every ordered sample.

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelSpec};
use crate::softmax::{adjust_logits, softmax_in_place};
use crate::tree::SamplingTree;

/// Significance level of [`chi_square_gof`].
pub const SIGNIFICANCE: f64 = 1e-3;

/// Draw count below which the chi-square approximation is not trusted.
pub const MIN_GOF_DRAWS: u64 = 100_000;

/// Bins are pooled until their expected count reaches this.
pub const MIN_EXPECTED_PER_BIN: f64 = 5.0;

/// `q_i = K(h, w_i) / sum_j K(h, w_j)` computed directly in `O(n d)`.
/// The exact softmax kernel is normalized in log space.
pub fn exact_distribution(embeddings: &EmbeddingMatrix, spec: &KernelSpec, h: &[f64]) -> Result<Vec<f64>> {
    if h.len() != spec.input_dim() || embeddings.d() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            actual: if h.len() != spec.input_dim() { h.len() } else { embeddings.d() },
        });
    }
    let mut q: Vec<f64> = match spec.kind() {
        KernelKind::ExactSoftmax => {
            let mut o = embeddings.logits(h);
            softmax_in_place(&mut o);
            return Ok(o);
        }
        _ => embeddings.rows().map(|w| spec.eval_unchecked(h, w)).collect(),
    };
    let total: f64 = q.iter().sum();
    for v in q.iter_mut() {
        *v /= total;
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub critical_value: f64,
    pub p_value: f64,
    pub pass: bool,
}

/// Pearson chi-square test of `counts` against `probs` at [`SIGNIFICANCE`].
///
/// Adjacent bins are pooled in index order until each pooled bin expects at
/// least five draws; a short remainder joins the last pooled bin. Critical
/// values come from the inverse chi-square CDF.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<GofResult> {
    if counts.len() != probs.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            actual: counts.len(),
        });
    }
    let total: u64 = counts.iter().sum();
    if total < MIN_GOF_DRAWS {
        return Err(Error::InsufficientDraws {
            required: MIN_GOF_DRAWS,
            actual: total,
        });
    }
    let norm: f64 = probs.iter().sum();
    let n = total as f64;

    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut impossible = false;
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        if p <= 0.0 && c > 0 {
            impossible = true;
        }
        obs += c as f64;
        exp += n * p / norm;
        if exp >= MIN_EXPECTED_PER_BIN {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 || obs > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => bins.push((obs, exp)),
        }
    }

    let dof = bins.len().saturating_sub(1);
    let statistic = if impossible {
        f64::INFINITY
    } else {
        bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum()
    };
    if dof == 0 {
        return Ok(GofResult {
            statistic,
            degrees_of_freedom: 0,
            critical_value: 0.0,
            p_value: if statistic == 0.0 { 1.0 } else { 0.0 },
            pass: statistic == 0.0,
        });
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    let critical_value = dist.inverse_cdf(1.0 - SIGNIFICANCE);
    let p_value = if statistic.is_finite() { dist.sf(statistic) } else { 0.0 };
    Ok(GofResult {
        statistic,
        degrees_of_freedom: dof,
        critical_value,
        p_value,
        pass: statistic <= critical_value,
    })
}

/// `q_j ∝ exp(o_j)` over `j != positive`, zero at the positive.
pub fn softmax_over_negatives(o: &[f64], positive: usize) -> Vec<f64> {
    let mut q = o.to_vec();
    q[positive] = f64::NEG_INFINITY;
    softmax_in_place(&mut q);
    q
}

/// `1 / (n - 1)` for every class except the positive.
pub fn uniform_over_negatives(n: usize, positive: usize) -> Vec<f64> {
    let mut q = vec![1.0 / (n - 1) as f64; n];
    q[positive] = 0.0;
    q
}

/// Exact expectations over every ordered sample of `m` negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedMass {
    /// `E[sum_j I(s_j = i) p'_j]` for each class `i`.
    pub per_class: Vec<f64>,
    /// `E[p'_0]`, the probability of the positive slot.
    pub positive_slot: f64,
    /// `E[sum_{k >= 1} exp(o'_k)]`.
    pub negative_exp_sum: f64,
}

pub const MAX_ENUM_CLASSES: usize = 10;
pub const MAX_ENUM_SAMPLES: usize = 4;

/// Enumerates all `n^m` ordered negative samples, weighting each by the
/// product of its `q` values. Classes with `q = 0` are never sampled.
pub fn enumerate_expected_mass(o: &[f64], positive: usize, q: &[f64], m: usize) -> Result<ExpectedMass> {
    let n = o.len();
    if n > MAX_ENUM_CLASSES || m > MAX_ENUM_SAMPLES {
        return Err(Error::EnumerationTooLarge { n, m });
    }
    if q.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: q.len() });
    }
    if positive >= n {
        return Err(Error::ClassOutOfRange { index: positive, n });
    }
    let support: Vec<usize> = (0..n).filter(|&i| q[i] > 0.0).collect();
    let mut per_class = vec![0.0; n];
    let mut positive_slot = 0.0;
    let mut negative_exp_sum = 0.0;

    let mut digits = vec![0usize; m];
    let mut logits = vec![0.0; m + 1];
    let mut qs = vec![0.0; m];
    loop {
        let mut weight = 1.0;
        logits[0] = o[positive];
        for (k, &d) in digits.iter().enumerate() {
            let class = support[d];
            weight *= q[class];
            logits[k + 1] = o[class];
            qs[k] = q[class];
        }
        let mut probs = adjust_logits(&logits, &qs);
        negative_exp_sum += weight * probs[1..].iter().map(|v| v.exp()).sum::<f64>();
        softmax_in_place(&mut probs);
        positive_slot += weight * probs[0];
        per_class[positive] += weight * probs[0];
        for (k, &d) in digits.iter().enumerate() {
            per_class[support[d]] += weight * probs[k + 1];
        }

        // odometer over support^m
        let mut k = 0;
        loop {
            if k == m {
                return Ok(ExpectedMass {
                    per_class,
                    positive_slot,
                    negative_exp_sum,
                });
            }
            digits[k] += 1;
            if digits[k] < support.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// `E[dL(p', y')/do_i] = E[sum_j I(s_j = i) p'_j] - y_i` for every class.
pub fn enumerate_expected_gradient(o: &[f64], positive: usize, q: &[f64], m: usize) -> Result<Vec<f64>> {
    let mut g = enumerate_expected_mass(o, positive, q, m)?.per_class;
    g[positive] -= 1.0;
    Ok(g)
}

/// Outcome of drawing from a tree and testing the counts against
/// [`exact_distribution`].
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCheck {
    pub gof: GofResult,
    pub draws: u64,
    /// `max |path_prob - q_i| / q_i` over all draws.
    pub max_path_error: f64,
    /// `max |prob - q_i| / q_i` over all draws.
    pub max_prob_error: f64,
}

impl TreeCheck {
    pub fn pass(&self, path_tolerance: f64) -> bool {
        self.gof.pass && self.max_path_error <= path_tolerance && self.max_prob_error <= path_tolerance
    }
}

/// Draws `draws` classes for query `h` and compares them with the exact
/// distribution.
pub fn check_tree_sampling<R: Rng + ?Sized>(
    tree: &SamplingTree,
    h: &[f64],
    draws: u64,
    rng: &mut R,
) -> Result<TreeCheck> {
    let exact = exact_distribution(tree.embeddings(), tree.spec(), h)?;
    let query = tree.query(h)?;
    let mut counts = vec![0u64; tree.n()];
    let (mut max_path_error, mut max_prob_error) = (0.0f64, 0.0f64);
    for _ in 0..draws {
        let d = query.sample(rng);
        counts[d.class] += 1;
        let q = exact[d.class];
        max_path_error = max_path_error.max((d.path_prob - q).abs() / q);
        max_prob_error = max_prob_error.max((d.prob - q).abs() / q);
    }
    Ok(TreeCheck {
        gof: chi_square_gof(&counts, &exact)?,
        draws,
        max_path_error,
        max_prob_error,
    })
}
