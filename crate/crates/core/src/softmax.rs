//! Full and sampled softmax cross-entropy with gradients.
//!
//! A sampled batch holds the positive class in slot 0 followed by `m`
//! negatives drawn with replacement from `q`. Negative slots get the adjusted
//! logit `o - ln(m q)`, the positive keeps its raw logit, and the loss is the
//! cross-entropy of the softmax over the `m + 1` adjusted logits against the
//! indicator of slot 0. Duplicates stay as separate slots.

use std::fmt;
use std::str::FromStr;

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};

/// How raw logits become the prediction distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictionMode {
    /// `p_i ∝ exp(o_i)`.
    #[default]
    Standard,
    /// `p_i ∝ exp(|o_i|)`, the natural partner of symmetric kernels.
    Absolute,
}

impl PredictionMode {
    #[inline]
    pub fn transform(self, o: f64) -> f64 {
        match self {
            PredictionMode::Standard => o,
            PredictionMode::Absolute => o.abs(),
        }
    }

    /// `d transform(o) / d o`, with `sign(0) = 0`.
    #[inline]
    pub fn derivative(self, o: f64) -> f64 {
        match self {
            PredictionMode::Standard => 1.0,
            PredictionMode::Absolute => {
                if o > 0.0 {
                    1.0
                } else if o < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for PredictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(PredictionMode::Standard),
            "absolute" => Ok(PredictionMode::Absolute),
            other => Err(Error::Config(format!("unknown prediction mode `{other}`"))),
        }
    }
}

impl fmt::Display for PredictionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictionMode::Standard => "standard",
            PredictionMode::Absolute => "absolute",
        })
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax over already-transformed logits, stabilized by the max.
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// Prediction distribution for raw logits `o`.
pub fn full_softmax(o: &[f64], mode: PredictionMode) -> Vec<f64> {
    let mut p: Vec<f64> = o.iter().map(|&v| mode.transform(v)).collect();
    softmax_in_place(&mut p);
    p
}

/// Cross-entropy of the full softmax at `label`, in nats.
pub fn full_loss(o: &[f64], label: usize, mode: PredictionMode) -> f64 {
    let t: Vec<f64> = o.iter().map(|&v| mode.transform(v)).collect();
    log_sum_exp(&t) - t[label]
}

/// Loss and `dL/do` for the full softmax. In absolute mode the gradient is
/// `(p - y) * sign(o)`.
pub fn full_loss_grad(o: &[f64], label: usize, mode: PredictionMode) -> Result<(f64, Vec<f64>)> {
    if label >= o.len() {
        return Err(Error::ClassOutOfRange {
            index: label,
            n: o.len(),
        });
    }
    let t: Vec<f64> = o.iter().map(|&v| mode.transform(v)).collect();
    let loss = log_sum_exp(&t) - t[label];
    let mut grad = t;
    softmax_in_place(&mut grad);
    grad[label] -= 1.0;
    for (g, &v) in grad.iter_mut().zip(o) {
        *g *= mode.derivative(v);
    }
    Ok((loss, grad))
}

/// Positive plus `m` sampled negatives, with adjusted logits and the
/// resulting sampled probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    classes: Vec<usize>,
    q: Vec<f64>,
    logits: Vec<f64>,
    adjusted: Vec<f64>,
    probs: Vec<f64>,
}

/// One negative slot: class, its sampling probability and its logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Negative {
    pub class: usize,
    pub q: f64,
    pub logit: f64,
}

impl SampleBatch {
    pub fn new(positive: usize, positive_logit: f64, negatives: &[Negative]) -> Result<Self> {
        let mut classes = Vec::with_capacity(negatives.len() + 1);
        let mut logits = Vec::with_capacity(negatives.len() + 1);
        let mut q = Vec::with_capacity(negatives.len());
        classes.push(positive);
        logits.push(positive_logit);
        for neg in negatives {
            if !(neg.q > 0.0 && neg.q <= 1.0 + 1e-12) {
                return Err(Error::InvalidProbability(neg.q));
            }
            classes.push(neg.class);
            logits.push(neg.logit);
            q.push(neg.q);
        }
        let adjusted = adjust_logits(&logits, &q);
        let mut probs = adjusted.clone();
        softmax_in_place(&mut probs);
        Ok(SampleBatch {
            classes,
            q,
            logits,
            adjusted,
            probs,
        })
    }

    /// Number of negatives.
    pub fn m(&self) -> usize {
        self.q.len()
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn adjusted_logits(&self) -> &[f64] {
        &self.adjusted
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `-ln p'_0`.
    pub fn loss(&self) -> f64 {
        log_sum_exp(&self.adjusted) - self.adjusted[0]
    }

    /// `p'_j - y'_j` per slot.
    pub fn slot_gradients(&self) -> Vec<f64> {
        let mut g = self.probs.clone();
        g[0] -= 1.0;
        g
    }

    /// Gradient with respect to each distinct original logit, summing over
    /// duplicate slots. Classes appear in first-seen order.
    pub fn class_gradients(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.classes.len());
        for (&class, g) in self.classes.iter().zip(self.slot_gradients()) {
            match out.iter_mut().find(|(c, _)| *c == class) {
                Some((_, acc)) => *acc += g,
                None => out.push((class, g)),
            }
        }
        out
    }

    pub fn loss_grad(&self) -> (f64, Vec<f64>) {
        (self.loss(), self.slot_gradients())
    }
}

/// Slot 0 keeps its logit; slot `k >= 1` becomes `o_k - ln(m q_k)`.
pub fn adjust_logits(logits: &[f64], q: &[f64]) -> Vec<f64> {
    debug_assert_eq!(logits.len(), q.len() + 1);
    let m = q.len() as f64;
    let mut out = logits.to_vec();
    for (o, &qk) in out[1..].iter_mut().zip(q) {
        *o -= (m * qk).ln();
    }
    out
}

/// Gradients of the embeddings through `o_i = <w_i, h>`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrads {
    pub h: Vec<f64>,
    /// `g_i * h` for each touched class.
    pub classes: Vec<(usize, Vec<f64>)>,
}

/// Maps per-class logit gradients back to `h` and the touched rows of `W`.
pub fn backprop_to_embeddings(
    logit_grads: &[(usize, f64)],
    h: &[f64],
    w: &EmbeddingMatrix,
) -> Result<EmbeddingGrads> {
    if h.len() != w.d() {
        return Err(Error::DimensionMismatch {
            expected: w.d(),
            actual: h.len(),
        });
    }
    let mut grad_h = vec![0.0; h.len()];
    let mut classes = Vec::with_capacity(logit_grads.len());
    for &(class, g) in logit_grads {
        if class >= w.n() {
            return Err(Error::ClassOutOfRange { index: class, n: w.n() });
        }
        for (gh, &x) in grad_h.iter_mut().zip(w.row(class)) {
            *gh += g * x;
        }
        classes.push((class, h.iter().map(|&x| g * x).collect()));
    }
    Ok(EmbeddingGrads {
        h: grad_h,
        classes,
    })
}
