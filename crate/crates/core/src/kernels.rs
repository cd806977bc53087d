//! Nonnegative kernels over embedding pairs and their explicit feature maps.
//!
//! A kernel `K(a, b) = <phi(a), phi(b)>` lets the partition function over all
//! classes collapse into a single dot product with a precomputed summary
//! vector. The polynomial family is `K(a, b) = alpha * <a, b>^p + 1` for even
//! `p`, whose feature map is the `p`-fold tensor power of `a` scaled by
//! `sqrt(alpha)` with a trailing constant `1`.
//!
//! Tensor powers are flattened row-major over index tuples `(i_1, ..., i_p)`,
//! i.e. entry `i_1 * d^(p-1) + ... + i_p` holds `a[i_1] * ... * a[i_p]`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_QUADRATIC_ALPHA: f64 = 100.0;
pub const DEFAULT_QUARTIC_ALPHA: f64 = 1.0;

/// Kernel family selected by name, independent of the embedding dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Uniform,
    Polynomial { degree: u32, alpha: f64 },
    /// `exp(<a, b>)`. Has no finite feature map, so it only backs the
    /// brute-force samplers.
    ExactSoftmax,
}

impl KernelKind {
    pub fn quadratic(alpha: f64) -> Self {
        KernelKind::Polynomial { degree: 2, alpha }
    }

    pub fn quartic(alpha: f64) -> Self {
        KernelKind::Polynomial { degree: 4, alpha }
    }

    pub fn is_even_polynomial(&self) -> bool {
        matches!(self, KernelKind::Polynomial { degree, .. } if degree % 2 == 0)
    }

    pub fn with_dim(self, input_dim: usize) -> Result<KernelSpec> {
        KernelSpec::new(self, input_dim)
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    /// Accepts `uniform`, `softmax`, `quadratic[:ALPHA]` and `quartic[:ALPHA]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((name, arg)) => (name, Some(arg)),
            None => (s, None),
        };
        let alpha = |default: f64| -> Result<f64> {
            match arg {
                None => Ok(default),
                Some(a) => a
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::UnknownKernel(s.to_string())),
            }
        };
        let kind = match name.to_ascii_lowercase().as_str() {
            "uniform" if arg.is_none() => KernelKind::Uniform,
            "softmax" if arg.is_none() => KernelKind::ExactSoftmax,
            "quadratic" => KernelKind::quadratic(alpha(DEFAULT_QUADRATIC_ALPHA)?),
            "quartic" => KernelKind::quartic(alpha(DEFAULT_QUARTIC_ALPHA)?),
            _ => return Err(Error::UnknownKernel(s.to_string())),
        };
        if let KernelKind::Polynomial { alpha, .. } = kind {
            check_alpha(alpha)?;
        }
        Ok(kind)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::Uniform => f.write_str("uniform"),
            KernelKind::ExactSoftmax => f.write_str("softmax"),
            KernelKind::Polynomial { degree: 2, alpha } => write!(f, "quadratic:{alpha}"),
            KernelKind::Polynomial { degree: 4, alpha } => write!(f, "quartic:{alpha}"),
            KernelKind::Polynomial { degree, alpha } => write!(f, "poly{degree}:{alpha}"),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidScale(alpha))
    }
}

/// A kernel bound to an input dimension. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    input_dim: usize,
    feature_dim: Option<usize>,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::ZeroDimension);
        }
        let feature_dim = match kind {
            KernelKind::Uniform => Some(1),
            KernelKind::ExactSoftmax => None,
            KernelKind::Polynomial { degree, alpha } => {
                if degree == 0 || degree % 2 != 0 {
                    return Err(Error::InvalidDegree(degree));
                }
                check_alpha(alpha)?;
                let dim = input_dim
                    .checked_pow(degree)
                    .and_then(|v| v.checked_add(1))
                    .ok_or(Error::FeatureDimTooLarge {
                        dim: usize::MAX,
                        cap: usize::MAX,
                    })?;
                Some(dim)
            }
        };
        Ok(KernelSpec {
            kind,
            input_dim,
            feature_dim,
        })
    }

    pub fn uniform(input_dim: usize) -> Result<Self> {
        Self::new(KernelKind::Uniform, input_dim)
    }

    pub fn quadratic(input_dim: usize, alpha: f64) -> Result<Self> {
        Self::new(KernelKind::quadratic(alpha), input_dim)
    }

    pub fn quartic(input_dim: usize, alpha: f64) -> Result<Self> {
        Self::new(KernelKind::quartic(alpha), input_dim)
    }

    pub fn polynomial(input_dim: usize, degree: u32, alpha: f64) -> Result<Self> {
        Self::new(KernelKind::Polynomial { degree, alpha }, input_dim)
    }

    pub fn exact_softmax(input_dim: usize) -> Result<Self> {
        Self::new(KernelKind::ExactSoftmax, input_dim)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// `D`, or `None` for the exact softmax.
    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    fn require_feature_dim(&self) -> Result<usize> {
        self.feature_dim
            .ok_or_else(|| Error::NoFeatureMap(self.kind.to_string()))
    }

    fn check_input(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: v.len(),
            });
        }
        Ok(())
    }

    /// `K(a, b)` evaluated in the input space in `O(d)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_input(a)?;
        self.check_input(b)?;
        Ok(self.eval_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Uniform => 1.0,
            KernelKind::Polynomial { degree, alpha } => {
                alpha * dot(a, b).powi(degree as i32) + 1.0
            }
            KernelKind::ExactSoftmax => dot(a, b).exp(),
        }
    }

    /// `phi(a)`, of length [`feature_dim`](Self::feature_dim).
    pub fn feature_map(&self, a: &[f64]) -> Result<Vec<f64>> {
        let dim = self.require_feature_dim()?;
        self.check_input(a)?;
        let mut out = vec![0.0; dim];
        self.feature_map_into(a, &mut out);
        Ok(out)
    }

    /// Like [`feature_map`](Self::feature_map) but writes into `out`, which
    /// must already have length `D`.
    pub fn write_feature_map(&self, a: &[f64], out: &mut [f64]) -> Result<()> {
        let dim = self.require_feature_dim()?;
        self.check_input(a)?;
        if out.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: out.len(),
            });
        }
        self.feature_map_into(a, out);
        Ok(())
    }

    /// Writes `phi(a)` into `out`, which must have length `D`.
    pub(crate) fn feature_map_into(&self, a: &[f64], out: &mut [f64]) {
        match self.kind {
            KernelKind::Uniform => out[0] = 1.0,
            KernelKind::Polynomial { degree, alpha } => {
                let d = a.len();
                let body = out.len() - 1;
                // Expand in place: after step k the first d^k slots hold the
                // k-fold tensor power. Walking backwards keeps sources intact.
                out[0] = alpha.sqrt();
                let mut len = 1;
                for _ in 0..degree {
                    for i in (0..len).rev() {
                        let v = out[i];
                        let row = &mut out[i * d..(i + 1) * d];
                        for (dst, &x) in row.iter_mut().zip(a) {
                            *dst = v * x;
                        }
                    }
                    len *= d;
                }
                debug_assert_eq!(len, body);
                out[body] = 1.0;
            }
            KernelKind::ExactSoftmax => unreachable!("no finite feature map"),
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
