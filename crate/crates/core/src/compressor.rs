//! Contractive compression operators on dense vectors.
//!
//! A compressor C is contractive with factor alpha in (0, 1] when
//! E||C(x) - x||^2 <= (1 - alpha) ||x||^2 for every x. Top-k keeps the k
//! largest-magnitude coordinates (alpha = k/d), rand-k keeps k uniformly
//! sampled coordinates with the unbiasedness scaling folded in (alpha = k/d),
//! scaling by c in (0, 1] gives alpha = 1 - (1-c)^2, and the identity has
//! alpha = 1. Every compression reports its exact payload cost in bits.

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::vector::DenseVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKind {
    Identity,
    TopK { k: usize },
    RandK { k: usize },
    Scale { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressorSpec {
    pub kind: CompressorKind,
    pub dim: usize,
    /// Bits per transmitted scalar. Defaults to 64 (double precision).
    pub value_bits: u32,
    /// Bits per transmitted coordinate index. Defaults to ceil(log2 dim).
    pub index_bits: u32,
}

/// ceil(log2 d), clamped to at least one bit.
pub fn default_index_bits(dim: usize) -> u32 {
    debug_assert!(dim >= 1);
    let needed = usize::BITS - dim.saturating_sub(1).leading_zeros();
    needed.max(1)
}

impl CompressorSpec {
    pub fn new(kind: CompressorKind, dim: usize) -> Result<Self> {
        CompressorSpec {
            kind,
            dim,
            value_bits: 64,
            index_bits: default_index_bits(dim),
        }
        .validated()
    }

    pub fn with_bits(mut self, value_bits: u32, index_bits: u32) -> Result<Self> {
        self.value_bits = value_bits;
        self.index_bits = index_bits;
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        if self.dim == 0 {
            return Err(Error::invalid("compressor dimension must be positive"));
        }
        if self.value_bits == 0 || self.index_bits == 0 {
            return Err(Error::invalid("bit widths must be positive"));
        }
        match self.kind {
            CompressorKind::TopK { k } | CompressorKind::RandK { k } => {
                if k == 0 || k > self.dim {
                    return Err(Error::invalid(format!(
                        "k must satisfy 1 <= k <= d, got k={k}, d={}",
                        self.dim
                    )));
                }
            }
            CompressorKind::Scale { factor } => {
                if !(factor > 0.0 && factor <= 1.0) {
                    return Err(Error::invalid(format!(
                        "scale factor must lie in (0, 1], got {factor}"
                    )));
                }
            }
            CompressorKind::Identity => {}
        }
        Ok(self)
    }

    /// Contraction factor alpha of this operator.
    pub fn alpha(&self) -> f64 {
        match self.kind {
            CompressorKind::Identity => 1.0,
            CompressorKind::TopK { k } | CompressorKind::RandK { k } => k as f64 / self.dim as f64,
            CompressorKind::Scale { factor } => 1.0 - (1.0 - factor) * (1.0 - factor),
        }
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self.kind, CompressorKind::RandK { .. })
    }

    /// One-line descriptor for run headers.
    pub fn describe(&self) -> String {
        match self.kind {
            CompressorKind::Identity => "identity".to_string(),
            CompressorKind::TopK { k } => format!("top_k(k={k})"),
            CompressorKind::RandK { k } => format!("rand_k(k={k})"),
            CompressorKind::Scale { factor } => format!("scale({factor})"),
        }
    }

    pub fn compress(&self, x: &DenseVector, rng: &mut RandomStream) -> Result<CompressedDelta> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        let d = self.dim;
        let entries: Vec<(usize, f64)> = match self.kind {
            CompressorKind::Identity => x.iter().cloned().enumerate().collect(),
            CompressorKind::Scale { factor } => {
                x.iter().map(|v| factor * v).enumerate().collect()
            }
            CompressorKind::TopK { k } => {
                // largest magnitudes win, ties broken by lowest index
                let mut order: Vec<usize> = (0..d).collect();
                order.sort_by(|&a, &b| {
                    x[b].abs()
                        .partial_cmp(&x[a].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                });
                let mut kept: Vec<usize> = order[..k].to_vec();
                kept.sort_unstable();
                kept.into_iter().map(|i| (i, x[i])).collect()
            }
            CompressorKind::RandK { k } => {
                // The unbiased rand-k estimator scales kept coordinates by d/k;
                // making it contractive divides by 1 + omega = d/k, so the
                // transmitted values are the raw coordinates.
                let kept = rng.sample_without_replacement(d, k);
                kept.into_iter().map(|i| (i, x[i])).collect()
            }
        };
        let bit_cost = match self.kind {
            // dense payload, no indices
            CompressorKind::Identity | CompressorKind::Scale { .. } => {
                d as u64 * self.value_bits as u64
            }
            CompressorKind::TopK { .. } | CompressorKind::RandK { .. } => {
                entries.len() as u64 * (self.value_bits as u64 + self.index_bits as u64)
            }
        };
        Ok(CompressedDelta {
            entries,
            bit_cost,
            source_dim: d,
        })
    }
}

/// Sparse payload produced by a compressor, with its exact wire cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedDelta {
    /// (coordinate, value) pairs with strictly increasing coordinates.
    pub entries: Vec<(usize, f64)>,
    pub bit_cost: u64,
    pub source_dim: usize,
}

impl CompressedDelta {
    pub fn to_dense(&self) -> DenseVector {
        let mut out = DenseVector::zeros(self.source_dim);
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    /// target += delta
    pub fn add_into(&self, target: &mut DenseVector) {
        debug_assert_eq!(target.dim(), self.source_dim);
        for &(i, v) in &self.entries {
            target[i] += v;
        }
    }

    /// Advance an error-feedback shift by this message, where the message
    /// compressed `diff = target - shift`. Algebraically this is
    /// `shift += message`; it is evaluated as `shift = target - (diff -
    /// message)`, i.e. target minus the compression residual, so that
    /// coordinates the compressor transmitted verbatim land exactly on the
    /// target. Untouched coordinates keep their shift value exactly.
    pub fn advance_shift(&self, shift: &mut DenseVector, target: &DenseVector, diff: &DenseVector) {
        debug_assert_eq!(shift.dim(), self.source_dim);
        debug_assert_eq!(target.dim(), self.source_dim);
        debug_assert_eq!(diff.dim(), self.source_dim);
        for &(i, v) in &self.entries {
            shift[i] = target[i] - (diff[i] - v);
        }
    }

    pub fn dist_sq_from(&self, x: &DenseVector) -> f64 {
        self.to_dense().dist_sq(x)
    }
}

/// Empirical upper estimate of 1 - alpha: the worst observed ratio
/// ||C(x) - x||^2 / ||x||^2 over standard Gaussian inputs. For randomized
/// kinds the expectation over the compressor's own coin flips is estimated
/// by averaging repeated compressions of the same input.
pub fn estimate_contraction(
    spec: &CompressorSpec,
    trials: usize,
    rng: &mut RandomStream,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let (outer, inner) = if spec.is_randomized() {
        let inner = trials.min(1000);
        ((trials / inner).max(1), inner)
    } else {
        (trials, 1)
    };
    let mut worst: f64 = 0.0;
    for _ in 0..outer {
        let x = rng.normal_vec(spec.dim);
        let denom = x.norm_sq();
        if denom == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for _ in 0..inner {
            acc += spec.compress(&x, rng)?.dist_sq_from(&x);
        }
        worst = worst.max(acc / inner as f64 / denom);
    }
    Ok(worst)
}

/// Contraction bookkeeping for the error-feedback recursions:
/// theta = 1 - (1 - alpha)(1 + s), beta = (1 - alpha)(1 + 1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionParams {
    pub alpha: f64,
    pub s: f64,
    pub theta: f64,
    pub beta: f64,
}

/// The s minimizing beta/theta over the admissible range (0, alpha/(1-alpha)).
pub fn optimal_s(alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0 && alpha <= 1.0);
    if alpha >= 1.0 {
        // beta = 0 for every s; any choice works
        return 1.0;
    }
    1.0 / (1.0 - alpha).sqrt() - 1.0
}

pub fn contraction_params(alpha: f64, s: Option<f64>) -> Result<ContractionParams> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let s = match s {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::invalid(format!("s must be positive, got {s}"))),
        None => optimal_s(alpha),
    };
    let theta = 1.0 - (1.0 - alpha) * (1.0 + s);
    if theta <= 0.0 {
        return Err(Error::invalid(format!(
            "s={s} is inadmissible for alpha={alpha}: requires s < alpha/(1-alpha)"
        )));
    }
    let beta = (1.0 - alpha) * (1.0 + 1.0 / s);
    Ok(ContractionParams { alpha, s, theta, beta })
}
