//! Dataset loading: LibSVM text parsing, deterministic partitioning of rows
//! among simulated clients, and synthetic problem generation.

use crate::error::{Error, Result};
use crate::problem::{remap_labels, ClientShard, Objective, ObjectiveKind};
use crate::rng::RandomStream;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub label: f64,
    /// (1-based feature index, value), strictly increasing indices.
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub rows: Vec<RawRow>,
    /// Largest feature index observed anywhere in the file.
    pub inferred_dim: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parse LibSVM text: one `<label> <idx>:<val> ...` row per line, `#` starts
/// a comment, blank lines are skipped, indices are 1-based and strictly
/// increasing within a row.
pub fn parse_libsvm(text: &str) -> Result<RawDataset> {
    let mut rows = Vec::new();
    let mut inferred_dim = 0;
    for (lineno0, raw_line) in text.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let mut tokens = line.split_whitespace();
        let label_tok = match tokens.next() {
            Some(t) => t,
            None => continue, // blank or comment-only line
        };
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno, format!("malformed label token '{label_tok}'")))?;
        let mut features = Vec::new();
        let mut prev_index = 0usize;
        for tok in tokens {
            let (idx_str, val_str) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("malformed feature token '{tok}'")))?;
            let index: usize = idx_str
                .parse()
                .map_err(|_| parse_err(lineno, format!("malformed feature index '{idx_str}'")))?;
            if index == 0 {
                return Err(parse_err(lineno, "nonpositive feature index"));
            }
            let value: f64 = val_str
                .parse()
                .map_err(|_| parse_err(lineno, format!("malformed feature value '{val_str}'")))?;
            if index <= prev_index {
                return Err(parse_err(lineno, format!("non-increasing index at line {lineno}")));
            }
            prev_index = index;
            inferred_dim = inferred_dim.max(index);
            features.push((index, value));
        }
        rows.push(RawRow { label, features });
    }
    if rows.is_empty() {
        return Err(parse_err(0, "empty file"));
    }
    Ok(RawDataset { rows, inferred_dim })
}

/// Serialize back to LibSVM text. Values print in shortest round-trip form,
/// so parse(write(parse(t))) reproduces the dataset exactly.
pub fn write_libsvm(ds: &RawDataset) -> String {
    let mut out = String::new();
    for row in &ds.rows {
        out.push_str(&format!("{}", row.label));
        for (idx, val) in &row.features {
            out.push_str(&format!(" {idx}:{val}"));
        }
        out.push('\n');
    }
    out
}

/// Shard sizes for `n` clients over `total` rows: the first n-1 clients get
/// floor(total/n) rows each and the last client receives the remainder.
pub fn shard_sizes(total: usize, n: usize) -> Vec<usize> {
    let base = total / n;
    let mut sizes = vec![base; n];
    sizes[n - 1] = total - base * (n - 1);
    sizes
}

/// Split rows among `n` clients in file order, densifying features at the
/// inferred dimension (or a caller-forced dimension at least that large).
/// Rows are not shuffled; heterogeneity across clients is intentional.
pub fn partition(raw: &RawDataset, n: usize, forced_dim: Option<usize>) -> Result<Vec<ClientShard>> {
    let total = raw.rows.len();
    if n == 0 || n > total {
        return Err(Error::invalid(format!(
            "client count must satisfy 1 <= n <= {total}, got {n}"
        )));
    }
    let dim = match forced_dim {
        Some(d) if d < raw.inferred_dim => {
            return Err(Error::invalid(format!(
                "forced dimension {d} is below the inferred dimension {}",
                raw.inferred_dim
            )))
        }
        Some(d) => d,
        None => raw.inferred_dim,
    };
    let sizes = shard_sizes(total, n);
    let mut shards = Vec::with_capacity(n);
    let mut cursor = 0usize;
    for &size in &sizes {
        let mut features = vec![0.0; size * dim];
        let mut labels = Vec::with_capacity(size);
        for r in 0..size {
            let row = &raw.rows[cursor + r];
            labels.push(row.label);
            for &(idx, val) in &row.features {
                features[r * dim + (idx - 1)] = val;
            }
        }
        shards.push(ClientShard::from_parts(features, size, dim, labels)?);
        cursor += size;
    }
    Ok(shards)
}

/// Optional per-column max-abs feature scaling, applied before partitioning.
pub fn normalize_max_abs(raw: &mut RawDataset) {
    let mut max_abs = vec![0.0f64; raw.inferred_dim];
    for row in &raw.rows {
        for &(idx, val) in &row.features {
            max_abs[idx - 1] = max_abs[idx - 1].max(val.abs());
        }
    }
    for row in &mut raw.rows {
        for (idx, val) in &mut row.features {
            let m = max_abs[*idx - 1];
            if m > 0.0 {
                *val /= m;
            }
        }
    }
}

/// Build an objective from a parsed dataset: partition plus the {-1, +1}
/// label remap.
pub fn objective_from_raw(
    raw: &RawDataset,
    kind: ObjectiveKind,
    n: usize,
    forced_dim: Option<usize>,
) -> Result<Objective> {
    let mut shards = partition(raw, n, forced_dim)?;
    for shard in &mut shards {
        let mut labels = shard.labels().to_vec();
        remap_labels(&mut labels)?;
        *shard = ClientShard::from_parts(
            (0..shard.rows()).flat_map(|r| shard.row(r).to_vec()).collect(),
            shard.rows(),
            shard.dim(),
            labels,
        )?;
    }
    Objective::new(kind, shards)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Logistic,
    LeastSquares,
}

/// Synthetic problem generator: Gaussian features, labels from a planted
/// linear model, partitioned like a file-backed dataset. Fully determined
/// by the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub rows: usize,
    pub dim: usize,
    pub clients: usize,
    #[serde(default)]
    pub noise_std: f64,
    /// Regularizer weight for the logistic kind; ignored for least squares.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub seed: u64,
}

fn default_lambda() -> f64 {
    0.1
}

pub fn synth(spec: &SynthSpec) -> Result<Objective> {
    if spec.rows == 0 || spec.dim == 0 || spec.clients == 0 || spec.clients > spec.rows {
        return Err(Error::invalid(
            "synthetic spec needs rows >= clients >= 1 and dim >= 1",
        ));
    }
    if spec.noise_std < 0.0 {
        return Err(Error::invalid("noise_std must be nonnegative"));
    }
    let mut rng = RandomStream::substream(spec.seed, 0xDA7A);
    let scale = 1.0 / (spec.dim as f64).sqrt();
    let planted: Vec<f64> = (0..spec.dim).map(|_| rng.normal() * scale).collect();
    let sizes = shard_sizes(spec.rows, spec.clients);
    let mut shards = Vec::with_capacity(spec.clients);
    for &size in &sizes {
        let mut rows = Vec::with_capacity(size);
        let mut labels = Vec::with_capacity(size);
        for _ in 0..size {
            let a: Vec<f64> = (0..spec.dim).map(|_| rng.normal()).collect();
            let clean: f64 = a.iter().zip(&planted).map(|(u, v)| u * v).sum();
            let noisy = clean + spec.noise_std * rng.normal();
            let label = match spec.kind {
                SynthKind::Logistic => {
                    if noisy >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                SynthKind::LeastSquares => noisy,
            };
            rows.push(a);
            labels.push(label);
        }
        shards.push(ClientShard::new(rows, labels)?);
    }
    let kind = match spec.kind {
        SynthKind::Logistic => ObjectiveKind::LogisticNonconvex { lambda: spec.lambda },
        SynthKind::LeastSquares => ObjectiveKind::LeastSquares,
    };
    Objective::new(kind, shards)
}
