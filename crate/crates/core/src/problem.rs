//! Differentiable objectives and their oracles.
//!
//! Two objective families are supported, both distributed over `n` clients
//! with `f(x) = (1/n) sum_i f_i(x)` and each `f_i` averaging over the
//! client's local rows:
//!
//! * logistic loss with the nonconvex per-coordinate regularizer
//!   `lambda * sum_j x_j^2 / (1 + x_j^2)`, labels in {-1, +1};
//! * least squares `(a^T x - b)^2`.
//!
//! All gradients are hand-derived and finite-difference checked. Stochastic
//! oracles sample rows uniformly without replacement and are exactly
//! unbiased for their full-batch counterparts.

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::spectral;
use crate::vector::DenseVector;
use serde::{Deserialize, Serialize};

/// One client's local data: a dense row-major feature matrix plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    features: Vec<f64>,
    rows: usize,
    dim: usize,
    labels: Vec<f64>,
}

impl ClientShard {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("client shard must hold at least one row"));
        }
        if rows.len() != labels.len() {
            return Err(Error::invalid("row/label count mismatch"));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        let mut features = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            features.extend_from_slice(r);
        }
        Ok(ClientShard {
            features,
            rows: rows.len(),
            dim,
            labels,
        })
    }

    pub fn from_parts(features: Vec<f64>, rows: usize, dim: usize, labels: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 || features.len() != rows * dim || labels.len() != rows {
            return Err(Error::invalid("inconsistent shard parts"));
        }
        Ok(ClientShard {
            features,
            rows,
            dim,
            labels,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    LogisticNonconvex { lambda: f64 },
    LeastSquares,
}

#[derive(Debug, Clone)]
pub struct Objective {
    kind: ObjectiveKind,
    shards: Vec<ClientShard>,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(t)) without overflow.
fn log1p_exp(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

impl Objective {
    pub fn new(kind: ObjectiveKind, shards: Vec<ClientShard>) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::invalid("objective needs at least one client"));
        }
        let dim = shards[0].dim;
        for s in &shards {
            if s.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.dim,
                });
            }
        }
        if let ObjectiveKind::LogisticNonconvex { lambda } = kind {
            if lambda < 0.0 {
                return Err(Error::invalid("lambda must be nonnegative"));
            }
            for s in &shards {
                if s.labels.iter().any(|&b| b != 1.0 && b != -1.0) {
                    return Err(Error::invalid("logistic labels must lie in {-1, +1}"));
                }
            }
        }
        Ok(Objective { kind, shards })
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.shards[0].dim
    }

    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn client_rows(&self, client: usize) -> usize {
        self.shards[client].rows
    }

    pub fn shard(&self, client: usize) -> &ClientShard {
        &self.shards[client]
    }

    pub fn total_rows(&self) -> usize {
        self.shards.iter().map(|s| s.rows).sum()
    }

    fn check_dim(&self, x: &DenseVector) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }

    fn lambda(&self) -> f64 {
        match self.kind {
            ObjectiveKind::LogisticNonconvex { lambda } => lambda,
            ObjectiveKind::LeastSquares => 0.0,
        }
    }

    fn sample_loss(&self, shard: &ClientShard, row: usize, x: &DenseVector) -> f64 {
        let a = shard.row(row);
        let b = shard.label(row);
        let z: f64 = a.iter().zip(x.as_slice()).map(|(ai, xi)| ai * xi).sum();
        match self.kind {
            ObjectiveKind::LogisticNonconvex { .. } => log1p_exp(-b * z),
            ObjectiveKind::LeastSquares => (z - b) * (z - b),
        }
    }

    /// out += (data-term gradient of the per-sample loss at `row`)
    fn add_sample_grad(&self, shard: &ClientShard, row: usize, x: &DenseVector, sign: f64, out: &mut DenseVector) {
        let a = shard.row(row);
        let b = shard.label(row);
        let z: f64 = a.iter().zip(x.as_slice()).map(|(ai, xi)| ai * xi).sum();
        let coef = match self.kind {
            ObjectiveKind::LogisticNonconvex { .. } => -b * sigmoid(-b * z),
            ObjectiveKind::LeastSquares => 2.0 * (z - b),
        };
        let c = sign * coef;
        for (o, ai) in out.as_mut_slice().iter_mut().zip(a) {
            *o += c * ai;
        }
    }

    fn reg_value(&self, x: &DenseVector) -> f64 {
        let lambda = self.lambda();
        if lambda == 0.0 {
            return 0.0;
        }
        lambda * x.iter().map(|&t| t * t / (1.0 + t * t)).sum::<f64>()
    }

    fn add_reg_grad(&self, x: &DenseVector, out: &mut DenseVector) {
        let lambda = self.lambda();
        if lambda == 0.0 {
            return;
        }
        for (o, &t) in out.as_mut_slice().iter_mut().zip(x.as_slice()) {
            let denom = 1.0 + t * t;
            *o += lambda * 2.0 * t / (denom * denom);
        }
    }

    pub fn client_loss(&self, client: usize, x: &DenseVector) -> Result<f64> {
        self.check_dim(x)?;
        let shard = &self.shards[client];
        let data: f64 = (0..shard.rows).map(|r| self.sample_loss(shard, r, x)).sum();
        Ok(data / shard.rows as f64 + self.reg_value(x))
    }

    /// f(x) = (1/n) sum_i f_i(x)
    pub fn loss(&self, x: &DenseVector) -> Result<f64> {
        self.check_dim(x)?;
        let mut acc = 0.0;
        for c in 0..self.num_clients() {
            acc += self.client_loss(c, x)?;
        }
        Ok(acc / self.num_clients() as f64)
    }

    /// Exact local gradient of f_i.
    pub fn full_grad(&self, client: usize, x: &DenseVector) -> Result<DenseVector> {
        self.check_dim(x)?;
        let shard = &self.shards[client];
        let mut g = DenseVector::zeros(self.dim());
        for r in 0..shard.rows {
            self.add_sample_grad(shard, r, x, 1.0, &mut g);
        }
        g.scale(1.0 / shard.rows as f64);
        self.add_reg_grad(x, &mut g);
        Ok(g)
    }

    /// All client gradients plus their mean, computed in one pass.
    pub fn client_grads(&self, x: &DenseVector) -> Result<(Vec<DenseVector>, DenseVector)> {
        self.check_dim(x)?;
        let n = self.num_clients();
        let mut grads = Vec::with_capacity(n);
        let mut mean = DenseVector::zeros(self.dim());
        for c in 0..n {
            let g = self.full_grad(c, x)?;
            mean.add_assign(&g);
            grads.push(g);
        }
        mean.scale(1.0 / n as f64);
        Ok((grads, mean))
    }

    /// Exact gradient of f.
    pub fn mean_grad(&self, x: &DenseVector) -> Result<DenseVector> {
        Ok(self.client_grads(x)?.1)
    }

    /// Minibatch stochastic gradient: the mean of per-sample data gradients
    /// over a uniform without-replacement batch, plus the exact regularizer
    /// gradient. Unbiased for the local full gradient.
    pub fn stoch_grad(
        &self,
        client: usize,
        x: &DenseVector,
        batch_size: usize,
        rng: &mut RandomStream,
    ) -> Result<DenseVector> {
        self.check_dim(x)?;
        let rows = self.shards[client].rows;
        if batch_size == 0 || batch_size > rows {
            return Err(Error::invalid(format!(
                "batch size must satisfy 1 <= tau <= {rows}, got {batch_size}"
            )));
        }
        let batch = rng.sample_without_replacement(rows, batch_size);
        self.stoch_grad_for(client, x, &batch)
    }

    /// Minibatch gradient for an explicit row set.
    pub fn stoch_grad_for(&self, client: usize, x: &DenseVector, batch: &[usize]) -> Result<DenseVector> {
        self.check_dim(x)?;
        let shard = &self.shards[client];
        let mut g = DenseVector::zeros(self.dim());
        for &r in batch {
            self.add_sample_grad(shard, r, x, 1.0, &mut g);
        }
        g.scale(1.0 / batch.len() as f64);
        self.add_reg_grad(x, &mut g);
        Ok(g)
    }

    /// Minibatch estimate of `grad f_i(x_new) - grad f_i(x_old)` over one
    /// sampled batch; the (deterministic) regularizer difference is included
    /// exactly. Unbiased for the full local gradient difference.
    pub fn batch_grad_diff(
        &self,
        client: usize,
        x_new: &DenseVector,
        x_old: &DenseVector,
        batch_size: usize,
        rng: &mut RandomStream,
    ) -> Result<DenseVector> {
        self.check_dim(x_new)?;
        self.check_dim(x_old)?;
        let rows = self.shards[client].rows;
        if batch_size == 0 || batch_size > rows {
            return Err(Error::invalid(format!(
                "batch size must satisfy 1 <= tau <= {rows}, got {batch_size}"
            )));
        }
        let batch = rng.sample_without_replacement(rows, batch_size);
        Ok(self.batch_grad_diff_for(client, x_new, x_old, &batch))
    }

    pub fn batch_grad_diff_for(
        &self,
        client: usize,
        x_new: &DenseVector,
        x_old: &DenseVector,
        batch: &[usize],
    ) -> DenseVector {
        let shard = &self.shards[client];
        let mut g = DenseVector::zeros(self.dim());
        for &r in batch {
            self.add_sample_grad(shard, r, x_new, 1.0, &mut g);
            self.add_sample_grad(shard, r, x_old, -1.0, &mut g);
        }
        g.scale(1.0 / batch.len() as f64);
        self.add_reg_grad(x_new, &mut g);
        let mut reg_old = DenseVector::zeros(self.dim());
        self.add_reg_grad(x_old, &mut reg_old);
        g.axpy(-1.0, &reg_old);
        g
    }

    /// Hessian bound matvec of the data term for one client, i.e.
    /// (c / N_i) A_i^T A_i v with c = 1/4 (logistic) or 2 (least squares).
    fn client_curvature_matvec(&self, client: usize, v: &[f64], out: &mut [f64]) {
        let shard = &self.shards[client];
        let c = match self.kind {
            ObjectiveKind::LogisticNonconvex { .. } => 0.25,
            ObjectiveKind::LeastSquares => 2.0,
        } / shard.rows as f64;
        out.fill(0.0);
        for r in 0..shard.rows {
            let a = shard.row(r);
            let z: f64 = a.iter().zip(v).map(|(ai, vi)| ai * vi).sum();
            for (o, ai) in out.iter_mut().zip(a) {
                *o += c * z * ai;
            }
        }
    }

    /// Smoothness constants: per-client L_i, the constant L for f, the
    /// quadratic mean L_tilde, and the per-client minibatch-difference
    /// constants. The regularizer contributes exactly 2 * lambda of
    /// curvature (|phi''| peaks at 2).
    pub fn smoothness(&self) -> Result<SmoothnessReport> {
        let d = self.dim();
        let n = self.num_clients();
        let reg_curv = 2.0 * self.lambda();
        let mut l_i = Vec::with_capacity(n);
        let mut script_l_i = Vec::with_capacity(n);
        for c in 0..n {
            let top = spectral::lambda_max(d, |v, out| self.client_curvature_matvec(c, v, out));
            l_i.push(top + reg_curv);
            let shard = &self.shards[c];
            let worst_row = (0..shard.rows)
                .map(|r| shard.row(r).iter().map(|a| a * a).sum::<f64>())
                .fold(0.0_f64, f64::max);
            let row_factor = match self.kind {
                ObjectiveKind::LogisticNonconvex { .. } => 0.25,
                ObjectiveKind::LeastSquares => 2.0,
            };
            script_l_i.push(row_factor * worst_row + reg_curv);
        }
        let mut scratch = vec![0.0; d];
        let l_data = spectral::lambda_max(d, |v, out| {
            out.fill(0.0);
            for c in 0..n {
                self.client_curvature_matvec(c, v, &mut scratch);
                for (o, s) in out.iter_mut().zip(&scratch) {
                    *o += s / n as f64;
                }
            }
        });
        let l = l_data + reg_curv;
        let l_tilde = (l_i.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        Ok(SmoothnessReport {
            l_i,
            l,
            l_tilde,
            script_l_i,
        })
    }

    /// Quadratic-growth constant mu for least squares, from the smallest
    /// nonzero eigenvalue of the pooled curvature. Requires a full
    /// column-rank design.
    pub fn pl_constant(&self) -> Result<f64> {
        if !matches!(self.kind, ObjectiveKind::LeastSquares) {
            return Err(Error::invalid(
                "the quadratic-growth constant is only computed for least squares",
            ));
        }
        let d = self.dim();
        let n = self.num_clients();
        let mut scratch = vec![0.0; d];
        let mut pooled = |v: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            for c in 0..n {
                self.client_curvature_matvec(c, v, &mut scratch);
                for (o, s) in out.iter_mut().zip(&scratch) {
                    *o += s / n as f64;
                }
            }
        };
        let top = spectral::lambda_max(d, &mut pooled);
        let bottom = spectral::lambda_min(d, &mut pooled);
        if bottom <= 1e-10 * top.max(1e-300) {
            return Err(Error::invalid(
                "design matrix is rank deficient; no positive quadratic-growth constant",
            ));
        }
        Ok(bottom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    /// Per-client Lipschitz-gradient bounds.
    pub l_i: Vec<f64>,
    /// Lipschitz-gradient bound for f.
    pub l: f64,
    /// sqrt((1/n) sum L_i^2); always >= L.
    pub l_tilde: f64,
    /// Per-client minibatch-difference smoothness constants.
    pub script_l_i: Vec<f64>,
}

/// Map raw labels onto {-1, +1}: values already in that set are kept; a file
/// with exactly two distinct label values maps the smaller to -1 and the
/// larger to +1.
pub fn remap_labels(labels: &mut [f64]) -> Result<()> {
    if labels.iter().all(|&b| b == 1.0 || b == -1.0) {
        return Ok(());
    }
    let mut distinct: Vec<f64> = Vec::new();
    for &b in labels.iter() {
        if !distinct.contains(&b) {
            distinct.push(b);
            if distinct.len() > 2 {
                return Err(Error::invalid(
                    "labels must take at most two distinct values",
                ));
            }
        }
    }
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if distinct.len() < 2 {
        return Err(Error::invalid("labels take a single value; cannot remap"));
    }
    for b in labels.iter_mut() {
        *b = if *b == distinct[0] { -1.0 } else { 1.0 };
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    None,
    L1 { weight: f64 },
    IndicatorBox { lo: f64, hi: f64 },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Regularizer::L1 { weight } if weight <= 0.0 => {
                Err(Error::invalid("l1 weight must be positive"))
            }
            Regularizer::IndicatorBox { lo, hi } if lo >= hi => {
                Err(Error::invalid("indicator box needs lo < hi"))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: &DenseVector) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::IndicatorBox { lo, hi } => {
                if x.iter().all(|&v| v >= lo && v <= hi) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Proximal operator of gamma * r.
pub fn prox(reg: &Regularizer, x: &DenseVector, gamma: f64) -> DenseVector {
    debug_assert!(gamma > 0.0);
    match *reg {
        Regularizer::None => x.clone(),
        Regularizer::L1 { weight } => {
            let t = gamma * weight;
            DenseVector::from_vec(
                x.iter()
                    .map(|&v| v.signum() * (v.abs() - t).max(0.0))
                    .collect(),
            )
        }
        Regularizer::IndicatorBox { lo, hi } => {
            DenseVector::from_vec(x.iter().map(|&v| v.clamp(lo, hi)).collect())
        }
    }
}

/// Generalized gradient mapping (1/gamma)(x - prox_{gamma r}(x - gamma grad f(x))).
/// Coincides with grad f when r is absent.
pub fn gradient_mapping(
    obj: &Objective,
    reg: &Regularizer,
    x: &DenseVector,
    gamma: f64,
) -> Result<DenseVector> {
    let g = obj.mean_grad(x)?;
    Ok(gradient_mapping_with(reg, x, &g, gamma))
}

/// Same mapping with the smooth gradient already at hand.
pub fn gradient_mapping_with(
    reg: &Regularizer,
    x: &DenseVector,
    grad: &DenseVector,
    gamma: f64,
) -> DenseVector {
    let mut inner = x.clone();
    inner.axpy(-gamma, grad);
    let p = prox(reg, &inner, gamma);
    let mut out = x.sub(&p);
    out.scale(1.0 / gamma);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_row(kind: ObjectiveKind, a: Vec<f64>, b: f64) -> Objective {
        let shard = ClientShard::new(vec![a], vec![b]).unwrap();
        Objective::new(kind, vec![shard]).unwrap()
    }

    fn logistic(lambda: f64, a: Vec<f64>, b: f64) -> Objective {
        single_row(ObjectiveKind::LogisticNonconvex { lambda }, a, b)
    }

    #[test]
    fn loss_at_zero_is_log_two() {
        let obj = logistic(0.1, vec![1.0, -2.0], 1.0);
        let x = DenseVector::zeros(2);
        assert!((obj.loss(&x).unwrap() - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn least_squares_exact_fit_is_zero() {
        let obj = single_row(ObjectiveKind::LeastSquares, vec![1.0], 1.0);
        let x = DenseVector::from_vec(vec![1.0]);
        assert_eq!(obj.loss(&x).unwrap(), 0.0);
        assert_eq!(obj.full_grad(0, &x).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn logistic_single_row_value() {
        // log(1 + e^{-1}) + 0.1 * 1/2, evaluated independently
        let obj = logistic(0.1, vec![1.0], 1.0);
        let x = DenseVector::from_vec(vec![1.0]);
        assert!((obj.loss(&x).unwrap() - 0.363261688).abs() < 1e-8);
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let obj = logistic(0.0, vec![1.0], 1.0);
        let x = DenseVector::zeros(1);
        let g = obj.full_grad(0, &x).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15);
    }

    fn fd_grad(obj: &Objective, x: &DenseVector) -> DenseVector {
        let h = 1e-6;
        let mut g = DenseVector::zeros(x.dim());
        for j in 0..x.dim() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            g[j] = (obj.loss(&xp).unwrap() - obj.loss(&xm).unwrap()) / (2.0 * h);
        }
        g
    }

    fn random_objective(kind: ObjectiveKind, n: usize, rows: usize, d: usize, seed: u64) -> Objective {
        let mut rng = RandomStream::new(seed);
        let shards = (0..n)
            .map(|_| {
                let feats: Vec<Vec<f64>> = (0..rows)
                    .map(|_| (0..d).map(|_| rng.normal()).collect())
                    .collect();
                let labels: Vec<f64> = (0..rows)
                    .map(|_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 })
                    .collect();
                ClientShard::new(feats, labels).unwrap()
            })
            .collect();
        Objective::new(kind, shards).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, kind) in [
            (3u64, ObjectiveKind::LogisticNonconvex { lambda: 0.1 }),
            (4u64, ObjectiveKind::LeastSquares),
        ] {
            let obj = random_objective(kind, 3, 5, 6, seed);
            let mut rng = RandomStream::new(seed + 100);
            for _ in 0..100 {
                let x = rng.normal_vec(6);
                let g = obj.mean_grad(&x).unwrap();
                let fd = fd_grad(&obj, &x);
                let rel = g.dist_sq(&fd).sqrt() / g.norm_sq().sqrt().max(1.0);
                assert!(rel <= 1e-5, "relative error {rel}");
            }
        }
    }

    #[test]
    fn stoch_grad_full_batch_equals_full_grad() {
        let obj = random_objective(ObjectiveKind::LogisticNonconvex { lambda: 0.1 }, 1, 7, 4, 9);
        let mut rng = RandomStream::new(1);
        let x = rng.normal_vec(4);
        let g = obj.stoch_grad(0, &x, 7, &mut rng).unwrap();
        let full = obj.full_grad(0, &x).unwrap();
        assert_eq!(g, full);
    }

    #[test]
    fn stoch_grad_enumeration_is_exactly_unbiased() {
        // two rows, batch of one: the average of both draws is the full gradient
        let shard = ClientShard::new(vec![vec![1.0, 0.5], vec![-2.0, 1.0]], vec![1.0, -1.0]).unwrap();
        let obj = Objective::new(ObjectiveKind::LogisticNonconvex { lambda: 0.1 }, vec![shard]).unwrap();
        let x = DenseVector::from_vec(vec![0.3, -0.7]);
        let mut mean = DenseVector::zeros(2);
        for r in 0..2 {
            mean.axpy(0.5, &obj.stoch_grad_for(0, &x, &[r]).unwrap());
        }
        let full = obj.full_grad(0, &x).unwrap();
        assert!(mean.dist_sq(&full) < 1e-24);
    }

    #[test]
    fn batch_grad_diff_zero_and_full_batch() {
        let obj = random_objective(ObjectiveKind::LeastSquares, 1, 5, 3, 12);
        let mut rng = RandomStream::new(2);
        let x = rng.normal_vec(3);
        let z = obj.batch_grad_diff(0, &x, &x, 2, &mut rng).unwrap();
        assert_eq!(z, DenseVector::zeros(3));
        let y = rng.normal_vec(3);
        let d = obj.batch_grad_diff(0, &y, &x, 5, &mut rng).unwrap();
        let exact = obj.full_grad(0, &y).unwrap().sub(&obj.full_grad(0, &x).unwrap());
        assert!(d.dist_sq(&exact) < 1e-24);
    }

    #[test]
    fn batch_grad_diff_enumeration_is_exactly_unbiased() {
        let shard = ClientShard::new(
            vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]],
            vec![1.0, -1.0, 1.0],
        )
        .unwrap();
        let obj = Objective::new(ObjectiveKind::LogisticNonconvex { lambda: 0.2 }, vec![shard]).unwrap();
        let x_old = DenseVector::from_vec(vec![0.1, -0.2]);
        let x_new = DenseVector::from_vec(vec![-0.4, 0.3]);
        let mut mean = DenseVector::zeros(2);
        for r in 0..3 {
            mean.axpy(1.0 / 3.0, &obj.batch_grad_diff_for(0, &x_new, &x_old, &[r]));
        }
        let exact = obj
            .full_grad(0, &x_new)
            .unwrap()
            .sub(&obj.full_grad(0, &x_old).unwrap());
        assert!(mean.dist_sq(&exact) < 1e-24, "{:?} vs {:?}", mean, exact);
    }

    #[test]
    fn smoothness_matches_hand_values() {
        let ls = single_row(ObjectiveKind::LeastSquares, vec![1.0, 0.0], 0.0);
        let rep = ls.smoothness().unwrap();
        assert!((rep.l_i[0] - 2.0).abs() < 1e-8);

        let lg = logistic(0.1, vec![2.0], 1.0);
        let rep = lg.smoothness().unwrap();
        assert!((rep.l_i[0] - 1.2).abs() < 1e-8);
        assert!((rep.script_l_i[0] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn l_is_below_l_tilde() {
        for seed in 0..100 {
            let kind = if seed % 2 == 0 {
                ObjectiveKind::LogisticNonconvex { lambda: 0.1 }
            } else {
                ObjectiveKind::LeastSquares
            };
            let obj = random_objective(kind, 4, 6, 5, seed);
            let rep = obj.smoothness().unwrap();
            assert!(rep.l <= rep.l_tilde + 1e-9, "L={} Ltilde={}", rep.l, rep.l_tilde);
            for li in &rep.l_i {
                assert!(*li > 0.0);
            }
        }
    }

    fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.clone());
            let mut i = k;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if idx[i] != i + n - k {
                    break;
                }
            }
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }

    #[test]
    fn oracles_are_exactly_unbiased_under_full_enumeration() {
        // every batch size on small shards: the average over all batches
        // reproduces the full quantity to machine precision
        for rows in [4usize, 5] {
            let obj = random_objective(
                ObjectiveKind::LogisticNonconvex { lambda: 0.1 },
                1,
                rows,
                3,
                1000 + rows as u64,
            );
            let mut rng = RandomStream::new(2000 + rows as u64);
            let x = rng.normal_vec(3);
            let y = rng.normal_vec(3);
            let full = obj.full_grad(0, &x).unwrap();
            let full_diff = obj.full_grad(0, &y).unwrap().sub(&full);
            for tau in 1..=rows {
                let batches = combinations(rows, tau);
                let weight = 1.0 / batches.len() as f64;
                let mut mean = DenseVector::zeros(3);
                let mut mean_diff = DenseVector::zeros(3);
                for b in &batches {
                    mean.axpy(weight, &obj.stoch_grad_for(0, &x, b).unwrap());
                    mean_diff.axpy(weight, &obj.batch_grad_diff_for(0, &y, &x, b));
                }
                let rel = mean.dist_sq(&full).sqrt() / full.norm_sq().sqrt().max(1e-300);
                assert!(rel < 1e-12, "stoch_grad bias {rel} at tau={tau}");
                let rel = mean_diff.dist_sq(&full_diff).sqrt() / full_diff.norm_sq().sqrt().max(1e-300);
                assert!(rel < 1e-12, "batch_grad_diff bias {rel} at tau={tau}");
            }
        }
    }

    #[test]
    fn smoothness_certificate_on_random_pairs() {
        for (kind, seed) in [
            (ObjectiveKind::LogisticNonconvex { lambda: 0.1 }, 77u64),
            (ObjectiveKind::LeastSquares, 79),
        ] {
            let obj = random_objective(kind, 2, 8, 4, seed);
            let rep = obj.smoothness().unwrap();
            let mut rng = RandomStream::new(seed + 1);
            for _ in 0..1000 {
                let x = rng.normal_vec(4);
                let y = rng.normal_vec(4);
                for c in 0..2 {
                    let gx = obj.full_grad(c, &x).unwrap();
                    let gy = obj.full_grad(c, &y).unwrap();
                    let lhs = gx.dist_sq(&gy).sqrt();
                    let rhs = rep.l_i[c] * x.dist_sq(&y).sqrt();
                    assert!(lhs <= rhs * (1.0 + 1e-9), "{lhs} > {rhs}");
                }
            }
        }
    }

    #[test]
    fn prox_cases() {
        let x = DenseVector::from_vec(vec![2.0, -0.5, 0.0]);
        assert_eq!(prox(&Regularizer::None, &x, 1.0), x);
        let soft = prox(&Regularizer::L1 { weight: 1.0 }, &x, 1.0);
        assert_eq!(soft.as_slice(), &[1.0, 0.0, 0.0]);
        let clamp = prox(
            &Regularizer::IndicatorBox { lo: -1.0, hi: 1.0 },
            &DenseVector::from_vec(vec![3.0, -0.2]),
            0.7,
        );
        assert_eq!(clamp.as_slice(), &[1.0, -0.2]);
    }

    #[test]
    fn prox_is_nonexpansive() {
        let regs = [
            Regularizer::L1 { weight: 0.3 },
            Regularizer::IndicatorBox { lo: -0.5, hi: 2.0 },
        ];
        let mut rng = RandomStream::new(21);
        for reg in regs {
            for _ in 0..500 {
                let x = rng.normal_vec(6);
                let y = rng.normal_vec(6);
                let px = prox(&reg, &x, 0.9);
                let py = prox(&reg, &y, 0.9);
                assert!(px.dist_sq(&py) <= x.dist_sq(&y) + 1e-12);
            }
        }
    }

    #[test]
    fn gradient_mapping_reduces_to_gradient() {
        let obj = random_objective(ObjectiveKind::LogisticNonconvex { lambda: 0.1 }, 2, 4, 3, 31);
        let mut rng = RandomStream::new(32);
        let x = rng.normal_vec(3);
        let g = obj.mean_grad(&x).unwrap();
        let gm = gradient_mapping(&obj, &Regularizer::None, &x, 0.37).unwrap();
        assert!(gm.dist_sq(&g) < 1e-24);
    }

    #[test]
    fn gradient_mapping_soft_threshold_value() {
        // flat objective (single zero row): grad f = 0, so the mapping is
        // x - soft_threshold(x) at gamma = 1
        let obj = single_row(ObjectiveKind::LeastSquares, vec![0.0], 0.0);
        let x = DenseVector::from_vec(vec![2.0]);
        let gm = gradient_mapping(&obj, &Regularizer::L1 { weight: 1.0 }, &x, 1.0).unwrap();
        assert!((gm[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pl_constant_bounds_suboptimality() {
        // consistent full-rank least squares: f* = 0 at the planted solution
        for seed in [55u64, 56, 57, 58, 59] {
            let mut rng = RandomStream::new(seed);
            let d = 4;
            let x_star = rng.normal_vec(d);
            let shards: Vec<ClientShard> = (0..3)
                .map(|_| {
                    let rows: Vec<Vec<f64>> =
                        (0..10).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
                    let labels: Vec<f64> = rows
                        .iter()
                        .map(|a| a.iter().zip(x_star.as_slice()).map(|(u, v)| u * v).sum())
                        .collect();
                    ClientShard::new(rows, labels).unwrap()
                })
                .collect();
            let obj = Objective::new(ObjectiveKind::LeastSquares, shards).unwrap();
            let mu = obj.pl_constant().unwrap();
            assert!(mu > 0.0);
            for _ in 0..50 {
                let x = rng.normal_vec(d);
                let f = obj.loss(&x).unwrap();
                let gsq = obj.mean_grad(&x).unwrap().norm_sq();
                assert!(f <= gsq / (2.0 * mu) * (1.0 + 1e-9) + 1e-12, "f={f} bound={}", gsq / (2.0 * mu));
            }
        }
    }

    #[test]
    fn label_remap() {
        let mut a = [1.0, 2.0, 1.0];
        remap_labels(&mut a).unwrap();
        assert_eq!(a, [-1.0, 1.0, -1.0]);
        let mut b = [0.0, 1.0];
        remap_labels(&mut b).unwrap();
        assert_eq!(b, [-1.0, 1.0]);
        let mut c = [-1.0, 1.0, 1.0];
        remap_labels(&mut c).unwrap();
        assert_eq!(c, [-1.0, 1.0, 1.0]);
        let mut d = [0.0, 1.0, 2.0];
        assert!(remap_labels(&mut d).is_err());
    }
}
