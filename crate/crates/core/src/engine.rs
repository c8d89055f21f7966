//! The optimization engines: exact single-process simulations of the
//! master/worker protocol for the EF21 family.
//!
//! Every variant follows the same round structure. The master moves the
//! iterate using its aggregate shift, each worker computes a local target
//! (full gradient, stochastic gradient, or variance-reduced estimator),
//! compresses the difference between that target and its shift, and the
//! shifts are advanced by the compressed messages:
//!
//! ```text
//! x^{t+1}   = x^t - gamma * g^t          (prox / momentum step per variant)
//! c_i^t     = C(target_i(x^{t+1}) - g_i^t)
//! g_i^{t+1} = g_i^t + c_i^t
//! g^{t+1}   = g^t + (1/n) sum_i c_i^t
//! ```
//!
//! Partial participation zeroes c_i^t for non-sampled clients, bidirectional
//! compression applies the same shift mechanism to the master's broadcast,
//! the heavy-ball variant steps along a momentum buffer v^{t+1} = eta v^t +
//! g^{t+1}, and the proximal variant wraps the iterate update in a prox.
//! Rounds also account uplink and downlink bits exactly and count per-client
//! sample-gradient evaluations for epoch bookkeeping.
//!
//! Workers are processed in a fixed order with a fixed reduction order, and
//! every random consumer owns a dedicated stream, so a run is a
//! deterministic function of its configuration and seed.

use crate::compressor::{CompressorSpec, ContractionParams};
use crate::error::{Error, Result};
use crate::problem::{gradient_mapping_with, prox, Objective, Regularizer};
use crate::rng::RandomStream;
use crate::vector::DenseVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRule {
    /// g_i^0 = grad f_i(x^0), so the initial shift error is zero.
    ExactGrad,
    /// g_i^0 = C(grad f_i(x^0)).
    CompressedGrad,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Ef21,
    Ef21Sgd {
        batch_sizes: Vec<usize>,
    },
    Ef21Page {
        probs: Vec<f64>,
        batch_sizes: Vec<usize>,
        /// Draw one coin per round on the server instead of one per client.
        shared_coin: bool,
    },
    Ef21Pp {
        participation: f64,
    },
    Ef21Bc {
        master: CompressorSpec,
    },
    Ef21Hb {
        eta: f64,
    },
    Ef21Prox {
        reg: Regularizer,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ef21 => "ef21",
            Method::Ef21Sgd { .. } => "ef21_sgd",
            Method::Ef21Page { .. } => "ef21_page",
            Method::Ef21Pp { .. } => "ef21_pp",
            Method::Ef21Bc { .. } => "ef21_bc",
            Method::Ef21Hb { .. } => "ef21_hb",
            Method::Ef21Prox { .. } => "ef21_prox",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    /// Worker-side compressor.
    pub compressor: CompressorSpec,
    pub gamma: f64,
    pub init: InitRule,
    pub seed: u64,
}

/// Independent random streams for every consumer in the protocol, all
/// derived from the run seed by counter offsets.
#[derive(Debug, Clone)]
pub struct RngBank {
    compressor: Vec<RandomStream>,
    batch: Vec<RandomStream>,
    coin: Vec<RandomStream>,
    shared_coin: RandomStream,
    participation: RandomStream,
    master_compressor: RandomStream,
}

impl RngBank {
    pub fn new(seed: u64, n: usize) -> Self {
        assert!(n < 10_000, "stream layout supports up to 10k clients");
        let stream = |id: u64| RandomStream::substream(seed, id);
        RngBank {
            compressor: (0..n).map(|i| stream(1 + i as u64)).collect(),
            batch: (0..n).map(|i| stream(10_001 + i as u64)).collect(),
            coin: (0..n).map(|i| stream(20_001 + i as u64)).collect(),
            shared_coin: stream(30_000),
            participation: stream(30_001),
            master_compressor: stream(30_002),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodState {
    /// Current iterate x^t.
    pub x: DenseVector,
    /// Per-worker shifts g_i^t (the worker-side shifts for the
    /// bidirectional variant).
    pub shifts: Vec<DenseVector>,
    /// Master aggregate g^t = (1/n) sum_i g_i^t, evaluated in its
    /// definitional form from the master's shift copies after every round.
    pub agg: DenseVector,
    /// The broadcast-consistent master/worker copies of g^t held by the
    /// bidirectional variant. Both sides apply identical updates, so the
    /// copies must stay bitwise equal.
    pub bc_master_g: Option<DenseVector>,
    pub bc_worker_g: Option<DenseVector>,
    /// Per-worker variance-reduced estimators v_i^t.
    pub page_v: Option<Vec<DenseVector>>,
    /// Momentum buffer v^t of the heavy-ball variant.
    pub momentum: Option<DenseVector>,
    pub round: u64,
    pub bits_up_total: u64,
    pub bits_down_total: u64,
    /// Cumulative per-client sample-gradient evaluations.
    pub sample_evals: Vec<u64>,
    client_rows: Vec<usize>,
}

impl MethodState {
    /// Average number of local-data passes per client so far. Diagnostic
    /// full-gradient evaluations are not part of this count.
    pub fn epochs(&self) -> f64 {
        let n = self.client_rows.len();
        self.sample_evals
            .iter()
            .zip(&self.client_rows)
            .map(|(&e, &m)| e as f64 / m as f64)
            .sum::<f64>()
            / n as f64
    }

    /// Recomputed mean of the per-worker shifts, for consistency checks
    /// against the incrementally maintained aggregate.
    pub fn recomputed_agg(&self) -> DenseVector {
        let mut mean = DenseVector::zeros(self.agg.dim());
        for s in &self.shifts {
            mean.add_assign(s);
        }
        mean.scale(1.0 / self.shifts.len() as f64);
        mean
    }
}

/// Per-round diagnostics, measured at the pre-step iterate. Exact full
/// gradients are evaluated for reporting regardless of the variant's own
/// oracle; those evaluations are excluded from epoch accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// Objective value (the composite value for the proximal variant).
    pub f: f64,
    /// ||grad f(x^t)||^2, or the squared generalized gradient mapping norm
    /// for the proximal variant.
    pub grad_norm_sq: f64,
    /// G^t = (1/n) sum_i ||grad f_i(x^t) - g_i^t||^2.
    pub g_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub t: u64,
    pub f: f64,
    pub grad_norm_sq: f64,
    pub g_t: f64,
    /// ||x^{t+1} - x^t||^2 for the transition taken this round.
    pub step_norm_sq: f64,
    pub bits_up: u64,
    pub bits_down: u64,
    pub bits_up_cum: u64,
    pub bits_down_cum: u64,
    /// Per-client sample-gradient evaluations this round.
    pub grad_evals: Vec<u64>,
    pub epochs_cum: f64,
    pub lyapunov: Option<f64>,
}

fn validate(cfg: &MethodConfig, obj: &Objective, x0: &DenseVector) -> Result<()> {
    let d = obj.dim();
    let n = obj.num_clients();
    if x0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.dim() });
    }
    if cfg.compressor.dim != d {
        return Err(Error::DimensionMismatch { expected: d, got: cfg.compressor.dim });
    }
    // gamma = 0 is allowed as a diagnostic (the iterate never moves), except
    // for the proximal variant whose gradient mapping needs gamma > 0
    if !(cfg.gamma >= 0.0 && cfg.gamma.is_finite()) {
        return Err(Error::invalid("gamma must be nonnegative and finite"));
    }
    if cfg.gamma == 0.0 && matches!(cfg.method, Method::Ef21Prox { .. }) {
        return Err(Error::invalid("the proximal variant needs a positive gamma"));
    }
    match &cfg.method {
        Method::Ef21 => {}
        Method::Ef21Sgd { batch_sizes } => {
            if batch_sizes.len() != n {
                return Err(Error::invalid("one batch size per client"));
            }
            for (i, &t) in batch_sizes.iter().enumerate() {
                if t == 0 || t > obj.client_rows(i) {
                    return Err(Error::invalid(format!(
                        "batch size {t} out of range for client {i} with {} rows",
                        obj.client_rows(i)
                    )));
                }
            }
        }
        Method::Ef21Page { probs, batch_sizes, shared_coin } => {
            if probs.len() != n || batch_sizes.len() != n {
                return Err(Error::invalid("one probability and batch size per client"));
            }
            if probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
                return Err(Error::invalid("page probabilities must lie in (0, 1]"));
            }
            if *shared_coin && probs.windows(2).any(|w| w[0] != w[1]) {
                return Err(Error::invalid(
                    "the server-side shared coin requires equal probabilities",
                ));
            }
            for (i, &t) in batch_sizes.iter().enumerate() {
                if t == 0 || t > obj.client_rows(i) {
                    return Err(Error::invalid(format!(
                        "batch size {t} out of range for client {i} with {} rows",
                        obj.client_rows(i)
                    )));
                }
            }
        }
        Method::Ef21Pp { participation } => {
            if !(*participation > 0.0 && *participation <= 1.0) {
                return Err(Error::invalid("participation probability must lie in (0, 1]"));
            }
        }
        Method::Ef21Bc { master } => {
            if master.dim != d {
                return Err(Error::DimensionMismatch { expected: d, got: master.dim });
            }
        }
        Method::Ef21Hb { eta } => {
            if !(0.0..1.0).contains(eta) {
                return Err(Error::invalid("eta must lie in [0, 1)"));
            }
        }
        Method::Ef21Prox { reg } => reg.validate()?,
    }
    Ok(())
}

pub fn init_state(
    cfg: &MethodConfig,
    obj: &Objective,
    x0: &DenseVector,
    rngs: &mut RngBank,
) -> Result<MethodState> {
    validate(cfg, obj, x0)?;
    let n = obj.num_clients();
    let d = obj.dim();
    let mut shifts = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n);
    for i in 0..n {
        let source = match cfg.init {
            InitRule::Zero => DenseVector::zeros(d),
            _ => obj.full_grad(i, x0)?,
        };
        let shift = match cfg.init {
            InitRule::ExactGrad => source.clone(),
            InitRule::Zero => DenseVector::zeros(d),
            InitRule::CompressedGrad => cfg
                .compressor
                .compress(&source, &mut rngs.compressor[i])?
                .to_dense(),
        };
        shifts.push(shift);
        sources.push(source);
    }
    let mut agg = DenseVector::zeros(d);
    for s in &shifts {
        agg.add_assign(s);
    }
    agg.scale(1.0 / n as f64);

    let page_v = match &cfg.method {
        Method::Ef21Page { .. } => Some(sources),
        _ => None,
    };
    let (bc_master_g, bc_worker_g) = match &cfg.method {
        Method::Ef21Bc { .. } => (Some(agg.clone()), Some(agg.clone())),
        _ => (None, None),
    };
    let momentum = match &cfg.method {
        Method::Ef21Hb { .. } => Some(agg.clone()),
        _ => None,
    };
    Ok(MethodState {
        x: x0.clone(),
        shifts,
        agg,
        bc_master_g,
        bc_worker_g,
        page_v,
        momentum,
        round: 0,
        bits_up_total: 0,
        bits_down_total: 0,
        sample_evals: vec![0; n],
        client_rows: (0..n).map(|i| obj.client_rows(i)).collect(),
    })
}

/// Diagnostics at the current iterate; see [`Diagnostics`].
pub fn diagnostics(cfg: &MethodConfig, obj: &Objective, state: &MethodState) -> Result<Diagnostics> {
    let (grads, mean) = obj.client_grads(&state.x)?;
    let n = grads.len();
    let g_t = grads
        .iter()
        .zip(&state.shifts)
        .map(|(g, s)| g.dist_sq(s))
        .sum::<f64>()
        / n as f64;
    let (f, grad_norm_sq) = match &cfg.method {
        Method::Ef21Prox { reg } => {
            let f = obj.loss(&state.x)? + reg.value(&state.x);
            let gm = gradient_mapping_with(reg, &state.x, &mean, cfg.gamma);
            (f, gm.norm_sq())
        }
        _ => (obj.loss(&state.x)?, mean.norm_sq()),
    };
    Ok(Diagnostics { f, grad_norm_sq, g_t })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub step_norm_sq: f64,
    pub bits_up: u64,
    pub bits_down: u64,
    pub grad_evals: Vec<u64>,
}

/// Execute one communication round, advancing the state from round t to
/// t+1. Non-finite iterates or targets abort with a divergence error
/// carrying the round index.
pub fn advance(
    cfg: &MethodConfig,
    obj: &Objective,
    state: &mut MethodState,
    rngs: &mut RngBank,
) -> Result<Transition> {
    let n = obj.num_clients();
    let d = obj.dim();
    let round = state.round;

    // master step
    let mut x_new = state.x.clone();
    match &cfg.method {
        Method::Ef21Hb { .. } => {
            x_new.axpy(-cfg.gamma, state.momentum.as_ref().expect("momentum state"));
        }
        Method::Ef21Bc { .. } => {
            x_new.axpy(-cfg.gamma, state.bc_master_g.as_ref().expect("bc state"));
        }
        Method::Ef21Prox { reg } => {
            x_new.axpy(-cfg.gamma, &state.agg);
            x_new = prox(reg, &x_new, cfg.gamma);
        }
        _ => {
            x_new.axpy(-cfg.gamma, &state.agg);
        }
    }
    if !x_new.is_finite() {
        return Err(Error::Diverged { round });
    }

    // partial participation is sampled by the master, one draw per client
    // per round in client order
    let participating: Vec<bool> = match &cfg.method {
        Method::Ef21Pp { participation } => {
            (0..n).map(|_| rngs.participation.bernoulli(*participation)).collect()
        }
        _ => vec![true; n],
    };
    let shared_coin = match &cfg.method {
        Method::Ef21Page { probs, shared_coin: true, .. } => {
            // server-side coin: one draw shared by every client
            Some(rngs.shared_coin.bernoulli(probs[0]))
        }
        _ => None,
    };

    // worker phase
    let mut bits_up = 0u64;
    let mut grad_evals = vec![0u64; n];
    for i in 0..n {
        if !participating[i] {
            continue;
        }
        let target = match &cfg.method {
            Method::Ef21Sgd { batch_sizes } => {
                grad_evals[i] += batch_sizes[i] as u64;
                obj.stoch_grad(i, &x_new, batch_sizes[i], &mut rngs.batch[i])?
            }
            Method::Ef21Page { probs, batch_sizes, shared_coin: shared } => {
                let take_full = match shared_coin {
                    Some(b) => b,
                    None => {
                        debug_assert!(!*shared);
                        rngs.coin[i].bernoulli(probs[i])
                    }
                };
                let v = &mut state.page_v.as_mut().expect("page state")[i];
                if take_full {
                    grad_evals[i] += state.client_rows[i] as u64;
                    *v = obj.full_grad(i, &x_new)?;
                } else {
                    // two-point evaluation of each sampled row
                    grad_evals[i] += 2 * batch_sizes[i] as u64;
                    let diff = obj.batch_grad_diff(
                        i,
                        &x_new,
                        &state.x,
                        batch_sizes[i],
                        &mut rngs.batch[i],
                    )?;
                    v.add_assign(&diff);
                }
                v.clone()
            }
            _ => {
                grad_evals[i] += state.client_rows[i] as u64;
                obj.full_grad(i, &x_new)?
            }
        };
        if !target.is_finite() {
            return Err(Error::Diverged { round });
        }
        let diff = target.sub(&state.shifts[i]);
        let message = cfg.compressor.compress(&diff, &mut rngs.compressor[i])?;
        bits_up += message.bit_cost;
        message.advance_shift(&mut state.shifts[i], &target, &diff);
    }
    state.agg = state.recomputed_agg();

    // downlink: the master broadcasts the new iterate uncompressed, except
    // for the bidirectional variant which broadcasts a compressed shift
    // correction that master and workers apply identically
    let bits_down = match &cfg.method {
        Method::Ef21Bc { master } => {
            let master_g = state.bc_master_g.as_mut().expect("bc state");
            let diff = state.agg.sub(master_g);
            let correction = master.compress(&diff, &mut rngs.master_compressor)?;
            correction.advance_shift(master_g, &state.agg, &diff);
            correction.advance_shift(
                state.bc_worker_g.as_mut().expect("bc state"),
                &state.agg,
                &diff,
            );
            correction.bit_cost
        }
        _ => d as u64 * cfg.compressor.value_bits as u64,
    };

    if let Method::Ef21Hb { eta } = &cfg.method {
        let v = state.momentum.as_mut().expect("momentum state");
        v.scale(*eta);
        v.add_assign(&state.agg);
    }

    let step_norm_sq = state.x.dist_sq(&x_new);
    state.x = x_new;
    state.round += 1;
    state.bits_up_total += bits_up;
    state.bits_down_total += bits_down;
    for (total, e) in state.sample_evals.iter_mut().zip(&grad_evals) {
        *total += e;
    }
    Ok(Transition {
        step_norm_sq,
        bits_up,
        bits_down,
        grad_evals,
    })
}

/// One full round: diagnostics at the pre-step iterate, then the transition.
pub fn step(
    cfg: &MethodConfig,
    obj: &Objective,
    state: &mut MethodState,
    rngs: &mut RngBank,
) -> Result<RoundReport> {
    let diag = diagnostics(cfg, obj, state)?;
    let t = state.round;
    let tr = advance(cfg, obj, state, rngs)?;
    Ok(RoundReport {
        t,
        f: diag.f,
        grad_norm_sq: diag.grad_norm_sq,
        g_t: diag.g_t,
        step_norm_sq: tr.step_norm_sq,
        bits_up: tr.bits_up,
        bits_down: tr.bits_down,
        bits_up_cum: state.bits_up_total,
        bits_down_cum: state.bits_down_total,
        grad_evals: tr.grad_evals,
        epochs_cum: state.epochs(),
        lyapunov: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovKind {
    /// f(x^t) + gamma/(2 theta) G^t, the quantity driven down by the
    /// nonconvex descent argument.
    Nonconvex,
    /// f(x^t) + gamma/theta G^t, the potential contracted linearly under
    /// quadratic growth.
    QuadraticGrowth,
}

/// Monitored potential for the plain method (constant offset omitted; the
/// monotone behavior is unaffected by a constant shift).
pub fn lyapunov(
    cfg: &MethodConfig,
    obj: &Objective,
    state: &MethodState,
    params: &ContractionParams,
    gamma: f64,
    kind: LyapunovKind,
) -> Result<f64> {
    if !matches!(cfg.method, Method::Ef21) {
        return Err(Error::invalid(format!(
            "the monitored potential is defined for ef21; {} tracks its own",
            cfg.method.name()
        )));
    }
    let diag = diagnostics(cfg, obj, state)?;
    let coef = match kind {
        LyapunovKind::Nonconvex => gamma / (2.0 * params.theta),
        LyapunovKind::QuadraticGrowth => gamma / params.theta,
    };
    Ok(diag.f + coef * diag.g_t)
}

/// Cumulative local-data passes implied by a report stream, averaged over
/// clients.
pub fn epoch_count(reports: &[RoundReport], obj: &Objective) -> f64 {
    let n = obj.num_clients();
    let mut per_client = vec![0u64; n];
    for r in reports {
        for (acc, e) in per_client.iter_mut().zip(&r.grad_evals) {
            *acc += e;
        }
    }
    per_client
        .iter()
        .enumerate()
        .map(|(i, &e)| e as f64 / obj.client_rows(i) as f64)
        .sum::<f64>()
        / n as f64
}
