//! Experiment orchestration: resolving run configurations, executing runs
//! with a stopping criterion, stepsize-multiplier tuning, and CSV/JSON
//! metric emission.

use crate::compressor::{contraction_params, default_index_bits, CompressorKind, CompressorSpec};
use crate::data::{self, SynthSpec};
use crate::engine::{
    self, InitRule, Method, MethodConfig, MethodState, RngBank, RoundReport,
};
use crate::error::{Error, Result};
use crate::problem::{Objective, ObjectiveKind, Regularizer};
use crate::rng::RandomStream;
use crate::stepsize::{self, StepsizeInputs};
use crate::vector::DenseVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

/// The paper-grid of stepsize multipliers used when none are given.
pub const DEFAULT_MULTIPLIERS: [f64; 14] = [
    0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub objective: ObjectiveSource,
    pub method: MethodSection,
    pub stepsize: StepsizeMode,
    #[serde(default = "default_budget")]
    pub budget: u64,
    /// Stopping tolerance on the squared stationarity measure.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub x0: InitPoint,
    /// Output directory; emissions land in a content-hash subdirectory.
    #[serde(default)]
    pub output: Option<String>,
}

fn default_budget() -> u64 {
    100_000
}

fn default_tol() -> f64 {
    1e-7
}

fn default_record_every() -> u64 {
    1
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSource {
    Synth(SynthSpec),
    File(FileSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub path: String,
    pub kind: FileKind,
    pub clients: usize,
    #[serde(default)]
    pub forced_dim: Option<usize>,
    /// Per-column max-abs feature scaling before partitioning.
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FileKind {
    Logistic {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    LeastSquares,
}

fn default_lambda() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub variant: VariantConfig,
    pub compressor: CompressorConfig,
    #[serde(default = "default_init")]
    pub init: InitRule,
}

fn default_init() -> InitRule {
    InitRule::ExactGrad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VariantConfig {
    Ef21,
    Ef21Sgd {
        batch: BatchSpec,
    },
    Ef21Page {
        batch: BatchSpec,
        /// Full-gradient probability; defaults to tau_i / (tau_i + N_i).
        #[serde(default)]
        prob: Option<f64>,
        #[serde(default)]
        shared_coin: bool,
    },
    Ef21Pp {
        participation: f64,
    },
    Ef21Bc {
        master: CompressorConfig,
    },
    Ef21Hb {
        eta: f64,
    },
    Ef21Prox {
        regularizer: Regularizer,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BatchSpec {
    /// floor(fraction * N_i), at least one row.
    Fraction(f64),
    Size(usize),
}

impl BatchSpec {
    fn resolve(&self, rows: usize) -> Result<usize> {
        let tau = match *self {
            BatchSpec::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::config(format!("batch fraction must lie in (0, 1], got {f}")));
                }
                ((f * rows as f64).floor() as usize).max(1)
            }
            BatchSpec::Size(s) => s,
        };
        if tau == 0 || tau > rows {
            return Err(Error::config(format!(
                "batch size {tau} out of range for a client with {rows} rows"
            )));
        }
        Ok(tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorConfig {
    pub kind: CompressorKindConfig,
    #[serde(default)]
    pub k: Option<usize>,
    /// ceil(k_fraction * d) coordinates; alternative to an absolute k.
    #[serde(default)]
    pub k_fraction: Option<f64>,
    #[serde(default)]
    pub factor: Option<f64>,
    #[serde(default)]
    pub value_bits: Option<u32>,
    #[serde(default)]
    pub index_bits: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKindConfig {
    Identity,
    TopK,
    RandK,
    Scale,
}

impl CompressorConfig {
    pub fn resolve(&self, dim: usize) -> Result<CompressorSpec> {
        let k = match (self.k, self.k_fraction) {
            (Some(_), Some(_)) => {
                return Err(Error::config("give either k or k_fraction, not both"))
            }
            (Some(k), None) => Some(k),
            (None, Some(f)) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::config(format!("k_fraction must lie in (0, 1], got {f}")));
                }
                Some(((f * dim as f64).ceil() as usize).clamp(1, dim))
            }
            (None, None) => None,
        };
        let kind = match self.kind {
            CompressorKindConfig::Identity => CompressorKind::Identity,
            CompressorKindConfig::TopK => CompressorKind::TopK {
                k: k.ok_or_else(|| Error::config("top_k needs k or k_fraction"))?,
            },
            CompressorKindConfig::RandK => CompressorKind::RandK {
                k: k.ok_or_else(|| Error::config("rand_k needs k or k_fraction"))?,
            },
            CompressorKindConfig::Scale => CompressorKind::Scale {
                factor: self.factor.ok_or_else(|| Error::config("scale needs factor"))?,
            },
        };
        let spec = CompressorSpec::new(kind, dim)?;
        spec.with_bits(
            self.value_bits.unwrap_or(64),
            self.index_bits.unwrap_or_else(|| default_index_bits(dim)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepsizeMode {
    /// The largest stepsize predicted by theory for the variant.
    Theory {
        #[serde(default)]
        pl: bool,
        #[serde(default)]
        mu: Option<f64>,
    },
    /// A multiple of the largest stepsize predicted by theory for the plain
    /// method, the common base of the experimental protocol (every variant
    /// is tuned relative to the same base).
    TheoryTimes {
        multiplier: f64,
        #[serde(default)]
        pl: bool,
        #[serde(default)]
        mu: Option<f64>,
    },
    Fixed {
        gamma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitPoint {
    #[default]
    Zeros,
    Gaussian {
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Converged,
    BudgetExhausted,
    Diverged,
}

/// Resolved constants of a run, logged for auditability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub method: String,
    pub compressor: String,
    pub n: usize,
    pub d: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub s: f64,
    pub theta: f64,
    pub beta: f64,
    pub l: f64,
    pub l_tilde: f64,
    pub mu: Option<f64>,
    pub seed: u64,
    pub tol: f64,
    pub budget: u64,
    pub stepsize_mode: String,
    /// Variant-specific resolved constants (theta_p, hat_theta, eta, ...).
    pub constants: BTreeMap<String, f64>,
    /// The resolved configuration, verbatim.
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub header: RunHeader,
    pub rows: Vec<RoundReport>,
    pub status: TerminalStatus,
}

impl RunRecord {
    pub fn final_row(&self) -> &RoundReport {
        self.rows.last().expect("a run record always has rows")
    }

    pub fn converged(&self) -> bool {
        self.status == TerminalStatus::Converged
    }
}

/// A fully resolved run, ready to execute.
pub struct ResolvedRun {
    pub obj: Objective,
    pub mcfg: MethodConfig,
    pub header: RunHeader,
    pub x0: DenseVector,
    pub tol: f64,
    pub budget: u64,
    pub record_every: u64,
    lyapunov_coef: Option<f64>,
}

fn load_objective(source: &ObjectiveSource) -> Result<Objective> {
    match source {
        ObjectiveSource::Synth(spec) => data::synth(spec),
        ObjectiveSource::File(file) => {
            let text = std::fs::read_to_string(&file.path)?;
            let mut raw = data::parse_libsvm(&text)?;
            if file.normalize {
                data::normalize_max_abs(&mut raw);
            }
            let kind = match file.kind {
                FileKind::Logistic { lambda } => ObjectiveKind::LogisticNonconvex { lambda },
                FileKind::LeastSquares => ObjectiveKind::LeastSquares,
            };
            data::objective_from_raw(&raw, kind, file.clients, file.forced_dim)
        }
    }
}

fn resolve_method(variant: &VariantConfig, obj: &Objective) -> Result<Method> {
    let n = obj.num_clients();
    Ok(match variant {
        VariantConfig::Ef21 => Method::Ef21,
        VariantConfig::Ef21Sgd { batch } => Method::Ef21Sgd {
            batch_sizes: (0..n)
                .map(|i| batch.resolve(obj.client_rows(i)))
                .collect::<Result<_>>()?,
        },
        VariantConfig::Ef21Page { batch, prob, shared_coin } => {
            let batch_sizes: Vec<usize> = (0..n)
                .map(|i| batch.resolve(obj.client_rows(i)))
                .collect::<Result<_>>()?;
            let probs = match prob {
                Some(p) => vec![*p; n],
                None => batch_sizes
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| t as f64 / (t as f64 + obj.client_rows(i) as f64))
                    .collect(),
            };
            Method::Ef21Page {
                probs,
                batch_sizes,
                shared_coin: *shared_coin,
            }
        }
        VariantConfig::Ef21Pp { participation } => Method::Ef21Pp {
            participation: *participation,
        },
        VariantConfig::Ef21Bc { master } => Method::Ef21Bc {
            master: master.resolve(obj.dim())?,
        },
        VariantConfig::Ef21Hb { eta } => Method::Ef21Hb { eta: *eta },
        VariantConfig::Ef21Prox { regularizer } => Method::Ef21Prox { reg: *regularizer },
    })
}

fn theory_gamma(
    method: &Method,
    inputs: &mut StepsizeInputs,
    pl: bool,
    constants: &mut BTreeMap<String, f64>,
) -> Result<f64> {
    match method {
        Method::Ef21 => {
            if pl {
                stepsize::ef21_gamma_pl(inputs)
            } else {
                stepsize::ef21_gamma(inputs)
            }
        }
        Method::Ef21Sgd { batch_sizes } => {
            inputs.batch_sizes = Some(batch_sizes.clone());
            if pl {
                stepsize::ef21_sgd_gamma_pl(inputs)
            } else {
                let p = stepsize::ef21_sgd_params(inputs)?;
                constants.insert("hat_theta".into(), p.hat_theta);
                constants.insert("hat_beta1".into(), p.hat_beta1);
                constants.insert("hat_beta2".into(), p.hat_beta2);
                Ok(p.gamma)
            }
        }
        Method::Ef21Page { probs, batch_sizes, .. } => {
            inputs.page_probs = Some(probs.clone());
            inputs.batch_sizes = Some(batch_sizes.clone());
            constants.insert("p_min".into(), probs.iter().cloned().fold(f64::INFINITY, f64::min));
            if pl {
                stepsize::page_gamma_pl(inputs)
            } else {
                stepsize::page_gamma(inputs)
            }
        }
        Method::Ef21Pp { participation } => {
            inputs.participation = Some(*participation);
            constants.insert("participation".into(), *participation);
            if pl {
                stepsize::pp_gamma_pl(inputs)
            } else {
                let p = stepsize::pp_params(inputs)?;
                constants.insert("theta_p".into(), p.theta_p);
                constants.insert("b".into(), p.b);
                Ok(p.gamma)
            }
        }
        Method::Ef21Bc { master } => {
            inputs.alpha_master = Some(master.alpha());
            constants.insert("alpha_master".into(), master.alpha());
            if pl {
                stepsize::bc_gamma_pl(inputs)
            } else {
                stepsize::bc_gamma(inputs)
            }
        }
        Method::Ef21Hb { eta } => {
            inputs.eta = *eta;
            constants.insert("eta".into(), *eta);
            if pl {
                Err(Error::config(
                    "no linear-rate stepsize is available for the momentum variant",
                ))
            } else {
                stepsize::hb_gamma(inputs)
            }
        }
        Method::Ef21Prox { .. } => {
            if pl {
                stepsize::prox_gamma_pl(inputs)
            } else {
                stepsize::prox_gamma(inputs)
            }
        }
    }
}

pub fn resolve(cfg: &RunConfig) -> Result<ResolvedRun> {
    if cfg.budget == 0 {
        return Err(Error::config("budget must be at least 1"));
    }
    if cfg.record_every == 0 {
        return Err(Error::config("record_every must be at least 1"));
    }
    let obj = load_objective(&cfg.objective)?;
    let d = obj.dim();
    let n = obj.num_clients();
    let compressor = cfg.method.compressor.resolve(d)?;
    let method = resolve_method(&cfg.method.variant, &obj)?;
    let smoothness = obj.smoothness()?;
    let alpha = compressor.alpha();
    let params = contraction_params(alpha, None)?;

    let (pl, mu_cfg, multiplier, fixed) = match cfg.stepsize {
        StepsizeMode::Theory { pl, mu } => (pl, mu, None, None),
        StepsizeMode::TheoryTimes { multiplier, pl, mu } => (pl, mu, Some(multiplier), None),
        StepsizeMode::Fixed { gamma } => (false, None, None, Some(gamma)),
    };
    let mu = if pl {
        Some(match mu_cfg {
            Some(m) if m > 0.0 => m,
            Some(m) => return Err(Error::config(format!("mu must be positive, got {m}"))),
            None => obj.pl_constant()?,
        })
    } else {
        mu_cfg
    };

    let mut constants = BTreeMap::new();
    let gamma = match (fixed, multiplier) {
        (Some(g), _) => {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::config("fixed gamma must be nonnegative and finite"));
            }
            g
        }
        (None, None) => {
            // the variant's own theorem stepsize
            let mut inputs = StepsizeInputs::new(smoothness.clone(), alpha);
            inputs.client_rows = Some((0..n).map(|i| obj.client_rows(i)).collect());
            inputs.mu = mu;
            let base = theory_gamma(&method, &mut inputs, pl, &mut constants)?;
            constants.insert("gamma_theory".into(), base);
            base
        }
        (None, Some(m)) => {
            if m <= 0.0 {
                return Err(Error::config("stepsize multiplier must be positive"));
            }
            // multiplier times the plain method's theory stepsize
            let mut inputs = StepsizeInputs::new(smoothness.clone(), alpha);
            inputs.mu = mu;
            let base = if pl {
                stepsize::ef21_gamma_pl(&inputs)?
            } else {
                stepsize::ef21_gamma(&inputs)?
            };
            constants.insert("gamma_theory".into(), base);
            base * m
        }
    };

    let stepsize_mode = match cfg.stepsize {
        StepsizeMode::Theory { pl: true, .. } => "theory_pl".to_string(),
        StepsizeMode::Theory { .. } => "theory".to_string(),
        StepsizeMode::TheoryTimes { multiplier, pl, .. } => {
            if pl {
                format!("theory_pl_x{multiplier}")
            } else {
                format!("theory_x{multiplier}")
            }
        }
        StepsizeMode::Fixed { gamma } => format!("fixed({gamma})"),
    };

    let x0 = match cfg.x0 {
        InitPoint::Zeros => DenseVector::zeros(d),
        InitPoint::Gaussian { scale } => {
            let mut v = RandomStream::substream(cfg.seed, 40_000).normal_vec(d);
            v.scale(scale);
            v
        }
    };

    // gamma = 0 makes the proximal diagnostics ill-defined, and an
    // infeasible start would put an infinite objective into the record
    if let Method::Ef21Prox { reg } = &method {
        if gamma == 0.0 {
            return Err(Error::config("the proximal variant needs a positive gamma"));
        }
        if reg.value(&x0).is_infinite() {
            return Err(Error::config(
                "the starting point is infeasible for the indicator regularizer",
            ));
        }
    }

    let lyapunov_coef = match method {
        Method::Ef21 if gamma > 0.0 => Some(if pl {
            gamma / params.theta
        } else {
            gamma / (2.0 * params.theta)
        }),
        _ => None,
    };

    let header = RunHeader {
        method: method.name().to_string(),
        compressor: compressor.describe(),
        n,
        d,
        gamma,
        alpha,
        s: params.s,
        theta: params.theta,
        beta: params.beta,
        l: smoothness.l,
        l_tilde: smoothness.l_tilde,
        mu,
        seed: cfg.seed,
        tol: cfg.tol,
        budget: cfg.budget,
        stepsize_mode,
        constants,
        config: cfg.clone(),
    };
    Ok(ResolvedRun {
        obj,
        mcfg: MethodConfig {
            method,
            compressor,
            gamma,
            init: cfg.method.init,
            seed: cfg.seed,
        },
        header,
        x0,
        tol: cfg.tol,
        budget: cfg.budget,
        record_every: cfg.record_every,
        lyapunov_coef,
    })
}

fn terminal_row(t: u64, diag: &engine::Diagnostics, state: &MethodState, lyap: Option<f64>, n: usize) -> RoundReport {
    RoundReport {
        t,
        f: diag.f,
        grad_norm_sq: diag.grad_norm_sq,
        g_t: diag.g_t,
        step_norm_sq: 0.0,
        bits_up: 0,
        bits_down: 0,
        bits_up_cum: state.bits_up_total,
        bits_down_cum: state.bits_down_total,
        grad_evals: vec![0; n],
        epochs_cum: state.epochs(),
        lyapunov: lyap,
    }
}

/// Execute a run to its stopping criterion or budget. Round 0 and the final
/// round are always recorded; intermediate rounds at the configured cadence.
/// Divergence terminates the run with a status, not an error.
pub fn run_resolved(r: &ResolvedRun) -> Result<RunRecord> {
    let n = r.obj.num_clients();
    let mut rngs = RngBank::new(r.mcfg.seed, n);
    let mut state = engine::init_state(&r.mcfg, &r.obj, &r.x0, &mut rngs)?;
    let mut rows: Vec<RoundReport> = Vec::new();
    let status;
    loop {
        let diag = engine::diagnostics(&r.mcfg, &r.obj, &state)?;
        let t = state.round;
        let lyap = r.lyapunov_coef.map(|c| diag.f + c * diag.g_t);
        let stopped = diag.grad_norm_sq <= r.tol;
        if stopped || t >= r.budget {
            rows.push(terminal_row(t, &diag, &state, lyap, n));
            status = if stopped {
                TerminalStatus::Converged
            } else {
                TerminalStatus::BudgetExhausted
            };
            break;
        }
        match engine::advance(&r.mcfg, &r.obj, &mut state, &mut rngs) {
            Ok(tr) => {
                if t % r.record_every == 0 {
                    rows.push(RoundReport {
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
                        lyapunov: lyap,
                    });
                }
            }
            Err(Error::Diverged { .. }) => {
                rows.push(terminal_row(t, &diag, &state, lyap, n));
                status = TerminalStatus::Diverged;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        header: r.header.clone(),
        rows,
        status,
    })
}

pub fn run(cfg: &RunConfig) -> Result<RunRecord> {
    run_resolved(&resolve(cfg)?)
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best_multiplier: f64,
    /// (multiplier, record) in the order given.
    pub runs: Vec<(f64, RunRecord)>,
}

/// Run the base configuration at each theory-stepsize multiplier. The best
/// multiplier is the one reaching the tolerance with the fewest cumulative
/// uplink bits (ties to the smaller multiplier); diverged runs are excluded,
/// and if nothing converges the smallest final gradient wins.
pub fn tune(base: &RunConfig, multipliers: &[f64]) -> Result<TuneOutcome> {
    if multipliers.is_empty() {
        return Err(Error::config("tune needs at least one multiplier"));
    }
    let (pl, mu) = match base.stepsize {
        StepsizeMode::Theory { pl, mu } | StepsizeMode::TheoryTimes { pl, mu, .. } => (pl, mu),
        StepsizeMode::Fixed { .. } => {
            return Err(Error::config("tune scales the theory stepsize; use a theory mode"))
        }
    };
    let mut runs = Vec::with_capacity(multipliers.len());
    for &m in multipliers {
        if m <= 0.0 {
            return Err(Error::config("multipliers must be positive"));
        }
        let mut cfg = base.clone();
        cfg.stepsize = StepsizeMode::TheoryTimes { multiplier: m, pl, mu };
        runs.push((m, run(&cfg)?));
    }
    let mut best: Option<(f64, u64)> = None; // (multiplier, bits to tolerance)
    for (m, rec) in &runs {
        if rec.status != TerminalStatus::Converged {
            continue;
        }
        let bits = rec.final_row().bits_up_cum;
        best = match best {
            None => Some((*m, bits)),
            Some((bm, bb)) if bits < bb || (bits == bb && *m < bm) => Some((*m, bits)),
            keep => keep,
        };
    }
    if best.is_none() {
        // no run converged; fall back to the closest non-diverged run
        let mut fallback: Option<(f64, f64)> = None;
        for (m, rec) in &runs {
            if rec.status == TerminalStatus::Diverged {
                continue;
            }
            let g = rec.final_row().grad_norm_sq;
            fallback = match fallback {
                None => Some((*m, g)),
                Some((bm, bg)) if g < bg || (g == bg && *m < bm) => Some((*m, g)),
                keep => keep,
            };
        }
        best = fallback.map(|(m, _)| (m, 0));
    }
    match best {
        Some((m, _)) => Ok(TuneOutcome {
            best_multiplier: m,
            runs,
        }),
        None => Err(Error::config("every tuning run diverged")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Json,
}

/// CSV emission: one row per recorded round with the schema
/// `t,f,grad_norm_sq,G_t,bits_up_cum,bits_down_cum,epochs_cum,lyapunov`.
/// Bit counters are cumulative totals divided by the client count, matching
/// the per-client communication axes of the convergence plots.
pub fn emit_csv(record: &RunRecord) -> String {
    let n = record.header.n as f64;
    let mut out = String::from("t,f,grad_norm_sq,G_t,bits_up_cum,bits_down_cum,epochs_cum,lyapunov\n");
    for row in &record.rows {
        let lyap = match row.lyapunov {
            Some(v) => format!("{v}"),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.t,
            row.f,
            row.grad_norm_sq,
            row.g_t,
            row.bits_up_cum as f64 / n,
            row.bits_down_cum as f64 / n,
            row.epochs_cum,
            lyap
        ));
    }
    out
}

pub fn emit_json(record: &RunRecord) -> Result<String> {
    Ok(serde_json::to_string_pretty(record)?)
}

pub fn parse_json(text: &str) -> Result<RunRecord> {
    let record: RunRecord = serde_json::from_str(text)?;
    if record.schema_version != SCHEMA_VERSION {
        return Err(Error::config(format!(
            "unsupported schema version {}",
            record.schema_version
        )));
    }
    Ok(record)
}

pub fn emit(record: &RunRecord, format: EmitFormat) -> Result<Vec<u8>> {
    Ok(match format {
        EmitFormat::Csv => emit_csv(record).into_bytes(),
        EmitFormat::Json => emit_json(record)?.into_bytes(),
    })
}

/// FNV-1a hash of the resolved configuration, naming the per-run output
/// subdirectory.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let canonical = serde_json::to_string(cfg)?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

/// Write `run.csv` and `run.json` under `<dir>/<config hash>/`, returning
/// the subdirectory path.
pub fn write_outputs(record: &RunRecord, dir: &Path) -> Result<PathBuf> {
    let sub = dir.join(config_hash(&record.header.config)?);
    std::fs::create_dir_all(&sub)?;
    std::fs::write(sub.join("run.csv"), emit_csv(record))?;
    std::fs::write(sub.join("run.json"), emit_json(record)?)?;
    Ok(sub)
}

/// Apply dotted-path `key=value` overrides onto a JSON configuration value.
/// Values parse as JSON scalars when possible and fall back to strings.
/// Unknown keys introduced here are rejected later by the typed parse.
pub fn apply_overrides(config: &mut serde_json::Value, overrides: &[String]) -> Result<()> {
    for entry in overrides {
        let (path, raw) = entry
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override '{entry}' is not key=value")))?;
        let value: serde_json::Value = match serde_json::from_str(raw) {
            Ok(v) => v,
            Err(_) => serde_json::Value::String(raw.to_string()),
        };
        let segments: Vec<&str> = path.split('.').collect();
        if segments.iter().any(|s| s.is_empty()) {
            return Err(Error::config(format!("override '{entry}' has an empty path segment")));
        }
        let mut cursor = &mut *config;
        for seg in &segments[..segments.len() - 1] {
            let map = match cursor {
                serde_json::Value::Object(map) => map,
                _ => {
                    return Err(Error::config(format!(
                        "override path '{path}' does not address an object"
                    )))
                }
            };
            cursor = map
                .entry(seg.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
        match cursor {
            serde_json::Value::Object(map) => {
                map.insert(segments.last().unwrap().to_string(), value);
            }
            _ => {
                return Err(Error::config(format!(
                    "override path '{path}' does not address an object"
                )))
            }
        }
    }
    Ok(())
}
