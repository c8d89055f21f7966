//! Built-in invariant suites behind the `verify` subcommand: compressor
//! contraction, gradient correctness, the variant reduction matrix, and
//! potential monotonicity. Sized to run in seconds.

use crate::compressor::{contraction_params, estimate_contraction, CompressorKind, CompressorSpec};
use crate::data::{synth, SynthKind, SynthSpec};
use crate::engine::{self, InitRule, Method, MethodConfig, RngBank};
use crate::problem::{ObjectiveKind, Regularizer};
use crate::rng::RandomStream;
use crate::vector::DenseVector;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn pass(name: &'static str, detail: impl Into<String>) -> Self {
        Check { name, passed: true, detail: detail.into() }
    }

    fn fail(name: &'static str, detail: impl Into<String>) -> Self {
        Check { name, passed: false, detail: detail.into() }
    }
}

pub fn run_all() -> Vec<Check> {
    vec![
        contraction_check(),
        gradient_check(),
        reduction_matrix_check(),
        lyapunov_check(),
    ]
}

fn contraction_check() -> Check {
    let name = "contraction";
    let d = 100;
    let mut rng = RandomStream::substream(101, 1);
    for k in [1usize, 5, 50] {
        let spec = CompressorSpec::new(CompressorKind::TopK { k }, d).unwrap();
        let worst = match estimate_contraction(&spec, 2000, &mut rng) {
            Ok(w) => w,
            Err(e) => return Check::fail(name, e.to_string()),
        };
        let bound = 1.0 - k as f64 / d as f64;
        if worst > bound + 1e-12 {
            return Check::fail(name, format!("top_k(k={k}) ratio {worst} above {bound}"));
        }
    }
    let spec = CompressorSpec::new(CompressorKind::RandK { k: 50 }, d).unwrap();
    let mean = estimate_contraction(&spec, 20_000, &mut rng).unwrap();
    if mean > 0.5 + 0.05 {
        return Check::fail(name, format!("rand_k mean ratio {mean} far above 0.5"));
    }
    Check::pass(name, "top_k pointwise and rand_k mean contraction hold")
}

fn gradient_check() -> Check {
    let name = "gradients";
    for kind in [
        ObjectiveKind::LogisticNonconvex { lambda: 0.1 },
        ObjectiveKind::LeastSquares,
    ] {
        let spec = SynthSpec {
            kind: match kind {
                ObjectiveKind::LogisticNonconvex { .. } => SynthKind::Logistic,
                ObjectiveKind::LeastSquares => SynthKind::LeastSquares,
            },
            rows: 24,
            dim: 6,
            clients: 3,
            noise_std: 0.3,
            lambda: 0.1,
            seed: 7,
        };
        let obj = synth(&spec).unwrap();
        let mut rng = RandomStream::substream(102, 2);
        let h = 1e-6;
        for _ in 0..20 {
            let x = rng.normal_vec(6);
            let g = obj.mean_grad(&x).unwrap();
            let mut fd = DenseVector::zeros(6);
            for j in 0..6 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                fd[j] = (obj.loss(&xp).unwrap() - obj.loss(&xm).unwrap()) / (2.0 * h);
            }
            let rel = g.dist_sq(&fd).sqrt() / g.norm_sq().sqrt().max(1.0);
            if rel > 1e-5 {
                return Check::fail(name, format!("finite-difference mismatch {rel}"));
            }
        }
    }
    Check::pass(name, "analytic gradients match central finite differences")
}

/// Run a variant for `rounds` and return the iterate trajectory.
pub fn trajectory(
    method: Method,
    compressor: CompressorKind,
    gamma: f64,
    seed: u64,
    rounds: usize,
) -> Vec<DenseVector> {
    let spec = SynthSpec {
        kind: SynthKind::Logistic,
        rows: 40,
        dim: 10,
        clients: 4,
        noise_std: 0.4,
        lambda: 0.1,
        seed: 23,
    };
    let obj = synth(&spec).unwrap();
    let cfg = MethodConfig {
        method,
        compressor: CompressorSpec::new(compressor, 10).unwrap(),
        gamma,
        init: InitRule::CompressedGrad,
        seed,
    };
    let mut rngs = RngBank::new(seed, 4);
    let mut state = engine::init_state(&cfg, &obj, &DenseVector::zeros(10), &mut rngs).unwrap();
    let mut path = vec![state.x.clone()];
    for _ in 0..rounds {
        engine::advance(&cfg, &obj, &mut state, &mut rngs).unwrap();
        path.push(state.x.clone());
    }
    path
}

fn max_deviation(a: &[DenseVector], b: &[DenseVector]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

fn reduction_matrix_check() -> Check {
    let name = "reduction-matrix";
    let rounds = 40;
    let gamma = 0.05;
    let seed = 9;
    let topk = CompressorKind::TopK { k: 2 };
    let base = trajectory(Method::Ef21, topk, gamma, seed, rounds);

    let pairs: Vec<(&str, Vec<DenseVector>)> = vec![
        ("hb(eta=0)", trajectory(Method::Ef21Hb { eta: 0.0 }, topk, gamma, seed, rounds)),
        (
            "prox(none)",
            trajectory(Method::Ef21Prox { reg: Regularizer::None }, topk, gamma, seed, rounds),
        ),
        (
            "pp(p=1)",
            trajectory(Method::Ef21Pp { participation: 1.0 }, topk, gamma, seed, rounds),
        ),
        (
            "page(p=1)",
            trajectory(
                Method::Ef21Page {
                    probs: vec![1.0; 4],
                    batch_sizes: vec![1; 4],
                    shared_coin: false,
                },
                topk,
                gamma,
                seed,
                rounds,
            ),
        ),
        (
            "bc(identity master)",
            trajectory(
                Method::Ef21Bc {
                    master: CompressorSpec::new(CompressorKind::Identity, 10).unwrap(),
                },
                topk,
                gamma,
                seed,
                rounds,
            ),
        ),
    ];
    for (label, path) in &pairs {
        let dev = max_deviation(&base, path);
        if dev != 0.0 {
            return Check::fail(name, format!("{label} deviates from ef21 by {dev}"));
        }
    }
    Check::pass(name, "all degeneracy identities hold bit-for-bit")
}

fn lyapunov_check() -> Check {
    let name = "lyapunov";
    let spec = SynthSpec {
        kind: SynthKind::Logistic,
        rows: 100,
        dim: 20,
        clients: 5,
        noise_std: 0.4,
        lambda: 0.1,
        seed: 31,
    };
    let obj = synth(&spec).unwrap();
    let sm = obj.smoothness().unwrap();
    let spec_c = CompressorSpec::new(CompressorKind::TopK { k: 1 }, 20).unwrap();
    let params = contraction_params(spec_c.alpha(), None).unwrap();
    let mut inputs = crate::stepsize::StepsizeInputs::new(sm, spec_c.alpha());
    let gamma = match crate::stepsize::ef21_gamma(&inputs) {
        Ok(g) => g,
        Err(e) => return Check::fail(name, e.to_string()),
    };
    inputs.mu = None;
    let cfg = MethodConfig {
        method: Method::Ef21,
        compressor: spec_c,
        gamma,
        init: InitRule::CompressedGrad,
        seed: 4,
    };
    let mut rngs = RngBank::new(4, 5);
    let mut state = engine::init_state(&cfg, &obj, &DenseVector::zeros(20), &mut rngs).unwrap();
    let mut prev = engine::lyapunov(&cfg, &obj, &state, &params, gamma, engine::LyapunovKind::Nonconvex).unwrap();
    for t in 0..300 {
        engine::advance(&cfg, &obj, &mut state, &mut rngs).unwrap();
        let v = engine::lyapunov(&cfg, &obj, &state, &params, gamma, engine::LyapunovKind::Nonconvex).unwrap();
        if v > prev + 1e-12 {
            return Check::fail(name, format!("potential rose at round {t}: {prev} -> {v}"));
        }
        prev = v;
    }
    Check::pass(name, "the monitored potential is nonincreasing at the theory stepsize")
}
