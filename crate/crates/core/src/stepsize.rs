//! Largest stepsizes with a convergence guarantee for each method variant,
//! in the general nonconvex and quadratic-growth regimes, together with the
//! auxiliary constants they are built from.
//!
//! Every formula has the shape gamma = 1 / (sqrt(a) + b), which guarantees
//! the quadratic feasibility a gamma^2 + b gamma <= 1; all constructors
//! verify that inequality numerically before returning.

use crate::compressor::{contraction_params, optimal_s, ContractionParams};
use crate::error::{Error, Result};
use crate::problem::SmoothnessReport;

/// Inputs shared by the stepsize formulas. Only the fields a given variant
/// needs have to be populated.
#[derive(Debug, Clone)]
pub struct StepsizeInputs {
    pub smoothness: SmoothnessReport,
    /// Worker-side contraction factor.
    pub alpha: f64,
    /// Master-side contraction factor (bidirectional compression only).
    pub alpha_master: Option<f64>,
    /// Free scalar of the shift recursion; None picks the variant-specific
    /// default (the optimizer of beta/theta for most variants).
    pub s: Option<f64>,
    /// Free scalar used by the stochastic, partial-participation and
    /// bidirectional bounds; variant-specific default.
    pub rho: Option<f64>,
    /// Second free scalar of the stochastic bound; defaults to alpha/4.
    pub nu: Option<f64>,
    /// Momentum parameter in [0, 1).
    pub eta: f64,
    /// Equal per-client participation probability in (0, 1].
    pub participation: Option<f64>,
    /// Per-client participation probabilities; requires explicit rho and s.
    pub participation_probs: Option<Vec<f64>>,
    /// Per-client full-gradient probabilities of the variance-reduced
    /// estimator; defaults to tau_i / (tau_i + m_i).
    pub page_probs: Option<Vec<f64>>,
    pub batch_sizes: Option<Vec<usize>>,
    /// Per-client dataset sizes m_i (for the default page probabilities).
    pub client_rows: Option<Vec<usize>>,
    /// Quadratic-growth constant, required by the *_pl formulas.
    pub mu: Option<f64>,
}

impl StepsizeInputs {
    pub fn new(smoothness: SmoothnessReport, alpha: f64) -> Self {
        StepsizeInputs {
            smoothness,
            alpha,
            alpha_master: None,
            s: None,
            rho: None,
            nu: None,
            eta: 0.0,
            participation: None,
            participation_probs: None,
            page_probs: None,
            batch_sizes: None,
            client_rows: None,
            mu: None,
        }
    }

    fn params(&self) -> Result<ContractionParams> {
        contraction_params(self.alpha, self.s)
    }

    fn mu(&self) -> Result<f64> {
        match self.mu {
            Some(mu) if mu > 0.0 => Ok(mu),
            _ => Err(Error::invalid("a positive mu is required for the PL stepsize")),
        }
    }
}

/// True when a*gamma^2 + b*gamma <= 1 (up to rounding slack).
pub fn lemma18_holds(a: f64, b: f64, gamma: f64) -> bool {
    a * gamma * gamma + b * gamma <= 1.0 + 1e-12
}

fn gamma_from(a: f64, b: f64) -> f64 {
    let gamma = 1.0 / (a.sqrt() + b);
    debug_assert!(lemma18_holds(a, b, gamma), "infeasible stepsize: a={a} b={b}");
    gamma
}

/// Stepsize for the plain error-feedback method, nonconvex regime.
pub fn ef21_gamma(inputs: &StepsizeInputs) -> Result<f64> {
    let p = inputs.params()?;
    let sm = &inputs.smoothness;
    let a = p.beta / p.theta * sm.l_tilde * sm.l_tilde;
    Ok(gamma_from(a, sm.l))
}

/// Plain error feedback under quadratic growth: the linear-rate stepsize.
pub fn ef21_gamma_pl(inputs: &StepsizeInputs) -> Result<f64> {
    let p = inputs.params()?;
    let sm = &inputs.smoothness;
    let mu = inputs.mu()?;
    let a = 2.0 * p.beta / p.theta * sm.l_tilde * sm.l_tilde;
    Ok(gamma_from(a, sm.l).min(p.theta / (2.0 * mu)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdStepsize {
    pub hat_theta: f64,
    pub hat_beta1: f64,
    pub hat_beta2: f64,
    pub gamma: f64,
}

fn sgd_constants(inputs: &StepsizeInputs) -> Result<(f64, f64, f64)> {
    let alpha = inputs.alpha;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let rho = inputs.rho.unwrap_or(alpha / 2.0);
    let nu = inputs.nu.unwrap_or(alpha / 4.0);
    if rho <= 0.0 || nu <= 0.0 {
        return Err(Error::invalid("rho and nu must be positive"));
    }
    let hat_theta = 1.0 - (1.0 - alpha) * (1.0 + rho) * (1.0 + nu);
    if hat_theta <= 0.0 {
        return Err(Error::invalid(format!(
            "(1-alpha)(1+rho)(1+nu) >= 1 for rho={rho}, nu={nu}: shift error would not contract"
        )));
    }
    let hat_beta1 = 2.0 * (1.0 - alpha) * (1.0 + rho) * (1.0 + 1.0 / nu);
    let hat_beta2 = hat_beta1 + 1.0 + 1.0 / rho;
    Ok((hat_theta, hat_beta1, hat_beta2))
}

/// Constants and stepsize for the stochastic-gradient variant.
pub fn ef21_sgd_params(inputs: &StepsizeInputs) -> Result<SgdStepsize> {
    let (hat_theta, hat_beta1, hat_beta2) = sgd_constants(inputs)?;
    let sm = &inputs.smoothness;
    let a = hat_beta1 / hat_theta * sm.l_tilde * sm.l_tilde;
    Ok(SgdStepsize {
        hat_theta,
        hat_beta1,
        hat_beta2,
        gamma: gamma_from(a, sm.l),
    })
}

pub fn ef21_sgd_gamma_pl(inputs: &StepsizeInputs) -> Result<f64> {
    let (hat_theta, hat_beta1, _) = sgd_constants(inputs)?;
    let sm = &inputs.smoothness;
    let mu = inputs.mu()?;
    let a = 2.0 * hat_beta1 / hat_theta * sm.l_tilde * sm.l_tilde;
    Ok(gamma_from(a, sm.l).min(hat_theta / (2.0 * mu)))
}

fn page_probs(inputs: &StepsizeInputs) -> Result<Vec<f64>> {
    if let Some(probs) = &inputs.page_probs {
        if probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::invalid("page probabilities must lie in (0, 1]"));
        }
        return Ok(probs.clone());
    }
    match (&inputs.batch_sizes, &inputs.client_rows) {
        (Some(taus), Some(rows)) if taus.len() == rows.len() => Ok(taus
            .iter()
            .zip(rows)
            .map(|(&t, &m)| t as f64 / (t as f64 + m as f64))
            .collect()),
        _ => Err(Error::invalid(
            "page probabilities or (batch sizes + client rows) are required",
        )),
    }
}

/// Second moment constant of the variance-reduced bound:
/// (1/n) sum_i (1 - p_i) script_L_i^2 / tau_i.
fn script_l_tilde_sq(sm: &SmoothnessReport, probs: &[f64], taus: &[usize]) -> Result<f64> {
    let n = sm.script_l_i.len();
    if probs.len() != n || taus.len() != n {
        return Err(Error::invalid("per-client parameter lengths disagree"));
    }
    if taus.contains(&0) {
        return Err(Error::invalid("batch sizes must be positive"));
    }
    Ok(sm
        .script_l_i
        .iter()
        .zip(probs.iter().zip(taus))
        .map(|(&sl, (&p, &t))| (1.0 - p) * sl * sl / t as f64)
        .sum::<f64>()
        / n as f64)
}

/// Stepsize for the variance-reduced variant, nonconvex regime.
pub fn page_gamma(inputs: &StepsizeInputs) -> Result<f64> {
    let p = inputs.params()?;
    let sm = &inputs.smoothness;
    let probs = page_probs(inputs)?;
    let taus = match &inputs.batch_sizes {
        Some(t) => t.clone(),
        None => vec![1; probs.len()],
    };
    let p_min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
    let p_max = probs.iter().cloned().fold(0.0f64, f64::max);
    if p_min <= 0.0 {
        return Err(Error::invalid("page probabilities must be positive"));
    }
    let slt = script_l_tilde_sq(sm, &probs, &taus)?;
    let q = p.beta / p.theta;
    let a = 4.0 * q * sm.l_tilde * sm.l_tilde + 2.0 * (3.0 * q * p_max / p_min + 1.0 / p_min) * slt;
    Ok(gamma_from(a, sm.l))
}

pub fn page_gamma_pl(inputs: &StepsizeInputs) -> Result<f64> {
    let p = inputs.params()?;
    let sm = &inputs.smoothness;
    let mu = inputs.mu()?;
    let probs = page_probs(inputs)?;
    let taus = match &inputs.batch_sizes {
        Some(t) => t.clone(),
        None => vec![1; probs.len()],
    };
    let p_min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
    let p_max = probs.iter().cloned().fold(0.0f64, f64::max);
    let slt = script_l_tilde_sq(sm, &probs, &taus)?;
    let q = p.beta / p.theta;
    let a = 8.0 * q * sm.l_tilde * sm.l_tilde + 4.0 * (5.0 * q * p_max / p_min + 1.0 / p_min) * slt;
    let gamma0 = gamma_from(a, sm.l);
    Ok(gamma0.min(p.theta / (2.0 * mu)).min(p_min / (2.0 * mu)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpStepsize {
    pub theta_p: f64,
    pub b: f64,
    pub gamma: f64,
}

/// Effective contraction and curvature constants under partial
/// participation. With an equal participation probability the free scalars
/// rho and s default to the case-split choices that guarantee
/// theta_p >= p * alpha / 2; with per-client probabilities both scalars must
/// be supplied, and theta_p <= 0 is reported as an error rather than
/// guessed around.
fn pp_constants(inputs: &StepsizeInputs) -> Result<(f64, f64)> {
    let alpha = inputs.alpha;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let sm = &inputs.smoothness;
    let n = sm.l_i.len();
    let (probs, rho, s): (Vec<f64>, f64, f64) = match (&inputs.participation_probs, inputs.participation) {
        (Some(probs), _) => {
            if probs.len() != n {
                return Err(Error::invalid("one participation probability per client"));
            }
            let equal = probs.windows(2).all(|w| w[0] == w[1]);
            if equal {
                let p = probs[0];
                let (rho, s) = pp_default_scalars(alpha, p, inputs.rho, inputs.s);
                (probs.clone(), rho, s)
            } else {
                match inputs.rho {
                    Some(rho) if rho > 0.0 => {
                        (probs.clone(), rho, inputs.s.unwrap_or_else(|| optimal_s(alpha)))
                    }
                    _ => {
                        return Err(Error::invalid(
                            "unequal participation probabilities require explicit rho (and s)",
                        ))
                    }
                }
            }
        }
        (None, Some(p)) => {
            let (rho, s) = pp_default_scalars(alpha, p, inputs.rho, inputs.s);
            (vec![p; n], rho, s)
        }
        (None, None) => return Err(Error::invalid("participation probability is required")),
    };
    if probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(Error::invalid("participation probabilities must lie in (0, 1]"));
    }
    let params = contraction_params(alpha, Some(s))?;
    let p_min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
    let p_max = probs.iter().cloned().fold(0.0f64, f64::max);
    let theta_p = rho * p_min + params.theta * p_max - rho - (p_max - p_min);
    if theta_p <= 0.0 {
        return Err(Error::invalid(format!(
            "theta_p = {theta_p} <= 0 for rho={rho}, s={s}; pick smaller free scalars"
        )));
    }
    let b = probs
        .iter()
        .zip(&sm.l_i)
        .map(|(&p, &li)| (params.beta * p + (1.0 + 1.0 / rho) * (1.0 - p)) * li * li)
        .sum::<f64>()
        / n as f64;
    Ok((theta_p, b))
}

fn pp_default_scalars(alpha: f64, p: f64, user_rho: Option<f64>, user_s: Option<f64>) -> (f64, f64) {
    let degenerate_p = p >= 1.0;
    let degenerate_alpha = alpha >= 1.0;
    let s = match user_s {
        Some(s) if !degenerate_alpha => s,
        _ => {
            if degenerate_alpha {
                1.0
            } else if degenerate_p {
                optimal_s(alpha)
            } else {
                alpha / (4.0 * (1.0 - alpha))
            }
        }
    };
    let rho = match user_rho {
        Some(r) => r,
        None => {
            if degenerate_p {
                1.0
            } else if degenerate_alpha {
                p / (2.0 * (1.0 - p))
            } else {
                p * alpha / (4.0 * (1.0 - p))
            }
        }
    };
    (rho, s)
}

pub fn pp_params(inputs: &StepsizeInputs) -> Result<PpStepsize> {
    let (theta_p, b) = pp_constants(inputs)?;
    let sm = &inputs.smoothness;
    Ok(PpStepsize {
        theta_p,
        b,
        gamma: gamma_from(b / theta_p, sm.l),
    })
}

pub fn pp_gamma_pl(inputs: &StepsizeInputs) -> Result<f64> {
    let (theta_p, b) = pp_constants(inputs)?;
    let sm = &inputs.smoothness;
    let mu = inputs.mu()?;
    Ok(gamma_from(2.0 * b / theta_p, sm.l).min(theta_p / (2.0 * mu)))
}

fn bc_constants(inputs: &StepsizeInputs) -> Result<(ContractionParams, ContractionParams)> {
    let worker = inputs.params()?;
    let alpha_m = inputs
        .alpha_master
        .ok_or_else(|| Error::invalid("master contraction factor is required"))?;
    let master = contraction_params(alpha_m, inputs.rho)?;
    Ok((worker, master))
}

/// Stepsize for bidirectional compression, nonconvex regime. The worker
/// pair (theta_w, beta_w) uses `s`, the master pair (theta_M, beta_M) uses
/// `rho`; both default to their respective optimizers.
pub fn bc_gamma(inputs: &StepsizeInputs) -> Result<f64> {
    let (w, m) = bc_constants(inputs)?;
    let sm = &inputs.smoothness;
    let qm = m.beta / m.theta;
    let qw = w.beta / w.theta;
    let a = (16.0 * qm + 2.0 * qw * (1.0 + 8.0 * qm)) * sm.l_tilde * sm.l_tilde;
    Ok(gamma_from(a, sm.l))
}

pub fn bc_gamma_pl(inputs: &StepsizeInputs) -> Result<f64> {
    let (w, m) = bc_constants(inputs)?;
    let sm = &inputs.smoothness;
    let mu = inputs.mu()?;
    let qm = m.beta / m.theta;
    let qw = w.beta / w.theta;
    let a = (32.0 * qm + 4.0 * qw * (1.0 + 16.0 * qm)) * sm.l_tilde * sm.l_tilde;
    let gamma0 = gamma_from(a, sm.l);
    Ok(gamma0.min(m.theta / (2.0 * mu)).min(w.theta / (2.0 * mu)))
}

/// Stepsize for the heavy-ball variant: half of the largest admissible
/// value, which is what the simplified rate bound uses.
pub fn hb_gamma(inputs: &StepsizeInputs) -> Result<f64> {
    let eta = inputs.eta;
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::invalid(format!("eta must lie in [0, 1), got {eta}")));
    }
    let p = inputs.params()?;
    let sm = &inputs.smoothness;
    let one_minus = 1.0 - eta;
    let b = (1.0 + eta) * sm.l / (2.0 * one_minus * one_minus);
    let a = (sm.l_tilde / one_minus) * (sm.l_tilde / one_minus)
        * (2.0 * p.beta / p.theta * (1.0 + 4.0 * eta * eta));
    let gamma0 = gamma_from(a, b);
    Ok(gamma0 / 2.0)
}

/// Stepsize for the proximal variant, nonconvex regime: half of
/// gamma_0 = 1 / (L/2 + L_tilde sqrt(beta/theta)).
pub fn prox_gamma(inputs: &StepsizeInputs) -> Result<f64> {
    let p = inputs.params()?;
    let sm = &inputs.smoothness;
    let a = p.beta / p.theta * sm.l_tilde * sm.l_tilde;
    let gamma0 = gamma_from(a, sm.l / 2.0);
    Ok(gamma0 / 2.0)
}

pub fn prox_gamma_pl(inputs: &StepsizeInputs) -> Result<f64> {
    let p = inputs.params()?;
    let sm = &inputs.smoothness;
    let mu = inputs.mu()?;
    let root = (2.0 * p.beta / p.theta).sqrt() * sm.l_tilde;
    let first = gamma_from(4.0 * p.beta / p.theta * sm.l_tilde * sm.l_tilde, sm.l);
    let second = p.theta / (mu + p.theta * root);
    Ok(first.min(second))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(l: f64, l_tilde: f64, n: usize) -> SmoothnessReport {
        SmoothnessReport {
            l_i: vec![l_tilde; n],
            l,
            l_tilde,
            script_l_i: vec![l_tilde; n],
        }
    }

    fn unit_inputs(alpha: f64) -> StepsizeInputs {
        StepsizeInputs::new(report(1.0, 1.0, 4), alpha)
    }

    #[test]
    fn ef21_collapses_to_gradient_descent() {
        let gamma = ef21_gamma(&unit_inputs(1.0)).unwrap();
        assert_eq!(gamma, 1.0);
    }

    #[test]
    fn ef21_pinned_value_at_half_alpha() {
        let gamma = ef21_gamma(&unit_inputs(0.5)).unwrap();
        assert!((gamma - 0.292893).abs() < 5e-7, "{gamma}");
        assert!((gamma - 0.292893219).abs() < 1e-8);
    }

    #[test]
    fn ef21_pl_takes_the_minimum() {
        let mut inputs = unit_inputs(0.5);
        inputs.mu = Some(10.0);
        let gamma = ef21_gamma_pl(&inputs).unwrap();
        assert!((gamma - 0.0146447).abs() < 5e-8, "{gamma}");
        // alpha = 1 branch: min(1/L, 1/(2 mu))
        let mut trivial = unit_inputs(1.0);
        trivial.mu = Some(0.25);
        assert_eq!(ef21_gamma_pl(&trivial).unwrap(), 1.0);
        trivial.mu = Some(10.0);
        assert_eq!(ef21_gamma_pl(&trivial).unwrap(), 0.05);
        assert!(ef21_gamma_pl(&unit_inputs(0.5)).is_err());
    }

    #[test]
    fn sgd_constants_and_degeneracy() {
        let mut inputs = unit_inputs(0.5);
        inputs.rho = Some(0.25);
        inputs.nu = Some(0.125);
        let p = ef21_sgd_params(&inputs).unwrap();
        assert!((p.hat_theta - 0.296875).abs() < 1e-12);
        assert!((p.hat_beta2 - p.hat_beta1 - 5.0).abs() < 1e-12);
        assert!(p.hat_beta2 > p.hat_beta1);

        let trivial = ef21_sgd_params(&unit_inputs(1.0)).unwrap();
        assert_eq!(trivial.hat_theta, 1.0);
        assert_eq!(trivial.hat_beta1, 0.0);
        assert_eq!(trivial.gamma, 1.0);

        // infeasible free scalars
        let mut bad = unit_inputs(0.1);
        bad.rho = Some(10.0);
        bad.nu = Some(10.0);
        assert!(ef21_sgd_params(&bad).is_err());
    }

    #[test]
    fn page_degeneracies() {
        let mut inputs = unit_inputs(0.5);
        inputs.page_probs = Some(vec![1.0; 4]);
        let gamma = page_gamma(&inputs).unwrap();
        // all p_i = 1 removes the stochastic term, leaving 1/(L + 2 L_tilde sqrt(beta/theta))
        let p = contraction_params(0.5, None).unwrap();
        let expect = 1.0 / (1.0 + (4.0 * p.beta / p.theta).sqrt());
        assert!((gamma - expect).abs() < 1e-15);

        let mut trivial = unit_inputs(1.0);
        trivial.page_probs = Some(vec![1.0; 4]);
        assert_eq!(page_gamma(&trivial).unwrap(), 1.0);
    }

    #[test]
    fn page_default_probabilities() {
        let mut inputs = unit_inputs(0.5);
        inputs.batch_sizes = Some(vec![101; 4]);
        inputs.client_rows = Some(vec![406; 4]);
        let probs = page_probs(&inputs).unwrap();
        assert!((probs[0] - 0.1992).abs() < 5e-5, "{}", probs[0]);
    }

    #[test]
    fn pp_cases() {
        // case I: both degenerate
        let mut inputs = unit_inputs(1.0);
        inputs.participation = Some(1.0);
        let p = pp_params(&inputs).unwrap();
        assert_eq!(p.theta_p, 1.0);
        assert_eq!(p.b, 0.0);
        assert_eq!(p.gamma, 1.0);

        // case II: full participation matches the plain stepsize
        let mut inputs = unit_inputs(0.5);
        inputs.participation = Some(1.0);
        let p = pp_params(&inputs).unwrap();
        let plain = ef21_gamma(&unit_inputs(0.5)).unwrap();
        assert!((p.gamma - plain).abs() < 1e-14);

        // case III: alpha = 1, p = 0.5
        let mut inputs = unit_inputs(1.0);
        inputs.participation = Some(0.5);
        let p = pp_params(&inputs).unwrap();
        assert!((p.theta_p - 0.25).abs() < 1e-15);
        assert!(p.b / p.theta_p <= 16.0 + 1e-12);

        // case IV: theta_p = p * alpha / 2 exactly
        let mut inputs = unit_inputs(0.5);
        inputs.participation = Some(0.5);
        let p = pp_params(&inputs).unwrap();
        assert!((p.theta_p - 0.125).abs() < 1e-12);
        assert!(p.b / p.theta_p <= (4.0 / (0.5 * 0.5)) * (4.0 / (0.5 * 0.5)) + 1e-9);
    }

    #[test]
    fn pp_unequal_probs_need_rho() {
        let mut inputs = unit_inputs(0.5);
        inputs.participation_probs = Some(vec![0.7, 0.75, 0.8, 0.85]);
        assert!(pp_params(&inputs).is_err());
        inputs.rho = Some(0.01);
        inputs.s = Some(0.1);
        let p = pp_params(&inputs).unwrap();
        assert!(p.theta_p > 0.0);
        // a large rho pushes theta_p below zero and must be rejected
        inputs.rho = Some(5.0);
        assert!(pp_params(&inputs).is_err());
    }

    #[test]
    fn bc_pinned_value_and_degeneracies() {
        let mut inputs = unit_inputs(0.5);
        inputs.alpha_master = Some(0.5);
        let gamma = bc_gamma(&inputs).unwrap();
        // independent evaluation of the closed form with beta/theta = 5.828427...
        let q = {
            let p = contraction_params(0.5, None).unwrap();
            p.beta / p.theta
        };
        let expect = 1.0 / (1.0 + (16.0 * q + 2.0 * q * (1.0 + 8.0 * q)).sqrt());
        assert!((gamma - expect).abs() < 1e-15);
        assert!((gamma - 0.037786471).abs() < 1e-8, "{gamma}");

        // identity master reduces to a doubled worker term
        let mut master_id = unit_inputs(0.5);
        master_id.alpha_master = Some(1.0);
        let g = bc_gamma(&master_id).unwrap();
        let expect = 1.0 / (1.0 + (2.0 * q).sqrt());
        assert!((g - expect).abs() < 1e-15);

        let mut both_id = unit_inputs(1.0);
        both_id.alpha_master = Some(1.0);
        assert_eq!(bc_gamma(&both_id).unwrap(), 1.0);

        both_id.mu = Some(2.0);
        assert_eq!(bc_gamma_pl(&both_id).unwrap(), 0.25);
    }

    #[test]
    fn hb_values() {
        // eta = 0, alpha = 1: gamma0 = 2/L, returned gamma = 1/L
        assert_eq!(hb_gamma(&unit_inputs(1.0)).unwrap(), 1.0);

        // eta = 0: gamma0 = 1/(L/2 + L_tilde sqrt(2 beta/theta))
        let gamma = hb_gamma(&unit_inputs(0.5)).unwrap();
        let q = {
            let p = contraction_params(0.5, None).unwrap();
            p.beta / p.theta
        };
        let expect = 0.5 / (0.5 + (2.0 * q).sqrt());
        assert!((gamma - expect).abs() < 1e-15);
        assert!((gamma - 0.127739581).abs() < 1e-8);

        // eta = 0.9 regression value, evaluated independently
        let mut inputs = unit_inputs(0.5);
        inputs.eta = 0.9;
        let gamma = hb_gamma(&inputs).unwrap();
        assert!((gamma - 0.003024749).abs() < 1e-8, "{gamma}");

        inputs.eta = 1.0;
        assert!(hb_gamma(&inputs).is_err());
    }

    #[test]
    fn prox_values() {
        assert_eq!(prox_gamma(&unit_inputs(1.0)).unwrap(), 1.0);
        let gamma = prox_gamma(&unit_inputs(0.5)).unwrap();
        assert!((gamma - 0.171573).abs() < 5e-7, "{gamma}");
        // the returned gamma is strictly below gamma_0
        let p = contraction_params(0.5, None).unwrap();
        let gamma0 = 1.0 / (0.5 + (p.beta / p.theta).sqrt());
        assert!(gamma < gamma0);

        let mut pl = unit_inputs(1.0);
        pl.mu = Some(4.0);
        // alpha = 1: min(1/L, theta/mu) = min(1, 0.25)
        assert_eq!(prox_gamma_pl(&pl).unwrap(), 0.25);
    }

    #[test]
    fn degeneracy_chain_collapses_to_gradient_descent() {
        for n in [1usize, 5] {
            let sm = report(2.0, 2.0, n);
            let mut inputs = StepsizeInputs::new(sm, 1.0);
            inputs.alpha_master = Some(1.0);
            inputs.participation = Some(1.0);
            inputs.page_probs = Some(vec![1.0; n]);
            let gd = 0.5;
            assert!((ef21_gamma(&inputs).unwrap() - gd).abs() < 1e-15);
            assert!((ef21_sgd_params(&inputs).unwrap().gamma - gd).abs() < 1e-15);
            assert!((page_gamma(&inputs).unwrap() - gd).abs() < 1e-15);
            assert!((pp_params(&inputs).unwrap().gamma - gd).abs() < 1e-15);
            assert!((bc_gamma(&inputs).unwrap() - gd).abs() < 1e-15);
            assert!((hb_gamma(&inputs).unwrap() - gd).abs() < 1e-15);
            assert!((prox_gamma(&inputs).unwrap() - gd).abs() < 1e-15);
        }
    }

    #[test]
    fn feasibility_holds_across_alpha_grid() {
        for i in 1..=20 {
            let alpha = i as f64 / 20.0;
            let mut inputs = StepsizeInputs::new(report(1.7, 2.3, 3), alpha);
            inputs.alpha_master = Some(alpha);
            inputs.participation = Some(0.6);
            inputs.page_probs = Some(vec![0.3, 0.5, 1.0]);
            inputs.batch_sizes = Some(vec![2, 3, 4]);
            inputs.eta = 0.4;
            inputs.mu = Some(0.9);
            // every formula must produce a positive feasible stepsize
            for gamma in [
                ef21_gamma(&inputs).unwrap(),
                ef21_gamma_pl(&inputs).unwrap(),
                ef21_sgd_params(&inputs).unwrap().gamma,
                ef21_sgd_gamma_pl(&inputs).unwrap(),
                page_gamma(&inputs).unwrap(),
                page_gamma_pl(&inputs).unwrap(),
                pp_params(&inputs).unwrap().gamma,
                pp_gamma_pl(&inputs).unwrap(),
                bc_gamma(&inputs).unwrap(),
                bc_gamma_pl(&inputs).unwrap(),
                hb_gamma(&inputs).unwrap(),
                prox_gamma(&inputs).unwrap(),
                prox_gamma_pl(&inputs).unwrap(),
            ] {
                assert!(gamma > 0.0 && gamma.is_finite());
            }
        }
    }

    #[test]
    fn monotone_in_alpha_and_smoothness() {
        let mut prev = 0.0;
        for i in 1..=20 {
            let alpha = i as f64 / 20.0;
            let gamma = ef21_gamma(&unit_inputs(alpha)).unwrap();
            assert!(gamma >= prev - 1e-15, "alpha={alpha}");
            prev = gamma;
        }
        let mut prev = f64::INFINITY;
        for i in 1..=10 {
            let l = i as f64;
            let inputs = StepsizeInputs::new(report(l, l, 2), 0.3);
            let gamma = ef21_gamma(&inputs).unwrap();
            assert!(gamma <= prev + 1e-15);
            prev = gamma;
        }
    }
}
