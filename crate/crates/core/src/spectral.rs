//! Extremal eigenvalue estimation for symmetric PSD operators by power
//! iteration, used to compute Lipschitz-gradient constants.

use crate::rng::RandomStream;

const MAX_ITERS: usize = 200;
const REL_TOL: f64 = 1e-10;
const SEED: u64 = 0x9E37_79B9_7F4A_7C15;

/// Largest eigenvalue of the symmetric PSD operator given by `matvec`.
/// Deterministically seeded; stops after 200 iterations or when the
/// Rayleigh quotient stabilizes to relative change below 1e-10.
pub fn lambda_max<F>(dim: usize, mut matvec: F) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    assert!(dim >= 1);
    let mut v: Vec<f64> = RandomStream::substream(SEED, dim as u64)
        .normal_vec(dim)
        .as_slice()
        .to_vec();
    let mut w = vec![0.0; dim];
    let mut prev = 0.0;
    for _ in 0..MAX_ITERS {
        matvec(&v, &mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let vnorm_sq = v.iter().map(|x| x * x).sum::<f64>();
        let rayleigh = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / vnorm_sq;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        if prev > 0.0 && (rayleigh - prev).abs() <= REL_TOL * rayleigh.abs().max(1e-300) {
            return rayleigh;
        }
        prev = rayleigh;
    }
    prev
}

/// Smallest eigenvalue of a symmetric PSD operator, computed by power
/// iteration on the shifted operator lambda_max * I - M.
pub fn lambda_min<F>(dim: usize, mut matvec: F) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    let top = lambda_max(dim, &mut matvec);
    if top == 0.0 {
        return 0.0;
    }
    let shifted = lambda_max(dim, |v, out| {
        matvec(v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = top * vi - *o;
        }
    });
    (top - shifted).max(0.0)
}
