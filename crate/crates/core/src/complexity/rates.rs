use serde::{Deserialize, Serialize};

use crate::classes::FunctionClass;
use crate::error::{invalid, Result};

fn check(n: usize, delta: f64) -> Result<()> {
    if n == 0 {
        return invalid("n must be at least 1");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta = {delta} must lie in (0, 1)"));
    }
    Ok(())
}

fn tail(b_res: f64, n: usize, delta: f64) -> f64 {
    b_res * b_res * (2.0 * (2.0 / delta).ln() / n as f64).sqrt()
}

/// `α(δ) = (2/n) R^seq_n(𝓛̃) + B_res² √(2 log(2/δ)/n)`, unnormalized complexity.
pub fn alpha(b_res: f64, n: usize, delta: f64, rseq_loss: f64) -> Result<f64> {
    check(n, delta)?;
    Ok(2.0 / n as f64 * rseq_loss + tail(b_res, n, delta))
}

/// `α'(δ) = (4 B_res/n) R^seq_n(𝒢̃) + B_res² √(2 log(2/δ)/n)`.
pub fn alpha_prime(b_res: f64, n: usize, delta: f64, rseq_residual: f64) -> Result<f64> {
    check(n, delta)?;
    Ok(4.0 * b_res / n as f64 * rseq_residual + tail(b_res, n, delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRates {
    pub alpha: f64,
    pub alpha_prime: f64,
}

pub fn alpha_rates(b_res: f64, n: usize, delta: f64, rseq_loss: f64, rseq_residual: f64) -> Result<AlphaRates> {
    Ok(AlphaRates { alpha: alpha(b_res, n, delta, rseq_loss)?, alpha_prime: alpha_prime(b_res, n, delta, rseq_residual)? })
}

/// Sequential Massart bound `M √(2 n log N)` for a family of `N` members
/// bounded by `M`.
pub fn finite_class_complexity_upper(n_members: usize, envelope: f64, n: usize) -> f64 {
    if n_members <= 1 {
        return 0.0;
    }
    envelope * (2.0 * n as f64 * (n_members as f64).ln()).sqrt()
}

/// Certified upper bound on `R^seq_n` of the clipped class on a finite
/// domain: the closed form when clipping cannot bind and the class constant
/// is known, capped by `B √(|S×A| n)` (signed visit counts per pair).
pub fn class_complexity_upper(class: &FunctionClass, clip: f64, n: usize) -> Result<f64> {
    let domain = clip * ((class.n_pairs() * n) as f64).sqrt();
    if class.complexity_bound_is_nominal() || class.sup_bound() > clip {
        return Ok(domain);
    }
    Ok(class.closed_form_complexity_bound(n)?.min(domain))
}

/// `R^seq(𝒢̃) ≤ R^seq(𝓕) + γ B √(|S| n)`: the reward term is a single
/// function and contributes nothing; the bootstrap term ranges over
/// functions of `s'` bounded by `γB`.
pub fn residual_class_complexity_upper(f_bound: f64, gamma: f64, clip: f64, n_states: usize, n: usize) -> f64 {
    f_bound + gamma * clip * ((n_states * n) as f64).sqrt()
}
