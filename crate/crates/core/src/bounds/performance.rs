use serde::{Deserialize, Serialize};

use super::component;
use crate::error::{invalid, Result};
use crate::mdp::{policy_evaluation, policy_state_values, DeterministicPolicy, FiniteMdp, StateDist};

/// Initialization gap `Q_0 − Q*` measured in `L²(μ)` or in sup-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "norm", content = "value", rename_all = "snake_case")]
pub enum InitGap {
    L2(f64),
    Sup(f64),
}

fn check_common(c: f64, gamma: f64) -> Result<()> {
    if !(c >= 1.0) {
        return invalid(format!("concentrability {c} must be at least 1"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return invalid(format!("gamma = {gamma} outside [0, 1)"));
    }
    Ok(())
}

fn floor_factor(c: f64, gamma: f64, k: usize) -> f64 {
    4.0 * c.sqrt() / (1.0 - gamma).powi(2) * (1.0 - gamma.powi(k as i32))
}

/// `(4√C/(1−γ)²)(1−γ^K)ε` plus `(4γ^K√C/(1−γ))‖Q_0 − Q*‖_{2,μ}`, or
/// `4γ^K‖Q_0 − Q*‖∞/(1−γ)` for the sup-norm gap.
pub fn dist_mismatch_components(c: f64, gamma: f64, k: usize, eps: f64, init: InitGap) -> Result<Vec<(String, f64)>> {
    check_common(c, gamma)?;
    let gk = gamma.powi(k as i32);
    let init_term = match init {
        InitGap::L2(g) => component("4*gamma^K*sqrt(C)/(1-gamma)*init_l2", 4.0 * gk * c.sqrt() / (1.0 - gamma) * g),
        InitGap::Sup(g) => component("4*gamma^K/(1-gamma)*init_sup", 4.0 * gk / (1.0 - gamma) * g),
    };
    Ok(vec![component("4*sqrt(C)/(1-gamma)^2*(1-gamma^K)*eps", floor_factor(c, gamma, k) * eps), init_term])
}

pub fn dist_mismatch_bound(c: f64, gamma: f64, k: usize, eps: f64, init: InitGap) -> Result<f64> {
    Ok(dist_mismatch_components(c, gamma, k, eps, init)?.iter().map(|c| c.1).sum())
}

/// `(4√C/(1−γ)²)(1−γ^K)(ε_approx + ε_stat)` plus `8Bγ^K/(1−γ)`.
pub fn fqi_unified_components(
    c: f64,
    gamma: f64,
    k: usize,
    eps_approx: f64,
    eps_stat: f64,
    b: f64,
) -> Result<Vec<(String, f64)>> {
    check_common(c, gamma)?;
    if !(b > 0.0) {
        return invalid(format!("B = {b} must be positive"));
    }
    Ok(vec![
        component("floor*(eps_approx+eps_stat)", floor_factor(c, gamma, k) * (eps_approx + eps_stat)),
        component("8*B*gamma^K/(1-gamma)", 8.0 * b * gamma.powi(k as i32) / (1.0 - gamma)),
    ])
}

pub fn fqi_unified_bound(c: f64, gamma: f64, k: usize, eps_approx: f64, eps_stat: f64, b: f64) -> Result<f64> {
    Ok(fqi_unified_components(c, gamma, k, eps_approx, eps_stat, b)?.iter().map(|c| c.1).sum())
}

/// `(16 B R_n + 8 B² √(2 log(2/δ)/n))^{1/2}` with `R_n` normalized by `n`.
pub fn est_slow_rate(b: f64, n: usize, delta: f64, r_n: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta = {delta} must lie in (0, 1)"));
    }
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let tail = (2.0 * (2.0 / delta).ln() / n as f64).sqrt();
    Ok((16.0 * b * r_n + 8.0 * b * b * tail).sqrt())
}

/// Per-round inputs of the adaptive performance bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTerms {
    pub eps_app: f64,
    /// `α'_k(δ/K)`.
    pub alpha_prime: f64,
    pub eps_opt: f64,
}

impl RoundTerms {
    /// `ε_app,k + √(2α'_k) + ε_opt,k`.
    pub fn residual_bound(&self) -> f64 {
        self.eps_app + (2.0 * self.alpha_prime).sqrt() + self.eps_opt
    }
}

/// `(4√C_ad/(1−γ)²)(1−γ^K) max_k (ε_app,k + √(2α'_k) + ε_opt,k)` plus `8Bγ^K/(1−γ)`.
pub fn adaptive_performance_components(
    c_ad: f64,
    gamma: f64,
    k: usize,
    per_round: &[RoundTerms],
    b: f64,
) -> Result<Vec<(String, f64)>> {
    if per_round.len() != k {
        return invalid(format!("K = {k} but {} rounds given", per_round.len()));
    }
    let worst = per_round.iter().map(RoundTerms::residual_bound).fold(0.0, f64::max);
    let mut comps = fqi_unified_components(c_ad, gamma, k, worst, 0.0, b)?;
    comps[0].0 = "floor*max_k(eps_app+sqrt(2alpha')+eps_opt)".into();
    Ok(comps)
}

pub fn adaptive_performance_bound(c_ad: f64, gamma: f64, k: usize, per_round: &[RoundTerms], b: f64) -> Result<f64> {
    Ok(adaptive_performance_components(c_ad, gamma, k, per_round, b)?.iter().map(|c| c.1).sum())
}

/// `‖V* − V^π‖_{1,ρ} = Σ_s ρ(s)(V*(s) − V^π(s))`, exact.
pub fn value_gap_l1(mdp: &FiniteMdp, rho: &StateDist, v_star: &[f64], policy: &DeterministicPolicy) -> Result<f64> {
    if rho.len() != mdp.n_states() || v_star.len() != mdp.n_states() {
        return invalid("rho and V* must match n_states");
    }
    let stochastic = policy.to_stochastic();
    let q = policy_evaluation(mdp, &stochastic, 1e-12)?;
    let v = policy_state_values(&q, &stochastic);
    Ok(rho.mass().iter().zip(v_star).zip(&v).map(|((r, vs), vp)| r * (vs - vp).abs()).sum())
}
