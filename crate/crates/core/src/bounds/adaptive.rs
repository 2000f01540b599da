use serde::{Deserialize, Serialize};

use super::concentrability;
use crate::error::{invalid, Result};
use crate::mdp::{greedy_policy, push_forward, FiniteMdp, QTable, SaDistribution, StateDist, StochasticPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConcentrability {
    /// `max_k max_{ν ∈ 𝒩_k} ‖dν/dμ̄_k‖∞` over the instantiated family.
    pub c_ad: f64,
    pub per_round: Vec<f64>,
    /// Resolvent powers `h ≤ horizon` searched for the prefix measures.
    pub horizon: usize,
    pub measures_per_round: usize,
    /// `max_k` of the certified all-policy coefficient of `μ̄_k`; dominates
    /// every member of every `𝒩_k`.
    pub certified_upper: f64,
    pub note: String,
}

fn density_ratio(nu: &[f64], design: &SaDistribution) -> f64 {
    nu.iter().zip(design.masses()).fold(1.0_f64, |m, (&v, &w)| {
        if v <= 0.0 {
            m
        } else if w <= 0.0 {
            f64::INFINITY
        } else {
            m.max(v / w)
        }
    })
}

/// Residual-evaluation measures of the final greedy policy.
///
/// With `π* = greedy(Q*)`, `π_K = greedy(Q̂_K)` and `g_ℓ = greedy(Q̂_ℓ)`, the
/// prefixes are `ρ⊗π*`, `ρ⊗π_K` and `ρ⊗π_K (P^{π_K})^h P^{π}` for
/// `π ∈ {π*, π_K}`, `h ≤ horizon`. Round `k` pushes each prefix through
/// `(P^{π*})^{K−1−k}` and through `P^{g_{K−1}} ⋯ P^{g_{k+1}}`, and compares
/// the results with `μ̄_k`.
pub fn adaptive_concentrability(
    mdp: &FiniteMdp,
    rho: &StateDist,
    q_star: &QTable,
    iterates: &[QTable],
    designs: &[SaDistribution],
    horizon: usize,
) -> Result<AdaptiveConcentrability> {
    let k_total = designs.len();
    if k_total == 0 || iterates.len() != k_total + 1 {
        return invalid(format!("need K >= 1 designs and K + 1 iterates, got {} and {}", k_total, iterates.len()));
    }
    if rho.len() != mdp.n_states() {
        return invalid("rho does not match n_states");
    }
    let pi_star = greedy_policy(q_star).to_stochastic();
    let pi_k = greedy_policy(&iterates[k_total]).to_stochastic();
    let greedy: Vec<StochasticPolicy> = iterates[..k_total].iter().map(|q| greedy_policy(q).to_stochastic()).collect();

    let mut prefixes = vec![
        SaDistribution::product(rho, &pi_star)?.masses().to_vec(),
        SaDistribution::product(rho, &pi_k)?.masses().to_vec(),
    ];
    let mut cur = prefixes[1].clone();
    for h in 0..=horizon {
        if h > 0 {
            cur = push_forward(mdp, &cur, &pi_k)?;
        }
        prefixes.push(push_forward(mdp, &cur, &pi_star)?);
        prefixes.push(push_forward(mdp, &cur, &pi_k)?);
    }

    let mut per_round = vec![1.0_f64; k_total];
    for nu in &prefixes {
        let mut star = nu.clone();
        let mut chain = nu.clone();
        for k in (0..k_total).rev() {
            if k + 1 < k_total {
                star = push_forward(mdp, &star, &pi_star)?;
                chain = push_forward(mdp, &chain, &greedy[k + 1])?;
            }
            let r = density_ratio(&star, &designs[k]).max(density_ratio(&chain, &designs[k]));
            per_round[k] = per_round[k].max(r);
        }
    }
    let c_ad = per_round.iter().copied().fold(1.0, f64::max);

    let t_max = concentrability::default_horizon(mdp.gamma());
    let mut certified_upper: f64 = 1.0;
    for d in designs {
        certified_upper = certified_upper.max(concentrability::concentrability(mdp, rho, d, t_max)?.c_upper);
    }
    Ok(AdaptiveConcentrability {
        c_ad,
        per_round,
        horizon,
        measures_per_round: 2 * prefixes.len(),
        certified_upper,
        note: format!("resolvent expansion truncated at h = {horizon}"),
    })
}
