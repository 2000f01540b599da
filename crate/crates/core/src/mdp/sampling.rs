use rand::Rng;

use super::{FiniteMdp, NonStationaryPolicy, SaDistribution, StateDist, Transition};
use crate::error::{invalid, Result};
use crate::seeding;

fn check_inputs(mdp: &FiniteMdp, rho: &StateDist, policy: &NonStationaryPolicy) -> Result<()> {
    if rho.len() != mdp.n_states() {
        return invalid(format!("rho has {} states, mdp has {}", rho.len(), mdp.n_states()));
    }
    for p in policy.steps() {
        mdp.check_policy(p)?;
    }
    Ok(())
}

/// Exact state-action marginals `P_0, …, P_horizon` under `policy` from `ρ`.
pub fn marginal_sequence(
    mdp: &FiniteMdp,
    rho: &StateDist,
    policy: &NonStationaryPolicy,
    horizon: usize,
) -> Result<Vec<SaDistribution>> {
    check_inputs(mdp, rho, policy)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut out = Vec::with_capacity(horizon + 1);
    let mut current = SaDistribution::product(rho, policy.step(0))?.masses().to_vec();
    out.push(SaDistribution::from_mass_unchecked(ns, na, current.clone()));
    for t in 1..=horizon {
        current = super::push_forward(mdp, &current, policy.step(t))?;
        out.push(SaDistribution::from_mass_unchecked(ns, na, current.clone()));
    }
    Ok(out)
}

/// Exact marginal `P_t^π̄` of `(s_t, a_t)`.
pub fn marginal_propagate(
    mdp: &FiniteMdp,
    rho: &StateDist,
    policy: &NonStationaryPolicy,
    t: usize,
) -> Result<SaDistribution> {
    Ok(marginal_sequence(mdp, rho, policy, t)?.pop().expect("nonempty"))
}

/// Inverse-CDF draw from nonnegative weights summing to one; a `u` beyond
/// the accumulated mass (float round-off) maps to the last positive weight.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Sequential conditional sampling of one trajectory.
pub fn sample_trajectory(
    mdp: &FiniteMdp,
    rho: &StateDist,
    policy: &NonStationaryPolicy,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Transition>> {
    check_inputs(mdp, rho, policy)?;
    if horizon == 0 {
        return invalid("horizon must be at least 1");
    }
    let mut rng = seeding::rng(seed);
    let mut s = sample_index(rho.mass(), rng.gen::<f64>());
    let mut out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let a = sample_index(policy.step(t).row(s), rng.gen::<f64>());
        let sa = mdp.pair(s, a);
        let s_next = sample_index(mdp.next_dist(sa), rng.gen::<f64>());
        out.push(Transition { s, a, r: mdp.rewards()[sa], s_next });
        s = s_next;
    }
    Ok(out)
}
