use super::{DeterministicPolicy, FiniteMdp, QTable, StochasticPolicy};
use crate::error::{invalid, Result};

/// `(P^π q)(s,a) = Σ_{s'} P(s'|s,a) Σ_{a'} π(a'|s') q(s',a')`.
pub fn policy_kernel_apply(mdp: &FiniteMdp, policy: &StochasticPolicy, q: &QTable) -> Result<QTable> {
    mdp.check_policy(policy)?;
    mdp.check_qtable(q, "q")?;
    let next: Vec<f64> = (0..mdp.n_states())
        .map(|s| policy.row(s).iter().zip(q.row(s)).map(|(p, v)| p * v).sum())
        .collect();
    Ok(expect_next(mdp, &next))
}

fn expect_next(mdp: &FiniteMdp, next_value: &[f64]) -> QTable {
    let values = (0..mdp.n_pairs())
        .map(|sa| mdp.next_dist(sa).iter().zip(next_value).map(|(p, v)| p * v).sum())
        .collect();
    QTable::from_vec(mdp.n_states(), mdp.n_actions(), values).expect("shape fixed by mdp")
}

/// Bellman expectation operator `T^π q = r + γ P^π q`.
pub fn bellman_expectation(mdp: &FiniteMdp, policy: &StochasticPolicy, q: &QTable) -> Result<QTable> {
    let pq = policy_kernel_apply(mdp, policy, q)?;
    Ok(add_reward(mdp, &pq))
}

/// Bellman optimality operator `T* q = r + γ Σ P max_{a'} q`.
pub fn bellman_optimality(mdp: &FiniteMdp, q: &QTable) -> Result<QTable> {
    mdp.check_qtable(q, "q")?;
    let pq = expect_next(mdp, &q.max_values());
    Ok(add_reward(mdp, &pq))
}

fn add_reward(mdp: &FiniteMdp, pq: &QTable) -> QTable {
    let g = mdp.gamma();
    let mut out = pq.clone();
    for (v, &r) in out.values_mut().iter_mut().zip(mdp.rewards()) {
        *v = r + g * *v;
    }
    out
}

/// Per-state lowest-index maximizer.
pub fn greedy_policy(q: &QTable) -> DeterministicPolicy {
    let actions = (0..q.n_states()).map(|s| q.argmax(s)).collect();
    DeterministicPolicy::new(q.n_actions(), actions).expect("argmax is in range")
}

/// Max-transition operator `(𝐏g)(s,a) = Σ_{s'} P(s'|s,a) max_{a'} g(s',a')`
/// on nonnegative tables.
pub fn max_transition_apply(mdp: &FiniteMdp, g: &QTable) -> Result<QTable> {
    mdp.check_qtable(g, "g")?;
    if let Some(i) = g.values().iter().position(|&v| v < 0.0) {
        let (s, a) = mdp.unpair(i);
        return invalid(format!("max-transition operator needs g >= 0, got g({s},{a}) = {}", g.values()[i]));
    }
    Ok(expect_next(mdp, &g.max_values()))
}

/// Push a state-action measure one step through `P` then `π`:
/// `ν'(s',a') = Σ_{s,a} ν(s,a) P(s'|s,a) π(a'|s')`.
pub fn push_forward(mdp: &FiniteMdp, nu: &[f64], policy: &StochasticPolicy) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    if nu.len() != mdp.n_pairs() {
        return invalid(format!("measure has {} entries, expected {}", nu.len(), mdp.n_pairs()));
    }
    let n = mdp.n_states();
    let mut state = vec![0.0; n];
    for (sa, &m) in nu.iter().enumerate() {
        if m != 0.0 {
            for (acc, &p) in state.iter_mut().zip(mdp.next_dist(sa)) {
                *acc += m * p;
            }
        }
    }
    let mut out = Vec::with_capacity(mdp.n_pairs());
    for (s, &m) in state.iter().enumerate() {
        out.extend(policy.row(s).iter().map(|&p| m * p));
    }
    Ok(out)
}
