use super::{component, BoundReport, TheoremId, EXACT_TOL};
use crate::error::{invalid, Result};
use crate::fqi::diagonal_residual;
use crate::mdp::{greedy_policy, policy_evaluation, policy_state_values, FiniteMdp, QTable};

/// `(2/(1−γ)) Σ_t ‖Q̂_t − T*Q̂_t‖∞`.
pub fn regret_certificate(diagonal_residuals: &[f64], gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return invalid(format!("gamma = {gamma} outside [0, 1)"));
    }
    Ok(2.0 / (1.0 - gamma) * diagonal_residuals.iter().sum::<f64>())
}

/// Per-step gaps `V*(s_t) − V^{π̂_t}(s_t)` with `π̂_t` greedy for `Q̂_t`.
pub fn regret_gaps(mdp: &FiniteMdp, v_star: &[f64], iterates: &[QTable], states: &[usize]) -> Result<Vec<f64>> {
    if iterates.len() != states.len() {
        return invalid(format!("{} iterates but {} visited states", iterates.len(), states.len()));
    }
    if v_star.len() != mdp.n_states() {
        return invalid("V* must match n_states");
    }
    iterates
        .iter()
        .zip(states)
        .map(|(q, &s)| {
            if s >= mdp.n_states() {
                return invalid(format!("visited state {s} out of range"));
            }
            let pi = greedy_policy(q).to_stochastic();
            let v = policy_state_values(&policy_evaluation(mdp, &pi, 1e-12)?, &pi);
            Ok(v_star[s] - v[s])
        })
        .collect()
}

/// One report per prefix `1..=n` comparing cumulative regret at the
/// visited states with the residual certificate.
pub fn regret_prefix_reports(
    mdp: &FiniteMdp,
    v_star: &[f64],
    iterates: &[QTable],
    states: &[usize],
    instance: &str,
) -> Result<Vec<BoundReport>> {
    let gaps = regret_gaps(mdp, v_star, iterates, states)?;
    let diag: Vec<f64> = iterates.iter().map(|q| diagonal_residual(q, mdp)).collect::<Result<_>>()?;
    let inputs = (mdp, iterates, states);
    let mut out = Vec::with_capacity(gaps.len());
    let mut lhs = 0.0;
    for t in 0..gaps.len() {
        lhs += gaps[t];
        let rhs = regret_certificate(&diag[..=t], mdp.gamma())?;
        out.push(BoundReport::new(
            TheoremId::RegretCert,
            format!("{instance}/prefix={}", t + 1),
            lhs,
            vec![component("2/(1-gamma)*sum_diag_residual", rhs)],
            EXACT_TOL,
            &inputs,
        ));
    }
    Ok(out)
}
