use super::{component, BoundReport, TheoremId, EXACT_TOL};
use crate::error::{invalid, Result};
use crate::mdp::{
    bellman_optimality, greedy_policy, max_transition_apply, policy_kernel_apply, FiniteMdp, QTable,
    StochasticPolicy,
};

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return invalid(format!("gamma = {gamma} outside [0, 1)"));
    }
    Ok(())
}

fn weighted_residuals(gamma: f64, residual_sups: &[f64]) -> f64 {
    let k = residual_sups.len();
    residual_sups.iter().enumerate().map(|(i, e)| gamma.powi((k - 1 - i) as i32) * e).sum()
}

/// Components of `2γ^K‖Q_0 − Q*‖∞ + 2 Σ γ^{K−1−i}‖ε_i‖∞` with `K = residual_sups.len()`.
pub fn error_propagation_components(
    gamma: f64,
    init_gap_sup: f64,
    residual_sups: &[f64],
) -> Result<Vec<(String, f64)>> {
    check_gamma(gamma)?;
    let k = residual_sups.len() as i32;
    Ok(vec![
        component("2*gamma^K*init_gap", 2.0 * gamma.powi(k) * init_gap_sup),
        component("2*sum_gamma^(K-1-i)*eps_i", 2.0 * weighted_residuals(gamma, residual_sups)),
    ])
}

/// Sup-norm propagation through greedy kernels.
pub fn error_propagation_bound(gamma: f64, k: usize, init_gap_sup: f64, residual_sups: &[f64]) -> Result<f64> {
    if k != residual_sups.len() {
        return invalid(format!("K = {k} but {} residual norms given", residual_sups.len()));
    }
    Ok(error_propagation_components(gamma, init_gap_sup, residual_sups)?.iter().map(|c| c.1).sum())
}

/// Components of `γ^K‖Q_0 − Q*‖∞ + Σ γ^{K−1−i}‖ε_i‖∞`.
pub fn max_propagation_components(
    gamma: f64,
    init_gap_sup: f64,
    residual_sups: &[f64],
) -> Result<Vec<(String, f64)>> {
    check_gamma(gamma)?;
    let k = residual_sups.len() as i32;
    Ok(vec![
        component("gamma^K*init_gap", gamma.powi(k) * init_gap_sup),
        component("sum_gamma^(K-1-i)*eps_i", weighted_residuals(gamma, residual_sups)),
    ])
}

/// Sup-norm propagation through the max-transition operator.
pub fn max_propagation_bound(gamma: f64, k: usize, init_gap_sup: f64, residual_sups: &[f64]) -> Result<f64> {
    if k != residual_sups.len() {
        return invalid(format!("K = {k} but {} residual norms given", residual_sups.len()));
    }
    Ok(max_propagation_components(gamma, init_gap_sup, residual_sups)?.iter().map(|c| c.1).sum())
}

/// `Q_{k+1} = T*Q_k + ε_k`; returns `Q_0, …, Q_K`.
pub fn injected_residual_run(mdp: &FiniteMdp, q0: &QTable, residuals: &[QTable]) -> Result<Vec<QTable>> {
    mdp.check_qtable(q0, "q0")?;
    let mut out = Vec::with_capacity(residuals.len() + 1);
    out.push(q0.clone());
    for eps in residuals {
        mdp.check_qtable(eps, "residual")?;
        let next = bellman_optimality(mdp, out.last().expect("nonempty"))?.add(eps);
        out.push(next);
    }
    Ok(out)
}

fn apply_power(mdp: &FiniteMdp, policy: &StochasticPolicy, f: &QTable, times: usize) -> Result<QTable> {
    let mut out = f.clone();
    for _ in 0..times {
        out = policy_kernel_apply(mdp, policy, &out)?;
    }
    Ok(out)
}

/// `P^{g_{hi−1}} ⋯ P^{g_lo} f`, innermost kernel `g_lo`.
fn apply_chain(mdp: &FiniteMdp, greedy: &[StochasticPolicy], lo: usize, hi: usize, f: &QTable) -> Result<QTable> {
    let mut out = f.clone();
    for g in &greedy[lo..hi] {
        out = policy_kernel_apply(mdp, g, &out)?;
    }
    Ok(out)
}

fn apply_max_power(mdp: &FiniteMdp, f: &QTable, times: usize) -> Result<QTable> {
    let mut out = f.clone();
    for _ in 0..times {
        out = max_transition_apply(mdp, &out)?;
    }
    Ok(out)
}

fn check_run(iterates: &[QTable], residuals: &[QTable], k: usize) -> Result<()> {
    if iterates.len() != residuals.len() + 1 {
        return invalid("need one more iterate than residuals");
    }
    if k == 0 || k > residuals.len() {
        return invalid(format!("k = {k} outside 1..={}", residuals.len()));
    }
    Ok(())
}

/// Right-hand side of the pointwise greedy-kernel estimate at step `k`:
/// `γ^k A_k|Q_0 − Q*| + Σ_{i<k} γ^{k−1−i} A_{k,i}|ε_i|` with
/// `A_k = (P^{π*})^k + P^{g_{k−1}}⋯P^{g_0}` and
/// `A_{k,i} = (P^{π*})^{k−1−i} + P^{g_{k−1}}⋯P^{g_{i+1}}`, `g_j` greedy for `Q_j`.
pub fn greedy_pointwise_bound(
    mdp: &FiniteMdp,
    q_star: &QTable,
    iterates: &[QTable],
    residuals: &[QTable],
    k: usize,
) -> Result<QTable> {
    check_run(iterates, residuals, k)?;
    let pi_star = greedy_policy(q_star).to_stochastic();
    let greedy: Vec<StochasticPolicy> = iterates[..k].iter().map(|q| greedy_policy(q).to_stochastic()).collect();
    let g = mdp.gamma();
    let init = iterates[0].sub(q_star).abs();
    let mut total = apply_power(mdp, &pi_star, &init, k)?
        .add(&apply_chain(mdp, &greedy, 0, k, &init)?)
        .scale(g.powi(k as i32));
    for (i, eps) in residuals[..k].iter().enumerate() {
        let e = eps.abs();
        let term = apply_power(mdp, &pi_star, &e, k - 1 - i)?.add(&apply_chain(mdp, &greedy, i + 1, k, &e)?);
        total = total.add(&term.scale(g.powi((k - 1 - i) as i32)));
    }
    Ok(total)
}

/// Right-hand side of the pointwise max-transition estimate at step `k`:
/// `γ^k 𝐏^k|Q_0 − Q*| + Σ_{i<k} γ^{k−1−i} 𝐏^{k−1−i}|ε_i|`.
pub fn max_pointwise_bound(
    mdp: &FiniteMdp,
    q_star: &QTable,
    iterates: &[QTable],
    residuals: &[QTable],
    k: usize,
) -> Result<QTable> {
    check_run(iterates, residuals, k)?;
    let g = mdp.gamma();
    let init = iterates[0].sub(q_star).abs();
    let mut total = apply_max_power(mdp, &init, k)?.scale(g.powi(k as i32));
    for (i, eps) in residuals[..k].iter().enumerate() {
        let term = apply_max_power(mdp, &eps.abs(), k - 1 - i)?;
        total = total.add(&term.scale(g.powi((k - 1 - i) as i32)));
    }
    Ok(total)
}

/// All four propagation checks at every step `k = 1..=K` of an
/// injected-residual run. Pointwise checks report the largest entrywise
/// excess of `|Q_k − Q*|` over the right-hand side against a zero bound.
pub fn propagation_reports(
    mdp: &FiniteMdp,
    q_star: &QTable,
    iterates: &[QTable],
    residuals: &[QTable],
    instance: &str,
) -> Result<Vec<BoundReport>> {
    check_run(iterates, residuals, residuals.len().max(1))?;
    let g = mdp.gamma();
    let init_sup = iterates[0].sub(q_star).sup_norm();
    let sups: Vec<f64> = residuals.iter().map(QTable::sup_norm).collect();
    let inputs = (mdp, q_star, iterates, residuals);
    let mut out = Vec::with_capacity(4 * residuals.len());
    for k in 1..=residuals.len() {
        let gap = iterates[k].sub(q_star).abs();
        let greedy_rhs = greedy_pointwise_bound(mdp, q_star, iterates, residuals, k)?;
        let max_rhs = max_pointwise_bound(mdp, q_star, iterates, residuals, k)?;
        out.push(BoundReport::new(
            TheoremId::ErrPropGreedy,
            format!("{instance}/pointwise/k={k}"),
            gap.max_excess(&greedy_rhs),
            vec![component("pointwise_slack", 0.0)],
            EXACT_TOL,
            &inputs,
        ));
        out.push(BoundReport::new(
            TheoremId::ErrPropGreedy,
            format!("{instance}/sup/k={k}"),
            gap.sup_norm(),
            error_propagation_components(g, init_sup, &sups[..k])?,
            EXACT_TOL,
            &inputs,
        ));
        out.push(BoundReport::new(
            TheoremId::ErrPropMax,
            format!("{instance}/pointwise/k={k}"),
            gap.max_excess(&max_rhs),
            vec![component("pointwise_slack", 0.0)],
            EXACT_TOL,
            &inputs,
        ));
        out.push(BoundReport::new(
            TheoremId::ErrPropMax,
            format!("{instance}/sup/k={k}"),
            gap.sup_norm(),
            max_propagation_components(g, init_sup, &sups[..k])?,
            EXACT_TOL,
            &inputs,
        ));
    }
    Ok(out)
}
