use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    bellman_expectation, bellman_optimality, greedy_policy, DeterministicPolicy, FiniteMdp, QTable,
    StochasticPolicy,
};
use crate::error::{invalid, Result};

/// Largest `n_states * n_actions` handled by the dense linear solve.
pub const EXACT_SOLVE_LIMIT: usize = 10_000;

/// Iterations allowed past the point where the a-priori contraction bound
/// already certifies the tolerance; guards against float stalls.
const STALL_SLACK: usize = 10_000;

fn iteration_cap(gamma: f64, first_step: f64, tol: f64) -> usize {
    if gamma == 0.0 || first_step == 0.0 {
        return STALL_SLACK;
    }
    let needed = ((tol * (1.0 - gamma) / first_step).ln() / gamma.ln()).ceil();
    (needed.max(0.0) as usize).saturating_add(STALL_SLACK)
}

fn iterate_to_tolerance(
    gamma: f64,
    q0: &QTable,
    tol: f64,
    mut step: impl FnMut(&QTable) -> Result<QTable>,
) -> Result<(QTable, usize)> {
    if !(tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    let factor = if gamma == 0.0 { 0.0 } else { gamma / (1.0 - gamma) };
    let mut q = q0.clone();
    let mut cap = usize::MAX;
    let mut count = 0;
    loop {
        let next = step(&q)?;
        count += 1;
        let diff = next.sub(&q).sup_norm();
        if count == 1 {
            cap = iteration_cap(gamma, diff, tol);
        }
        q = next;
        if diff * factor <= tol || diff == 0.0 || count >= cap {
            return Ok((q, count));
        }
    }
}

/// Picard iteration of `T*` with the a-posteriori stopping rule
/// `‖q_{k+1} − q_k‖∞ γ/(1−γ) ≤ tol`, which certifies `‖q − Q*‖∞ ≤ tol`.
pub fn value_iteration(mdp: &FiniteMdp, q0: &QTable, tol: f64) -> Result<(QTable, usize)> {
    mdp.check_qtable(q0, "q0")?;
    iterate_to_tolerance(mdp.gamma(), q0, tol, |q| bellman_optimality(mdp, q))
}

/// `[q0, T*q0, …, (T*)^k q0]`.
pub fn value_iteration_sequence(mdp: &FiniteMdp, q0: &QTable, k: usize) -> Result<Vec<QTable>> {
    mdp.check_qtable(q0, "q0")?;
    let mut out = Vec::with_capacity(k + 1);
    out.push(q0.clone());
    for _ in 0..k {
        let next = bellman_optimality(mdp, out.last().expect("nonempty"))?;
        out.push(next);
    }
    Ok(out)
}

/// Solves `(I − γ P^π) Q = r` densely.
pub fn policy_evaluation_exact(mdp: &FiniteMdp, policy: &StochasticPolicy) -> Result<QTable> {
    mdp.check_policy(policy)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let m = ns * na;
    let g = mdp.gamma();
    let mut a = DMatrix::<f64>::identity(m, m);
    for sa in 0..m {
        for (s2, &p) in mdp.next_dist(sa).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for a2 in 0..na {
                let w = policy.prob(s2, a2);
                if w != 0.0 {
                    a[(sa, s2 * na + a2)] -= g * p * w;
                }
            }
        }
    }
    let b = DVector::from_column_slice(mdp.rewards());
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| crate::Error::InvalidArgument("policy evaluation system is singular".into()))?;
    QTable::from_vec(ns, na, x.as_slice().to_vec())
}

/// Iterates `T^π` from zero until the contraction bound certifies `tol`.
pub fn policy_evaluation_iterative(mdp: &FiniteMdp, policy: &StochasticPolicy, tol: f64) -> Result<QTable> {
    mdp.check_policy(policy)?;
    let q0 = QTable::zeros(mdp.n_states(), mdp.n_actions());
    iterate_to_tolerance(mdp.gamma(), &q0, tol, |q| bellman_expectation(mdp, policy, q)).map(|(q, _)| q)
}

/// `Q^π`, exact for models up to [`EXACT_SOLVE_LIMIT`] pairs, iterative beyond.
pub fn policy_evaluation(mdp: &FiniteMdp, policy: &StochasticPolicy, tol: f64) -> Result<QTable> {
    if !(tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    if mdp.n_pairs() <= EXACT_SOLVE_LIMIT {
        policy_evaluation_exact(mdp, policy)
    } else {
        policy_evaluation_iterative(mdp, policy, tol)
    }
}

/// `V(s) = Σ_a π(a|s) q(s,a)`.
pub fn policy_state_values(q: &QTable, policy: &StochasticPolicy) -> Vec<f64> {
    (0..q.n_states())
        .map(|s| q.row(s).iter().zip(policy.row(s)).map(|(v, p)| v * p).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyIterationStep {
    pub policy: StochasticPolicy,
    /// `Q^{π_k}`.
    pub q_policy: QTable,
    /// `(T*)^k Q^{π_0}`.
    pub q_vi: QTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyIterationTrace {
    pub steps: Vec<PolicyIterationStep>,
    pub converged: bool,
}

/// Exact evaluation alternated with greedy improvement, recording the
/// value-iteration sequence started at `Q^{π_0}` alongside.
pub fn policy_iteration(mdp: &FiniteMdp, pi0: &StochasticPolicy, max_iters: usize) -> Result<PolicyIterationTrace> {
    let mut policy = pi0.clone();
    let mut q_policy = policy_evaluation(mdp, &policy, 1e-12)?;
    let mut q_vi = q_policy.clone();
    let mut steps = vec![PolicyIterationStep { policy: policy.clone(), q_policy: q_policy.clone(), q_vi: q_vi.clone() }];
    let mut converged = false;
    for _ in 0..max_iters {
        let next = greedy_policy(&q_policy).to_stochastic();
        if next == policy {
            converged = true;
            break;
        }
        policy = next;
        q_policy = policy_evaluation(mdp, &policy, 1e-12)?;
        q_vi = bellman_optimality(mdp, &q_vi)?;
        steps.push(PolicyIterationStep { policy: policy.clone(), q_policy: q_policy.clone(), q_vi: q_vi.clone() });
    }
    Ok(PolicyIterationTrace { steps, converged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalSolution {
    pub q_star: QTable,
    pub v_star: Vec<f64>,
    pub policy: DeterministicPolicy,
}

/// `Q*` to machine precision: value iteration warm start, then policy
/// iteration with exact evaluation until the greedy policy is stable.
pub fn optimal_solution(mdp: &FiniteMdp) -> Result<OptimalSolution> {
    let q0 = QTable::zeros(mdp.n_states(), mdp.n_actions());
    let (q_vi, _) = value_iteration(mdp, &q0, 1e-10)?;
    let q_star = if mdp.n_pairs() <= EXACT_SOLVE_LIMIT {
        let start = greedy_policy(&q_vi).to_stochastic();
        let trace = policy_iteration(mdp, &start, 1000)?;
        trace.steps.last().expect("nonempty trace").q_policy.clone()
    } else {
        q_vi
    };
    let policy = greedy_policy(&q_star);
    let v_star = q_star.max_values();
    Ok(OptimalSolution { q_star, v_star, policy })
}
