use crate::batch::TransitionBatch;
use crate::bounds::hex_prefix;
use crate::error::{invalid, Result};
use crate::mdp::{bellman_optimality, FiniteMdp, QTable, SaDistribution};

/// `y_i = r_i + γ max_{a'} q(s'_i, a')`.
pub fn bellman_labels(q: &QTable, batch: &TransitionBatch, gamma: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return invalid("batch must be nonempty");
    }
    if let Some(t) = batch.transitions.iter().find(|t| t.s_next >= q.n_states()) {
        return invalid(format!("successor state {} outside the table", t.s_next));
    }
    let maxes = q.max_values();
    Ok(batch.transitions.iter().map(|t| t.r + gamma * maxes[t.s_next]).collect())
}

/// `‖q_next − T*q‖_{2,design}`.
pub fn residual_l2(q_next: &QTable, q: &QTable, mdp: &FiniteMdp, design: &SaDistribution) -> Result<f64> {
    mdp.check_qtable(q_next, "q_next")?;
    if design.masses().len() != mdp.n_pairs() {
        return invalid("design does not match the mdp shape");
    }
    let target = bellman_optimality(mdp, q)?;
    Ok(design.l2_norm(&q_next.sub(&target)))
}

/// `‖q − T*q‖∞`.
pub fn diagonal_residual(q: &QTable, mdp: &FiniteMdp) -> Result<f64> {
    Ok(q.sub(&bellman_optimality(mdp, q)?).sup_norm())
}

/// Short SHA-256 digest of the label bit patterns.
pub fn labels_digest(labels: &[f64]) -> String {
    let bytes: Vec<u8> = labels.iter().flat_map(|y| y.to_bits().to_le_bytes()).collect();
    hex_prefix(&bytes)
}
