use serde::{Deserialize, Serialize};

use super::{bellman_labels, FqiTrace};
use crate::batch::Protocol;
use crate::classes::{erm_fit, project_weighted, OptBudget};
use crate::error::{invalid, Error, Result};
use crate::mdp::{bellman_optimality, FiniteMdp, QTable};
use crate::seeding;

/// Split of `Q̂_{k+1} − h_k` (with `h_k = T*Q̂_k`) into
/// label noise `Π̂(Y) − Π̂(h_k)`, design error `Π̂(h_k) − Π_μ h_k` and
/// approximation error `Π_μ h_k − h_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub k: usize,
    pub est_noise: QTable,
    pub est_design: QTable,
    pub approx: QTable,
    pub realized: QTable,
    /// `‖est_noise + est_design + approx − realized‖∞`.
    pub identity_error: f64,
    pub est_noise_l2: f64,
    pub est_design_l2: f64,
    pub approx_l2: f64,
    pub realized_l2: f64,
}

/// Recomputes the three terms for round `k` of a fresh-protocol trace.
pub fn decomposition_report(mdp: &FiniteMdp, trace: &FqiTrace, k: usize) -> Result<DecompositionReport> {
    if trace.protocol != Protocol::Fresh {
        return Err(Error::Unsupported("decomposition needs a fresh-protocol trace".into()));
    }
    if !trace.class.is_convex() {
        return Err(Error::Unsupported(format!(
            "population projection is not computable exactly for a {} class",
            trace.class.kind()
        )));
    }
    if k >= trace.rounds.len() {
        return invalid(format!("round {k} outside a trace of {} rounds", trace.rounds.len()));
    }
    let class = &trace.class;
    let clip = trace.settings.clip;
    let budget = OptBudget { seed: seeding::child_seed(trace.seed, k as u64), ..trace.settings.budget.clone() };
    let batch = &trace.batches[k];
    let design = &trace.rounds[k].design;
    let q_k = &trace.tables[k];
    let h = bellman_optimality(mdp, q_k)?;
    let pairs = batch.pairs(mdp.n_actions());

    let labels = bellman_labels(q_k, batch, mdp.gamma())?;
    let noisy = erm_fit(class, &pairs, &labels, clip, &budget)?.q.to_table();
    let clean_labels: Vec<f64> = pairs.iter().map(|&p| h.values()[p]).collect();
    let clean = erm_fit(class, &pairs, &clean_labels, clip, &budget)?.q.to_table();
    let population = project_weighted(class, design, &h, clip, &budget)?.q.to_table();

    let est_noise = noisy.sub(&clean);
    let est_design = clean.sub(&population);
    let approx = population.sub(&h);
    let realized = trace.tables[k + 1].sub(&h);
    let identity_error = est_noise.add(&est_design).add(&approx).sub(&realized).sup_norm();
    Ok(DecompositionReport {
        k,
        est_noise_l2: design.l2_norm(&est_noise),
        est_design_l2: design.l2_norm(&est_design),
        approx_l2: design.l2_norm(&approx),
        realized_l2: design.l2_norm(&realized),
        est_noise,
        est_design,
        approx,
        realized,
        identity_error,
    })
}
