use super::{sequential_rademacher_exact, FiniteFamily, PredictableTree};
use crate::bounds::{component, BoundReport, TheoremId, EXACT_TOL};
use crate::classes::residual_envelope;
use crate::error::{invalid, Result};
use crate::mdp::{FiniteMdp, QTable, Transition};

/// Every in-range transition `(s, a, r(s,a), s')` with `P(s'|s,a) > 0`.
pub fn candidate_transitions(mdp: &FiniteMdp) -> Vec<Transition> {
    let mut out = Vec::new();
    for sa in 0..mdp.n_pairs() {
        let (s, a) = mdp.unpair(sa);
        for (s_next, &p) in mdp.next_dist(sa).iter().enumerate() {
            if p > 0.0 {
                out.push(Transition { s, a, r: mdp.rewards()[sa], s_next });
            }
        }
    }
    out
}

/// Sample Bellman residuals `z ↦ f(s,a) − r − γ max_{a'} g(s',a')` over all
/// pairs `(f, g)` of a finite family of tables, on a finite transition set.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualClass {
    points: Vec<Transition>,
    residual: FiniteFamily,
    squared: FiniteFamily,
    envelope: f64,
    n_tables: usize,
}

impl ResidualClass {
    pub fn new(mdp: &FiniteMdp, tables: &[QTable], clip: f64) -> Result<Self> {
        Self::with_points(mdp, tables, clip, candidate_transitions(mdp))
    }

    /// Member `(i, j)` has index `i * tables.len() + j`.
    pub fn with_points(mdp: &FiniteMdp, tables: &[QTable], clip: f64, points: Vec<Transition>) -> Result<Self> {
        if tables.is_empty() {
            return invalid("residual class needs at least one table");
        }
        if points.is_empty() {
            return invalid("residual class needs at least one transition");
        }
        for (i, t) in tables.iter().enumerate() {
            mdp.check_qtable(t, "family member")?;
            if t.sup_norm() > clip * (1.0 + 1e-12) {
                return invalid(format!("family member {i} has sup-norm {} above the clip bound {clip}", t.sup_norm()));
            }
        }
        let envelope = residual_envelope(mdp.r_max(), mdp.gamma(), clip);
        let g = mdp.gamma();
        let maxes: Vec<Vec<f64>> = tables.iter().map(|t| t.max_values()).collect();
        let mut members = Vec::with_capacity(tables.len() * tables.len());
        for f in tables {
            for gm in &maxes {
                members.push(points.iter().map(|z| f.get(z.s, z.a) - z.r - g * gm[z.s_next]).collect::<Vec<f64>>());
            }
        }
        let residual = FiniteFamily::new(&members)?;
        if residual.sup_abs() > envelope * (1.0 + 1e-12) {
            return invalid(format!("residual {} exceeds the envelope {envelope}", residual.sup_abs()));
        }
        let squared = residual.squared();
        Ok(Self { points, residual, squared, envelope, n_tables: tables.len() })
    }

    pub fn points(&self) -> &[Transition] {
        &self.points
    }
    pub fn residual(&self) -> &FiniteFamily {
        &self.residual
    }
    /// Squared-loss class, envelope `B_res²`.
    pub fn squared(&self) -> &FiniteFamily {
        &self.squared
    }
    pub fn envelope(&self) -> f64 {
        self.envelope
    }
    pub fn n_tables(&self) -> usize {
        self.n_tables
    }
}

/// Tree-level comparison `R(𝓛̃; x) ≤ 2 B_res R(𝒢̃; x)`.
pub fn contraction_check(class: &ResidualClass, tree: &PredictableTree) -> Result<BoundReport> {
    let loss = sequential_rademacher_exact(class.squared(), tree)?;
    let resid = sequential_rademacher_exact(class.residual(), tree)?;
    Ok(BoundReport::new(
        TheoremId::SeqGen,
        "contraction_on_tree",
        loss,
        vec![component("2*B_res*R_tree(residual)", 2.0 * class.envelope() * resid)],
        EXACT_TOL,
        &(tree, class.envelope()),
    ))
}
