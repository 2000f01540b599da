use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{ball_constrained_lstsq, FunctionClass, ParamQ, Params};
use crate::error::{invalid, Result};
use crate::mdp::{QTable, SaDistribution};

/// Budget for non-convex fits; ignored by the closed-form solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptBudget {
    pub restarts: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for OptBudget {
    fn default() -> Self {
        Self { restarts: 4, steps: 300, learning_rate: 0.05, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptCertificate {
    /// The lower bound on the minimum is the exact constrained optimum.
    Exact,
    /// The lower bound is the best objective over the restarts run; it
    /// certifies nothing about the global minimum.
    RestartRelative { restart_objectives: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErmFit {
    pub q: ParamQ,
    /// `(1/n) Σ (q(s_i,a_i) − y_i)²` with clipped evaluations.
    pub achieved_loss: f64,
    /// Lower bound on the minimum empirical loss over the class.
    pub min_loss_bound: f64,
    /// `√max(0, achieved − bound)`.
    pub eps_opt: f64,
    pub certificate: OptCertificate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub q: ParamQ,
    /// `‖q − target‖_{2,design}` with clipped evaluations.
    pub distance: f64,
    pub exact: bool,
}

/// `Σ_j w_j (f(x_j) − t_j)² + constant`, over distinct pair indices.
struct WeightedDesign {
    points: Vec<usize>,
    weights: Vec<f64>,
    targets: Vec<f64>,
    constant: f64,
}

fn aggregate(points: &[usize], labels: &[f64]) -> WeightedDesign {
    let n = points.len() as f64;
    let mut groups: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for (&p, &y) in points.iter().zip(labels) {
        let e = groups.entry(p).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += y;
    }
    let means: BTreeMap<usize, f64> = groups.iter().map(|(&p, &(c, s))| (p, s / c as f64)).collect();
    let constant = points.iter().zip(labels).map(|(p, y)| (y - means[p]).powi(2)).sum::<f64>() / n;
    WeightedDesign {
        points: groups.keys().copied().collect(),
        weights: groups.values().map(|&(c, _)| c as f64 / n).collect(),
        targets: means.values().copied().collect(),
        constant,
    }
}

/// Minimizes the weighted objective over the class. Returns the member and
/// the objective value (without the constant), plus its certificate.
fn solve(
    class: &Arc<FunctionClass>,
    wd: &WeightedDesign,
    clip: f64,
    budget: &OptBudget,
) -> Result<(ParamQ, f64, OptCertificate)> {
    let sw: Vec<f64> = wd.weights.iter().map(|w| w.sqrt()).collect();
    let y = DVector::from_iterator(wd.points.len(), wd.targets.iter().zip(&sw).map(|(t, s)| t * s));
    match &**class {
        FunctionClass::Linear(c) => {
            let d = c.features.dim();
            let x = DMatrix::from_fn(wd.points.len(), d, |j, k| sw[j] * c.features.row(wd.points[j])[k]);
            let sol = ball_constrained_lstsq(&x, &y, c.weight_bound)?;
            let q = ParamQ::new(class.clone(), Params::Linear(sol.theta.as_slice().to_vec()), clip)?;
            Ok((q, sol.objective, OptCertificate::Exact))
        }
        FunctionClass::Rkhs(c) => {
            let g = c.gram_of(&wd.points);
            let m = wd.points.len();
            let eig = SymmetricEigen::new(g);
            let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..m).filter(|&r| eig.eigenvalues[r] > lmax * 1e-12 && eig.eigenvalues[r] > 0.0).collect();
            // ψ_j = Λ_r^{1/2} U_{j,r}: f(x_j) = ψ_jᵀθ and ‖f‖_𝓗 = ‖θ‖.
            let x = DMatrix::from_fn(m, keep.len(), |j, k| {
                let r = keep[k];
                sw[j] * eig.eigenvalues[r].sqrt() * eig.eigenvectors[(j, r)]
            });
            let sol = ball_constrained_lstsq(&x, &y, c.norm_bound)?;
            let coeffs: Vec<f64> = (0..m)
                .map(|j| {
                    keep.iter()
                        .enumerate()
                        .map(|(k, &r)| eig.eigenvectors[(j, r)] * sol.theta[k] / eig.eigenvalues[r].sqrt())
                        .sum()
                })
                .collect();
            let q = ParamQ::new(class.clone(), Params::Rkhs { anchors: wd.points.clone(), coeffs }, clip)?;
            let objective = wd
                .points
                .iter()
                .zip(&wd.weights)
                .zip(&wd.targets)
                .map(|((&p, &w), &t)| w * (q.raw_value(p) - t).powi(2))
                .sum::<f64>()
                .min(sol.objective.max(0.0));
            Ok((q, objective, OptCertificate::Exact))
        }
        FunctionClass::Neural(c) => {
            let (layers, obj, restart_objectives) = c.train(&wd.points, &wd.weights, &wd.targets, budget);
            let q = ParamQ::new(class.clone(), Params::Neural(layers), clip)?;
            Ok((q, obj, OptCertificate::RestartRelative { restart_objectives }))
        }
    }
}

/// Empirical risk minimizer of `(1/n) Σ (f(s_i,a_i) − y_i)²` over the class.
pub fn erm_fit(
    class: &Arc<FunctionClass>,
    points: &[usize],
    labels: &[f64],
    clip: f64,
    budget: &OptBudget,
) -> Result<ErmFit> {
    if points.is_empty() {
        return invalid("erm needs at least one sample (n = 0)");
    }
    if points.len() != labels.len() {
        return invalid(format!("{} design points but {} labels", points.len(), labels.len()));
    }
    if let Some(&p) = points.iter().find(|&&p| p >= class.n_pairs()) {
        return invalid(format!("design point {p} outside the domain of {} pairs", class.n_pairs()));
    }
    if labels.iter().any(|y| !y.is_finite()) {
        return invalid("labels must be finite");
    }
    let wd = aggregate(points, labels);
    let (q, objective, certificate) = solve(class, &wd, clip, budget)?;
    let n = points.len() as f64;
    let achieved_loss = points.iter().zip(labels).map(|(&p, &y)| (q.value(p) - y).powi(2)).sum::<f64>() / n;
    let min_loss_bound = objective + wd.constant;
    let eps_opt = (achieved_loss - min_loss_bound).max(0.0).sqrt();
    Ok(ErmFit { q, achieved_loss, min_loss_bound, eps_opt, certificate })
}

/// Best approximation of `target` in `L²(design)` over the class.
pub fn project_weighted(
    class: &Arc<FunctionClass>,
    design: &SaDistribution,
    target: &QTable,
    clip: f64,
    budget: &OptBudget,
) -> Result<Projection> {
    if design.masses().len() != class.n_pairs() || target.values().len() != class.n_pairs() {
        return invalid("design and target must cover the class domain");
    }
    let mut wd = WeightedDesign { points: vec![], weights: vec![], targets: vec![], constant: 0.0 };
    for (p, &m) in design.masses().iter().enumerate() {
        if m > 0.0 {
            wd.points.push(p);
            wd.weights.push(m);
            wd.targets.push(target.values()[p]);
        }
    }
    if wd.points.is_empty() {
        return invalid("design has no positive mass");
    }
    let (q, _, certificate) = solve(class, &wd, clip, budget)?;
    let distance = design.l2_norm(&q.to_table().sub(target));
    Ok(Projection { q, distance, exact: matches!(certificate, OptCertificate::Exact) })
}
