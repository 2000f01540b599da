use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{alpha, finite_class_complexity_upper};
use crate::batch::{sample_adaptive, Behavior};
use crate::bounds::{component, BoundReport, TheoremId};
use crate::classes::residual_envelope;
use crate::error::{invalid, Result};
use crate::mdp::{FiniteMdp, QTable};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqGenOutcome {
    pub trials: usize,
    pub violations: usize,
    pub alpha: f64,
    /// Certified upper bound on `R^seq_n(𝓛̃)` used inside `alpha`.
    pub rseq_loss_upper: f64,
    /// `sup_{f,g} |L(f;g) − L̂(f;g)|` per trial.
    pub deviations: Vec<f64>,
}

/// Monte-Carlo check of the uniform deviation bound for adaptive Bellman
/// regression over a finite family, with the round's iterate `q_hat` held
/// fixed. `L` uses the exact predictable design of each drawn batch.
#[allow(clippy::too_many_arguments)]
pub fn verify_seq_generalization(
    mdp: &FiniteMdp,
    family: &[QTable],
    behavior: &dyn Behavior,
    q_hat: &QTable,
    n: usize,
    delta: f64,
    n_trials: usize,
    seed: u64,
    clip: f64,
) -> Result<(BoundReport, SeqGenOutcome)> {
    if family.is_empty() {
        return invalid("family must be nonempty");
    }
    if n_trials == 0 {
        return invalid("n_trials must be at least 1");
    }
    for f in family {
        mdp.check_qtable(f, "family member")?;
        if f.sup_norm() > clip * (1.0 + 1e-12) {
            return invalid("family member exceeds the clip bound");
        }
    }
    let b_res = residual_envelope(mdp.r_max(), mdp.gamma(), clip);
    let n_members = family.len() * family.len();
    let rseq_loss_upper = finite_class_complexity_upper(n_members, b_res * b_res, n);
    let alpha_value = alpha(b_res, n, delta, rseq_loss_upper)?;

    let g = mdp.gamma();
    let next_max: Vec<Vec<f64>> = family.iter().map(|t| t.max_values()).collect();
    // Conditional first and second moments of the label for every g.
    let moments: Vec<(Vec<f64>, Vec<f64>)> = next_max
        .iter()
        .map(|m| {
            (0..mdp.n_pairs())
                .map(|sa| {
                    let r = mdp.rewards()[sa];
                    mdp.next_dist(sa).iter().zip(m).fold((0.0, 0.0), |(e1, e2), (&p, &v)| {
                        let y = r + g * v;
                        (e1 + p * y, e2 + p * y * y)
                    })
                })
                .unzip()
        })
        .collect();

    let deviations: Vec<f64> = (0..n_trials)
        .into_par_iter()
        .map(|trial| -> Result<f64> {
            let mut rng = seeding::child_rng(seed, trial as u64);
            let (batch, design) = sample_adaptive(mdp, behavior, q_hat, n, &mut rng)?;
            let mut worst: f64 = 0.0;
            for f in family {
                for (gi, gm) in next_max.iter().enumerate() {
                    let (e1, e2) = &moments[gi];
                    let pop: f64 = design
                        .masses()
                        .iter()
                        .enumerate()
                        .map(|(sa, &w)| {
                            let fv = f.values()[sa];
                            w * (fv * fv - 2.0 * fv * e1[sa] + e2[sa])
                        })
                        .sum();
                    let emp: f64 = batch
                        .iter()
                        .map(|z| (f.get(z.s, z.a) - z.r - g * gm[z.s_next]).powi(2))
                        .sum::<f64>()
                        / n as f64;
                    worst = worst.max((pop - emp).abs());
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;

    let violations = deviations.iter().filter(|&&d| d > alpha_value).count();
    let sigma = (delta * (1.0 - delta) / n_trials as f64).sqrt();
    let report = BoundReport::new(
        TheoremId::SeqGen,
        format!("violation_rate(n={n},trials={n_trials},members={n_members})"),
        violations as f64 / n_trials as f64,
        vec![component("delta", delta), component("3sigma", 3.0 * sigma)],
        0.0,
        &(n, delta, n_trials, seed, behavior.id(), clip),
    );
    Ok((report, SeqGenOutcome { trials: n_trials, violations, alpha: alpha_value, rseq_loss_upper, deviations }))
}
