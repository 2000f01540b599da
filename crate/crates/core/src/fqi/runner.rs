use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{bellman_labels, diagonal_residual, labels_digest};
use crate::batch::{sample_adaptive, sample_iid, Behavior, Protocol, TransitionBatch};
use crate::bounds::{report::csv_err, EXACT_TOL};
use crate::classes::{erm_fit, project_weighted, residual_envelope, FunctionClass, OptBudget, OptCertificate, ParamQ};
use crate::complexity::{alpha_prime, class_complexity_upper, residual_class_complexity_upper};
use crate::error::{invalid, Result};
use crate::mdp::{bellman_optimality, greedy_policy, DeterministicPolicy, FiniteMdp, QTable, SaDistribution};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqiSettings {
    /// Transitions per round.
    pub n: usize,
    /// Number of rounds `K`.
    pub rounds: usize,
    /// Total failure probability, split as `δ/K` per round.
    pub delta: f64,
    /// Clip bound `B` of the fitted iterates.
    pub clip: f64,
    pub budget: OptBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub k: usize,
    /// Achieved empirical squared loss of `Q̂_{k+1}`.
    pub loss: f64,
    pub labels_digest: String,
    /// `‖Q̂_{k+1} − T*Q̂_k‖_{2,μ̄_k}`.
    pub eps_k: f64,
    /// `inf_f ‖f − T*Q̂_k‖_{2,μ̄_k}` (exact for convex classes, an upper bound otherwise).
    pub eps_app_k: f64,
    pub eps_app_exact: bool,
    pub eps_opt_k: f64,
    pub eps_opt_certified: bool,
    /// `‖Q̂_k − T*Q̂_k‖∞` of the round's input iterate.
    pub diag_residual: f64,
    /// `α'_k(δ/K)` from the certified residual-class complexity bound.
    pub alpha_prime: f64,
    pub rseq_residual_upper: f64,
    /// `ε_app,k + √(2α'_k) + ε_opt,k`.
    pub bound_rhs: f64,
    pub pass: bool,
    /// Predictable design `μ̄_k`.
    pub design: SaDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FqiTrace {
    pub protocol: Protocol,
    pub behavior: String,
    pub seed: u64,
    pub settings: FqiSettings,
    pub class: Arc<FunctionClass>,
    pub rounds: Vec<RoundRecord>,
    /// `Q̂_0, …, Q̂_K`.
    pub iterates: Vec<ParamQ>,
    pub tables: Vec<QTable>,
    pub batches: Vec<TransitionBatch>,
}

impl FqiTrace {
    pub fn final_table(&self) -> &QTable {
        self.tables.last().expect("trace holds q0")
    }

    /// Greedy policy of the last iterate.
    pub fn final_policy(&self) -> DeterministicPolicy {
        greedy_policy(self.final_table())
    }

    pub fn all_pass(&self) -> bool {
        self.rounds.iter().all(|r| r.pass)
    }
}

enum Source<'a> {
    Fresh(&'a SaDistribution),
    Adaptive(&'a dyn Behavior),
}

/// Fresh protocol: each round draws `n` i.i.d. pairs from `mu`.
pub fn run_fqi_fresh(
    mdp: &FiniteMdp,
    class: &Arc<FunctionClass>,
    mu: &SaDistribution,
    settings: &FqiSettings,
    q0: &ParamQ,
    seed: u64,
) -> Result<FqiTrace> {
    if mu.n_states() != mdp.n_states() || mu.n_actions() != mdp.n_actions() {
        return invalid("sampling distribution does not match the mdp shape");
    }
    run(mdp, class, Source::Fresh(mu), settings, q0, seed)
}

/// Adaptive protocol: samples are drawn one at a time from the behavior's
/// conditional law given `Q̂_k` and the round's earlier samples.
pub fn run_fqi_adaptive(
    mdp: &FiniteMdp,
    class: &Arc<FunctionClass>,
    behavior: &dyn Behavior,
    settings: &FqiSettings,
    q0: &ParamQ,
    seed: u64,
) -> Result<FqiTrace> {
    run(mdp, class, Source::Adaptive(behavior), settings, q0, seed)
}

fn run(
    mdp: &FiniteMdp,
    class: &Arc<FunctionClass>,
    source: Source<'_>,
    settings: &FqiSettings,
    q0: &ParamQ,
    seed: u64,
) -> Result<FqiTrace> {
    if settings.n == 0 || settings.rounds == 0 {
        return invalid("n and K must be at least 1");
    }
    if !(settings.delta > 0.0 && settings.delta < 1.0) {
        return invalid(format!("delta = {} must lie in (0, 1)", settings.delta));
    }
    if class.n_states() != mdp.n_states() || class.n_actions() != mdp.n_actions() {
        return invalid("class domain does not match the mdp");
    }
    if **q0.class() != **class {
        return invalid("q0 does not belong to the fitted class");
    }
    q0.check_against(mdp)?;
    let clip = settings.clip;
    let floor = mdp.r_max() / (1.0 - mdp.gamma());
    if !(clip >= floor * (1.0 - 1e-12)) {
        return invalid(format!("clip bound {clip} is below r_max/(1-gamma) = {floor}"));
    }

    let (protocol, behavior) = match &source {
        Source::Fresh(_) => (Protocol::Fresh, "fixed".to_string()),
        Source::Adaptive(b) => (Protocol::Adaptive, b.id()),
    };
    let n = settings.n;
    let k_total = settings.rounds;
    let b_res = residual_envelope(mdp.r_max(), mdp.gamma(), clip);
    let f_bound = class_complexity_upper(class, clip, n)?;
    let rseq_residual_upper = residual_class_complexity_upper(f_bound, mdp.gamma(), clip, mdp.n_states(), n);
    let alpha_p = alpha_prime(b_res, n, settings.delta / k_total as f64, rseq_residual_upper)?;
    let stat_term = (2.0 * alpha_p).sqrt();

    let mut rng = seeding::rng(seed);
    let mut iterates = vec![ParamQ::new(class.clone(), q0.params().clone(), clip)?];
    let mut tables = vec![iterates[0].to_table()];
    let mut rounds = Vec::with_capacity(k_total);
    let mut batches = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let q_tab = tables[k].clone();
        let diag = diagonal_residual(&q_tab, mdp)?;
        let (transitions, design) = match &source {
            Source::Fresh(mu) => (sample_iid(mdp, mu, n, &mut rng)?, (*mu).clone()),
            Source::Adaptive(b) => sample_adaptive(mdp, *b, &q_tab, n, &mut rng)?,
        };
        let batch = TransitionBatch { transitions, protocol, behavior: behavior.clone(), round: k, seed };
        let labels = bellman_labels(&q_tab, &batch, mdp.gamma())?;
        let budget = OptBudget { seed: seeding::child_seed(seed, k as u64), ..settings.budget.clone() };
        let fit = erm_fit(class, &batch.pairs(mdp.n_actions()), &labels, clip, &budget)?;
        let next_tab = fit.q.to_table();
        let target = bellman_optimality(mdp, &q_tab)?;
        let eps_k = design.l2_norm(&next_tab.sub(&target));
        let proj = project_weighted(class, &design, &target, clip, &budget)?;
        let eps_app_exact = proj.exact && class.sup_bound() <= clip;
        let bound_rhs = proj.distance + stat_term + fit.eps_opt;
        rounds.push(RoundRecord {
            k,
            loss: fit.achieved_loss,
            labels_digest: labels_digest(&labels),
            eps_k,
            eps_app_k: proj.distance,
            eps_app_exact,
            eps_opt_k: fit.eps_opt,
            eps_opt_certified: matches!(fit.certificate, OptCertificate::Exact),
            diag_residual: diag,
            alpha_prime: alpha_p,
            rseq_residual_upper,
            bound_rhs,
            pass: eps_k <= bound_rhs + EXACT_TOL,
            design,
        });
        batches.push(batch);
        iterates.push(fit.q);
        tables.push(next_tab);
    }
    Ok(FqiTrace {
        protocol,
        behavior,
        seed,
        settings: settings.clone(),
        class: class.clone(),
        rounds,
        iterates,
        tables,
        batches,
    })
}

/// Columns: `k, loss, eps_k, eps_app_k, eps_opt_k, diag_residual, alpha_prime, bound_rhs, pass,
/// eps_opt_certified, eps_app_exact, certified_pass, labels_digest`. `pass` is the nominal verdict;
/// `certified_pass` also requires exact optimization and projection certificates.
pub fn write_trace_csv<W: Write>(trace: &FqiTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "k",
        "loss",
        "eps_k",
        "eps_app_k",
        "eps_opt_k",
        "diag_residual",
        "alpha_prime",
        "bound_rhs",
        "pass",
        "eps_opt_certified",
        "eps_app_exact",
        "certified_pass",
        "labels_digest",
    ])
    .map_err(csv_err)?;
    for r in &trace.rounds {
        w.write_record([
            r.k.to_string(),
            r.loss.to_string(),
            r.eps_k.to_string(),
            r.eps_app_k.to_string(),
            r.eps_opt_k.to_string(),
            r.diag_residual.to_string(),
            r.alpha_prime.to_string(),
            r.bound_rhs.to_string(),
            r.pass.to_string(),
            r.eps_opt_certified.to_string(),
            r.eps_app_exact.to_string(),
            (r.pass && r.eps_opt_certified && r.eps_app_exact).to_string(),
            r.labels_digest.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
