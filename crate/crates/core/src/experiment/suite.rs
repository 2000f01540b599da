use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ClassConfig, ExperimentConfig, FeatureKind};
use super::scenarios::{scenario, Scenario, SCENARIO_IDS};
use crate::batch::{Behavior, BehaviorRule};
use crate::bounds::{
    adaptive_concentrability, adaptive_performance_bound, adaptive_performance_components, component, concentrability,
    concentrability_stabilized, dist_mismatch_components, enumerate_max_mass, est_slow_rate, fqi_unified_bound,
    fqi_unified_components, injected_residual_run, max_propagation_bound, error_propagation_bound, propagation_reports,
    regret_prefix_reports, value_gap_l1, BoundReport, InitGap, RoundTerms, TheoremId, EXACT_TOL,
};
use crate::classes::{FeatureMap, FunctionClass, Kernel, ParamQ};
use crate::complexity::{
    class_complexity_upper, classical_rademacher_exact, contraction_check, sequential_rademacher_exact,
    sequential_rademacher_search, verify_seq_generalization, FiniteFamily, LinearBall, PredictableTree, ResidualClass,
    RkhsBall,
};
use crate::error::Result;
use crate::fqi::{decomposition_report, run_fqi_adaptive, run_fqi_fresh, FqiSettings, FqiTrace};
use crate::mdp::random::{random_mdp, random_policy, random_qtable, random_sa_dist, random_sparse_mdp, random_state_dist};
use crate::mdp::{
    bellman_expectation, bellman_optimality, greedy_policy, optimal_solution, policy_iteration, value_iteration,
    value_iteration_sequence, FiniteMdp, QTable, SaDistribution, StateDist,
};
use crate::seeding::{child_rng, child_seed};

const CONTRACTION_GAMMAS: [f64; 3] = [0.5, 0.9, 0.99];
/// Node budget of the brute-force marginal enumeration per MDP.
pub const ENUMERATION_BUDGET: u64 = 1 << 25;
/// Step horizon of the concentrability oracle comparison.
pub const ORACLE_T_MAX: usize = 8;
const STABILIZE_CAP: usize = 400;

/// Violation-frequency report: the rate must not exceed `δ + 3σ`, with
/// `σ = √(δ(1−δ)/trials)`.
pub fn rate_report<I: Serialize + ?Sized>(
    theorem: TheoremId,
    instance: impl Into<String>,
    violations: usize,
    trials: usize,
    delta: f64,
    inputs: &I,
) -> BoundReport {
    let sigma = (delta * (1.0 - delta) / trials.max(1) as f64).sqrt();
    BoundReport::new(
        theorem,
        instance,
        violations as f64 / trials.max(1) as f64,
        vec![component("delta", delta), component("3sigma", 3.0 * sigma)],
        0.0,
        inputs,
    )
}

fn margin_report<I: Serialize + ?Sized>(theorem: TheoremId, instance: String, excess: f64, tol: f64, inputs: &I) -> BoundReport {
    BoundReport::new(theorem, instance, excess, vec![component("slack", 0.0)], tol, inputs)
}

/// Random shape for the operator and propagation checks.
fn random_shape<R: Rng>(rng: &mut R) -> (usize, usize) {
    (rng.gen_range(1..=6), rng.gen_range(1..=4))
}

/// Sampling distribution with full support: half uniform, half random.
fn spread_sa_dist<R: Rng>(rng: &mut R, ns: usize, na: usize) -> SaDistribution {
    let r = random_sa_dist(rng, ns, na);
    let u = 1.0 / (ns * na) as f64;
    let mass = r.masses().iter().map(|m| 0.5 * m + 0.5 * u).collect();
    SaDistribution::new(ns, na, mass).expect("mixture of distributions")
}

// ── Contraction ──────────────────────────────────────────────────────

/// Both Bellman operators shrink sup-norm distances by `γ`; each report
/// carries the largest `‖TQ − TQ'‖∞ − γ_claimed ‖Q − Q'‖∞` at one `γ`.
pub fn contraction_reports(instances: usize, seed: u64, modulus_scale: f64) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    for (gi, &gamma) in CONTRACTION_GAMMAS.iter().enumerate() {
        let count = instances / CONTRACTION_GAMMAS.len() + usize::from(gi < instances % CONTRACTION_GAMMAS.len());
        let stream = child_seed(seed, gi as u64);
        let claimed = gamma * modulus_scale;
        let excess: Vec<(f64, f64)> = (0..count)
            .into_par_iter()
            .map(|i| -> Result<(f64, f64)> {
                let mut rng = child_rng(stream, i as u64);
                let (ns, na) = random_shape(&mut rng);
                let mdp = random_mdp(&mut rng, ns, na, gamma);
                let pi = random_policy(&mut rng, ns, na);
                let scale = rng.gen_range(0.1..10.0);
                let q = random_qtable(&mut rng, ns, na, scale);
                let q2 = random_qtable(&mut rng, ns, na, scale);
                let d = q.sub(&q2).sup_norm();
                let lhs_pi = bellman_expectation(&mdp, &pi, &q)?.sub(&bellman_expectation(&mdp, &pi, &q2)?).sup_norm();
                let lhs_star = bellman_optimality(&mdp, &q)?.sub(&bellman_optimality(&mdp, &q2)?).sup_norm();
                Ok((lhs_pi - claimed * d, lhs_star - claimed * d))
            })
            .collect::<Result<_>>()?;
        let worst_pi = excess.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        let worst_star = excess.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let inputs = (gamma, claimed, count, stream);
        for (op, worst) in [("expectation", worst_pi), ("optimality", worst_star)] {
            out.push(BoundReport::new(
                TheoremId::Contraction,
                format!("{op}/gamma={gamma}/instances={count}"),
                worst,
                vec![component("slack", 0.0)],
                1e-12,
                &inputs,
            ));
        }
    }
    Ok(out)
}

// ── Policy iteration ─────────────────────────────────────────────────

/// Largest violation along one policy-iteration trace of
/// `Q_k ≤ Q^{π_k} ≤ Q*`, `Q^{π_k} ≥ Q^{π_{k−1}}` and
/// `‖Q* − Q^{π_k}‖∞ ≤ ‖Q* − Q_k‖∞ ≤ γ^k ‖Q* − Q_0‖∞`.
pub fn dominance_excess(mdp: &FiniteMdp, q_star: &QTable, trace: &crate::mdp::PolicyIterationTrace) -> f64 {
    let g = mdp.gamma();
    let init = q_star.sub(&trace.steps[0].q_vi).sup_norm();
    let mut worst = f64::NEG_INFINITY;
    for (k, step) in trace.steps.iter().enumerate() {
        let gap_pi = q_star.sub(&step.q_policy).sup_norm();
        let gap_vi = q_star.sub(&step.q_vi).sup_norm();
        worst = worst
            .max(step.q_vi.max_excess(&step.q_policy))
            .max(step.q_policy.max_excess(q_star))
            .max(gap_pi - gap_vi)
            .max(gap_vi - g.powi(k as i32) * init);
        if k > 0 {
            worst = worst.max(trace.steps[k - 1].q_policy.max_excess(&step.q_policy));
        }
    }
    worst
}

pub fn dominance_reports(instances: usize, seed: u64) -> Result<Vec<BoundReport>> {
    (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(seed, i as u64);
            let gamma = rng.gen_range(0.5..0.95);
            let mdp = random_mdp(&mut rng, 5, 3, gamma);
            let pi0 = random_policy(&mut rng, 5, 3);
            let (q_star, _) = value_iteration(&mdp, &QTable::zeros(5, 3), 1e-12)?;
            let trace = policy_iteration(&mdp, &pi0, 100)?;
            let excess = dominance_excess(&mdp, &q_star, &trace);
            Ok(margin_report(
                TheoremId::PolicyIterDominance,
                format!("random_5x3/{i}/steps={}", trace.steps.len()),
                excess,
                EXACT_TOL,
                &(&mdp, &pi0),
            ))
        })
        .collect()
}

// ── Error propagation ────────────────────────────────────────────────

pub fn propagation_suite(instances: usize, seed: u64) -> Result<Vec<BoundReport>> {
    let per: Vec<Vec<BoundReport>> = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<Vec<BoundReport>> {
            let mut rng = child_rng(seed, i as u64);
            let gamma = if i % 2 == 0 { 0.5 } else { 0.9 };
            let (ns, na) = (rng.gen_range(2..=6), rng.gen_range(2..=3));
            let mdp = random_mdp(&mut rng, ns, na, gamma);
            let q_star = optimal_solution(&mdp)?.q_star;
            let q0_scale = rng.gen_range(0.5..5.0);
            let q0 = random_qtable(&mut rng, ns, na, q0_scale);
            let size = rng.gen_range(0.0..0.5);
            let residuals: Vec<QTable> = (0..10).map(|_| random_qtable(&mut rng, ns, na, size)).collect();
            let iterates = injected_residual_run(&mdp, &q0, &residuals)?;
            let name = format!("random_{ns}x{na}/gamma={gamma}/{i}");
            let mut out = propagation_reports(&mdp, &q_star, &iterates, &residuals, &name)?;
            let init = q0.sub(&q_star).sup_norm();
            let sups: Vec<f64> = residuals.iter().map(QTable::sup_norm).collect();
            let greedy = error_propagation_bound(gamma, 10, init, &sups)?;
            let max_op = max_propagation_bound(gamma, 10, init, &sups)?;
            out.push(BoundReport::new(
                TheoremId::ErrPropMax,
                format!("{name}/max_bound_below_greedy_bound"),
                max_op,
                vec![component("greedy_sup_bound", greedy)],
                EXACT_TOL,
                &(gamma, init, &sups),
            ));
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

// ── Concentrability ──────────────────────────────────────────────────

/// Oracle and consistency checks of the concentrability search on one
/// instance: DP marginals against brute-force enumeration, the witness
/// reproducing `C`, and `C ≤ C_upper`.
pub fn concentrability_instance_reports(
    name: &str,
    mdp: &FiniteMdp,
    rho: &StateDist,
    mu: &SaDistribution,
    t_max: usize,
) -> Result<Vec<BoundReport>> {
    let res = concentrability(mdp, rho, mu, t_max)?;
    let en = enumerate_max_mass(mdp, rho, t_max, ENUMERATION_BUDGET)?;
    let mut gap: f64 = 0.0;
    for t in 0..=en.horizon {
        for (a, b) in res.max_mass[t].iter().zip(&en.max_mass[t]) {
            gap = gap.max((a - b).abs());
        }
    }
    let inputs = (mdp, rho, mu, t_max);
    let mut out = vec![BoundReport::new(
        TheoremId::Concentrability,
        format!("{name}/dp_vs_enumeration/t<={}", en.horizon),
        gap,
        vec![component("exact", 0.0)],
        1e-12,
        &inputs,
    )];
    if let Some(w) = &res.witness {
        let scale = if res.c.is_finite() { res.c.max(1.0) } else { 1.0 };
        let diff = if res.c.is_finite() { (w.ratio - res.c).abs() } else if w.ratio.is_infinite() { 0.0 } else { f64::INFINITY };
        out.push(BoundReport::new(
            TheoremId::Concentrability,
            format!("{name}/witness_reproduces_c/t={}", w.t),
            diff,
            vec![component("exact", 0.0)],
            EXACT_TOL * scale,
            &inputs,
        ));
    }
    let upper_ok = res.c <= res.c_upper;
    out.push(BoundReport::new(
        TheoremId::Concentrability,
        format!("{name}/c_below_certified_upper"),
        if upper_ok { 0.0 } else { 1.0 },
        vec![component("c<=c_upper", 0.0)],
        0.0,
        &inputs,
    ));
    Ok(out)
}

pub fn concentrability_suite(instances: usize, seed: u64) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    for id in SCENARIO_IDS {
        let sc = scenario(id)?;
        out.extend(concentrability_instance_reports(id, &sc.mdp, &sc.rho, &sc.mu, ORACLE_T_MAX)?);
        let st = concentrability_stabilized(&sc.mdp, &sc.rho, &sc.mu, STABILIZE_CAP)?;
        out.push(BoundReport::new(
            TheoremId::Concentrability,
            format!("{id}/stabilized/t_max={}", st.t_max),
            if st.c <= st.c_upper { 0.0 } else { 1.0 },
            vec![component("c<=c_upper", 0.0)],
            0.0,
            &(&sc, st.t_max),
        ));
    }
    let per: Vec<Vec<BoundReport>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(seed, i as u64);
            let mdp = if i % 2 == 0 {
                random_mdp(&mut rng, 3, 2, 0.9)
            } else {
                random_sparse_mdp(&mut rng, 3, 2, 0.9, 2)
            };
            let rho = random_state_dist(&mut rng, 3);
            let mu = random_sa_dist(&mut rng, 3, 2);
            concentrability_instance_reports(&format!("random_3x2/{i}"), &mdp, &rho, &mu, ORACLE_T_MAX)
        })
        .collect::<Result<_>>()?;
    out.extend(per.into_iter().flatten());
    Ok(out)
}

// ── Distribution mismatch ────────────────────────────────────────────

/// Residual tables rescaled so that `‖ε_i‖_{2,μ} = eps`.
pub fn residuals_at_level<R: Rng>(rng: &mut R, mu: &SaDistribution, k: usize, eps: f64) -> Vec<QTable> {
    let (ns, na) = (mu.n_states(), mu.n_actions());
    (0..k)
        .map(|_| {
            let t = random_qtable(rng, ns, na, 1.0);
            let norm = mu.l2_norm(&t);
            if norm > 0.0 {
                t.scale(eps / norm)
            } else {
                t
            }
        })
        .collect()
}

pub fn mismatch_suite(instances: usize, seed: u64) -> Result<Vec<BoundReport>> {
    const K: usize = 10;
    let per: Vec<Vec<BoundReport>> = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<Vec<BoundReport>> {
            let mut rng = child_rng(seed, i as u64);
            let na = rng.gen_range(2..=3);
            let gamma = rng.gen_range(0.5..0.9);
            let mdp = random_mdp(&mut rng, 5, na, gamma);
            let rho = random_state_dist(&mut rng, 5);
            let mu = spread_sa_dist(&mut rng, 5, na);
            let sol = optimal_solution(&mdp)?;
            let c = concentrability_stabilized(&mdp, &rho, &mu, STABILIZE_CAP)?.c_upper;
            let mut out = Vec::new();
            for eps in [0.01, 0.1] {
                let q0 = random_qtable(&mut rng, 5, na, mdp.r_max() / (1.0 - gamma));
                let residuals = residuals_at_level(&mut rng, &mu, K, eps);
                let iterates = injected_residual_run(&mdp, &q0, &residuals)?;
                let realized = value_gap_l1(&mdp, &rho, &sol.v_star, &greedy_policy(&iterates[K]))?;
                let init = mu.l2_norm(&q0.sub(&sol.q_star));
                out.push(BoundReport::new(
                    TheoremId::DistMismatch,
                    format!("random_5x{na}/{i}/eps={eps}"),
                    realized,
                    dist_mismatch_components(c, gamma, K, eps, InitGap::L2(init))?,
                    EXACT_TOL,
                    &(&mdp, &rho, &mu, &q0, &residuals),
                ));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

// ── FQI campaigns ────────────────────────────────────────────────────

/// Class used when the configuration has no `[class]` block: linear in
/// per-action affine state features with `W = r_max/(1−γ)`.
pub fn default_class_config(mdp: &FiniteMdp) -> ClassConfig {
    ClassConfig::Linear {
        features: FeatureKind::PolyAction,
        degree: 1,
        weight_bound: mdp.r_max() / (1.0 - mdp.gamma()),
        clip: None,
    }
}

pub fn build_class(cfg: &ExperimentConfig, mdp: &FiniteMdp) -> Result<(Arc<FunctionClass>, f64)> {
    let floor = mdp.r_max() / (1.0 - mdp.gamma());
    let class_cfg = cfg.class.clone().unwrap_or_else(|| default_class_config(mdp));
    class_cfg.build(mdp.n_states(), mdp.n_actions(), floor)
}

pub fn settings(cfg: &ExperimentConfig, clip: f64) -> FqiSettings {
    FqiSettings { n: cfg.n, rounds: cfg.k, delta: cfg.delta, clip, budget: cfg.budget.clone() }
}

fn round_terms(trace: &FqiTrace) -> Vec<RoundTerms> {
    trace
        .rounds
        .iter()
        .map(|r| RoundTerms { eps_app: r.eps_app_k, alpha_prime: r.alpha_prime, eps_opt: r.eps_opt_k })
        .collect()
}

/// Per-run quantities of the fresh campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreshRun {
    pub seed: u64,
    pub value_gap: f64,
    pub max_eps: f64,
    pub max_eps_app: f64,
    pub max_eps_opt: f64,
    /// Whether some round had `ε_k > ε_app,k + est_slow + ε_opt,k`.
    pub est_violated: bool,
    pub decomposition_error: Option<f64>,
}

/// Fresh-batch campaign: the decomposition identity, the est_slow residual
/// rate, and the unified performance bound both with the realized residual
/// plugged in and with the est_slow rate.
pub fn fresh_suite(cfg: &ExperimentConfig, sc: &Scenario, runs: usize, seed: u64) -> Result<Vec<BoundReport>> {
    let mdp = &sc.mdp;
    let (class, clip) = build_class(cfg, mdp)?;
    let st = settings(cfg, clip);
    let q0 = ParamQ::zero(class.clone(), clip)?;
    let sol = optimal_solution(mdp)?;
    let c = concentrability_stabilized(mdp, &sc.rho, &sc.mu, STABILIZE_CAP)?.c_upper;
    let k = cfg.k;
    let r_n = class_complexity_upper(&class, clip, cfg.n)? / cfg.n as f64;
    let est = est_slow_rate(clip, cfg.n, cfg.delta / k as f64, r_n)?;
    let gamma = mdp.gamma();

    let results: Vec<FreshRun> = (0..runs)
        .into_par_iter()
        .map(|r| -> Result<FreshRun> {
            let run_seed = child_seed(seed, r as u64);
            let trace = run_fqi_fresh(mdp, &class, &sc.mu, &st, &q0, run_seed)?;
            let value_gap = value_gap_l1(mdp, &sc.rho, &sol.v_star, &trace.final_policy())?;
            let max_eps = trace.rounds.iter().map(|x| x.eps_k).fold(0.0, f64::max);
            let max_eps_app = trace.rounds.iter().map(|x| x.eps_app_k).fold(0.0, f64::max);
            let max_eps_opt = trace.rounds.iter().map(|x| x.eps_opt_k).fold(0.0, f64::max);
            let est_violated = trace.rounds.iter().any(|x| x.eps_k > x.eps_app_k + est + x.eps_opt_k + EXACT_TOL);
            let decomposition_error = if class.is_convex() {
                let mut worst: f64 = 0.0;
                for kk in 0..k {
                    worst = worst.max(decomposition_report(mdp, &trace, kk)?.identity_error);
                }
                Some(worst)
            } else {
                None
            };
            Ok(FreshRun { seed: run_seed, value_gap, max_eps, max_eps_app, max_eps_opt, est_violated, decomposition_error })
        })
        .collect::<Result<_>>()?;

    let tag = format!("{}/{}", sc.id, class.kind());
    let mut out = Vec::new();
    for (r, run) in results.iter().enumerate() {
        if let Some(err) = run.decomposition_error {
            out.push(margin_report(TheoremId::Decomp, format!("{tag}/run={r}/identity"), err, EXACT_TOL, run));
        }
        out.push(BoundReport::new(
            TheoremId::FqiUnified,
            format!("{tag}/run={r}/realized_residual_plugin"),
            run.value_gap,
            fqi_unified_components(c, gamma, k, run.max_eps, 0.0, clip)?,
            EXACT_TOL,
            run,
        ));
    }
    let est_viol = results.iter().filter(|x| x.est_violated).count();
    let perf_viol = results
        .iter()
        .map(|x| Ok(x.value_gap > fqi_unified_bound(c, gamma, k, x.max_eps_app, est + x.max_eps_opt, clip)? + EXACT_TOL))
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&v| v)
        .count();
    let inputs = (&tag, cfg.n, k, cfg.delta, est, c, seed);
    out.push(rate_report(TheoremId::EstSlow, format!("{tag}/residual_rate/runs={runs}"), est_viol, runs, cfg.delta, &inputs));
    out.push(rate_report(
        TheoremId::FqiUnified,
        format!("{tag}/est_slow_bound_rate/runs={runs}"),
        perf_viol,
        runs,
        cfg.delta,
        &inputs,
    ));
    Ok(out)
}

/// Per-run quantities of the adaptive campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRun {
    pub seed: u64,
    pub round_violations: usize,
    pub value_gap: f64,
    pub bound: f64,
    pub c_ad: f64,
    pub certified_upper: f64,
    pub max_eps: f64,
}

/// Adaptive campaign: residual-bound violation frequencies, the adaptive
/// performance bound with the instantiated `C_ad`, its plug-in form with
/// the certified all-policy coefficient, and the i.i.d. special case.
pub fn adaptive_suite(cfg: &ExperimentConfig, sc: &Scenario, runs: usize, seed: u64) -> Result<Vec<BoundReport>> {
    let mdp = &sc.mdp;
    let (class, clip) = build_class(cfg, mdp)?;
    let st = settings(cfg, clip);
    let q0 = ParamQ::zero(class.clone(), clip)?;
    let sol = optimal_solution(mdp)?;
    let behavior = cfg.behavior.build(&sc.mu)?;
    behavior.validate(mdp)?;
    let k = cfg.k;
    let gamma = mdp.gamma();
    let horizon = crate::bounds::concentrability::default_horizon(gamma);

    let results: Vec<AdaptiveRun> = (0..runs)
        .into_par_iter()
        .map(|r| -> Result<AdaptiveRun> {
            let run_seed = child_seed(seed, r as u64);
            let trace = run_fqi_adaptive(mdp, &class, &behavior, &st, &q0, run_seed)?;
            let designs: Vec<SaDistribution> = trace.rounds.iter().map(|x| x.design.clone()).collect();
            let cad = adaptive_concentrability(mdp, &sc.rho, &sol.q_star, &trace.tables, &designs, horizon)?;
            let value_gap = value_gap_l1(mdp, &sc.rho, &sol.v_star, &trace.final_policy())?;
            let bound = adaptive_performance_bound(cad.c_ad, gamma, k, &round_terms(&trace), clip)?;
            Ok(AdaptiveRun {
                seed: run_seed,
                round_violations: trace.rounds.iter().filter(|x| !x.pass).count(),
                value_gap,
                bound,
                c_ad: cad.c_ad,
                certified_upper: cad.certified_upper,
                max_eps: trace.rounds.iter().map(|x| x.eps_k).fold(0.0, f64::max),
            })
        })
        .collect::<Result<_>>()?;

    let tag = format!("{}/{}/{}", sc.id, class.kind(), behavior.id());
    let inputs = (&tag, cfg.n, k, cfg.delta, seed);
    let run_viol = results.iter().filter(|x| x.round_violations > 0).count();
    let round_viol: usize = results.iter().map(|x| x.round_violations).sum();
    let perf_viol = results.iter().filter(|x| x.value_gap > x.bound + EXACT_TOL).count();
    let mut out = vec![
        rate_report(TheoremId::AdaptiveResidual, format!("{tag}/any_round_rate/runs={runs}"), run_viol, runs, cfg.delta, &inputs),
        rate_report(
            TheoremId::AdaptiveResidual,
            format!("{tag}/per_round_rate/rounds={}", runs * k),
            round_viol,
            runs * k,
            cfg.delta,
            &inputs,
        ),
        rate_report(TheoremId::AdaptivePerf, format!("{tag}/c_ad_v_loss_family/bound_rate/runs={runs}"), perf_viol, runs, cfg.delta, &inputs),
    ];
    for (r, run) in results.iter().enumerate() {
        out.push(BoundReport::new(
            TheoremId::AdaptivePerf,
            format!("{tag}/run={r}/certified_plugin"),
            run.value_gap,
            fqi_unified_components(run.certified_upper, gamma, k, run.max_eps, 0.0, clip)?,
            EXACT_TOL,
            run,
        ));
    }
    out.extend(iid_special_case(cfg, sc, &class, clip, child_seed(seed, u64::MAX))?);
    Ok(out)
}

/// Adaptive FQI under a history-independent behavior: it must reproduce the
/// fresh protocol, and with matched inputs the adaptive bound must equal the
/// unified fresh-batch bound.
pub fn iid_special_case(
    cfg: &ExperimentConfig,
    sc: &Scenario,
    class: &Arc<FunctionClass>,
    clip: f64,
    seed: u64,
) -> Result<Vec<BoundReport>> {
    let mdp = &sc.mdp;
    let st = settings(cfg, clip);
    let q0 = ParamQ::zero(class.clone(), clip)?;
    let fixed = BehaviorRule::Fixed { mu: sc.mu.clone() };
    let adaptive = run_fqi_adaptive(mdp, class, &fixed, &st, &q0, seed)?;
    let fresh = run_fqi_fresh(mdp, class, &sc.mu, &st, &q0, seed)?;
    let table_gap = adaptive
        .tables
        .iter()
        .zip(&fresh.tables)
        .map(|(a, b)| a.sub(b).sup_norm())
        .fold(0.0, f64::max);

    let c = concentrability_stabilized(mdp, &sc.rho, &sc.mu, STABILIZE_CAP)?.c_upper;
    let terms = round_terms(&adaptive);
    let worst = terms.iter().map(RoundTerms::residual_bound).fold(0.0, f64::max);
    let eps_approx = terms.iter().map(|t| t.eps_app).fold(0.0, f64::max);
    let lhs = adaptive_performance_bound(c, mdp.gamma(), cfg.k, &terms, clip)?;
    let rhs = fqi_unified_bound(c, mdp.gamma(), cfg.k, eps_approx, worst - eps_approx, clip)?;
    let comps = adaptive_performance_components(c, mdp.gamma(), cfg.k, &terms, clip)?;
    let tag = format!("{}/{}/iid_behavior", sc.id, class.kind());
    Ok(vec![
        BoundReport::new(
            TheoremId::AdaptiveResidual,
            format!("{tag}/reproduces_fresh_iterates"),
            table_gap,
            vec![component("exact", 0.0)],
            0.0,
            &(seed, &terms),
        ),
        BoundReport::new(
            TheoremId::AdaptivePerf,
            format!("{tag}/matches_fqi_unified"),
            (lhs - rhs).abs(),
            vec![component("exact", 0.0)],
            1e-12,
            &(c, &terms, comps),
        ),
    ])
}

// ── Sequential generalization ────────────────────────────────────────

/// `±W/2 · sign pattern` and `±W · sign pattern` weight vectors on the
/// per-action affine features: every sign pattern of the `2·n_actions`
/// coordinates at two radii.
pub fn discretized_linear_family(mdp: &FiniteMdp, weight_bound: f64) -> Result<Vec<QTable>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let fm = FeatureMap::polynomial_actions(ns, na, 1)?;
    let dim = fm.dim();
    let mut out = Vec::with_capacity(2 << dim);
    for radius in [weight_bound / 2.0, weight_bound] {
        for pattern in 0..1usize << dim {
            let theta: Vec<f64> = (0..dim)
                .map(|j| if (pattern >> j) & 1 == 1 { radius / 2.0 } else { -radius / 2.0 })
                .collect();
            out.push(QTable::from_fn(ns, na, |s, a| {
                fm.row(s * na + a).iter().zip(&theta).map(|(x, w)| x * w).sum()
            }));
        }
    }
    Ok(out)
}

pub fn seq_gen_suite(cfg: &ExperimentConfig, sc: &Scenario, trials: usize, seed: u64) -> Result<Vec<BoundReport>> {
    let mdp = &sc.mdp;
    let floor = mdp.r_max() / (1.0 - mdp.gamma());
    let family = discretized_linear_family(mdp, floor)?;
    let behavior = cfg.behavior.build(&sc.mu)?;
    behavior.validate(mdp)?;
    let q_hat = optimal_solution(mdp)?.q_star;
    let (mut report, _) =
        verify_seq_generalization(mdp, &family, &behavior, &q_hat, cfg.n, cfg.delta, trials, seed, floor)?;
    report.instance = format!("{}/{}/{}", sc.id, behavior.id(), report.instance);
    Ok(vec![report])
}

// ── Regret ───────────────────────────────────────────────────────────

pub fn regret_suite(instances: usize, seed: u64) -> Result<Vec<BoundReport>> {
    const STEPS: usize = 50;
    let per: Vec<Vec<BoundReport>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(seed, i as u64);
            let (ns, na) = (rng.gen_range(2..=6), rng.gen_range(2..=3));
            let gamma = if i % 2 == 0 { 0.5 } else { 0.9 };
            let mdp = random_mdp(&mut rng, ns, na, gamma);
            let v_star = optimal_solution(&mdp)?.v_star;
            let q0 = random_qtable(&mut rng, ns, na, mdp.r_max() / (1.0 - gamma));
            let iterates = value_iteration_sequence(&mdp, &q0, STEPS - 1)?;
            let states: Vec<usize> = (0..STEPS).map(|_| rng.gen_range(0..ns)).collect();
            regret_prefix_reports(&mdp, &v_star, &iterates, &states, &format!("random_{ns}x{na}/{i}"))
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

// ── Complexity identities ────────────────────────────────────────────

/// `E|Σ ε_t| · c` by enumeration of all `2^n` sign vectors.
pub fn pm_constant_brute_force(c: f64, n: usize) -> f64 {
    let total: f64 = (0..1u64 << n)
        .map(|mask| {
            let s: i64 = (0..n).map(|t| if (mask >> t) & 1 == 1 { 1 } else { -1 }).sum();
            c * s.unsigned_abs() as f64
        })
        .sum();
    total / (1u64 << n) as f64
}

fn random_points<R: Rng>(rng: &mut R, n: usize, n_points: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n_points)).collect()
}

pub fn complexity_suite(cfg: &ExperimentConfig, sc: &Scenario, sequences: usize, seed: u64) -> Result<Vec<BoundReport>> {
    let per: Vec<Vec<BoundReport>> = (0..sequences)
        .into_par_iter()
        .map(|i| -> Result<Vec<BoundReport>> {
            let mut rng = child_rng(seed, i as u64);
            let n = rng.gen_range(2..=10);
            let n_points = 6;
            let members: Vec<Vec<f64>> =
                (0..5).map(|_| (0..n_points).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let finite = FiniteFamily::new(&members)?;
            let feats: Vec<DVector<f64>> =
                (0..n_points).map(|_| DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0))).collect();
            let r_phi = feats.iter().map(|f| f.norm()).fold(0.0, f64::max);
            let linear = LinearBall::new(feats, 2.0)?;
            let xs: Vec<f64> = (0..n_points).map(|_| rng.gen_range(0.0..1.0)).collect();
            let kernel = Kernel::Gaussian { bandwidth: 0.3 };
            let gram = DMatrix::from_fn(n_points, n_points, |a, b| kernel.eval(&[xs[a]], &[xs[b]]));
            let kappa = (0..n_points).map(|a| gram[(a, a)].sqrt()).fold(0.0, f64::max);
            let rkhs = RkhsBall::new(gram, 1.5)?;
            let points = random_points(&mut rng, n, n_points);
            let constant = PredictableTree::constant(&points)?;
            let tag = format!("sequence={i}/n={n}");
            let mut out = Vec::new();
            let gaps = [
                ("finite", (sequential_rademacher_exact(&finite, &constant)? - classical_rademacher_exact(&finite, &points)?).abs()),
                ("linear", (sequential_rademacher_exact(&linear, &constant)? - classical_rademacher_exact(&linear, &points)?).abs()),
                ("rkhs", (sequential_rademacher_exact(&rkhs, &constant)? - classical_rademacher_exact(&rkhs, &points)?).abs()),
            ];
            for (name, gap) in gaps {
                out.push(BoundReport::new(
                    TheoremId::SeqGen,
                    format!("{tag}/{name}/constant_tree_equals_classical"),
                    gap,
                    vec![component("exact", 0.0)],
                    1e-12,
                    &(&points, &members),
                ));
            }
            let tree = PredictableTree::random(&mut rng, n, &(0..n_points).collect::<Vec<_>>())?;
            let closed_linear = 2.0 * r_phi * (n as f64).sqrt();
            let closed_rkhs = 1.5 * kappa * (n as f64).sqrt();
            let search_seed = child_seed(seed, 1_000_000 + i as u64);
            let cands: Vec<usize> = (0..n_points).collect();
            let lin_best = sequential_rademacher_search(&linear, &cands, n, cfg.search, search_seed)?.value;
            let rk_best = sequential_rademacher_search(&rkhs, &cands, n, cfg.search, search_seed)?.value;
            for (name, value, closed) in [
                ("linear/random_tree", sequential_rademacher_exact(&linear, &tree)?, closed_linear),
                ("linear/searched_tree", lin_best, closed_linear),
                ("rkhs/random_tree", sequential_rademacher_exact(&rkhs, &tree)?, closed_rkhs),
                ("rkhs/searched_tree", rk_best, closed_rkhs),
            ] {
                out.push(BoundReport::new(
                    TheoremId::SeqGen,
                    format!("{tag}/{name}/below_closed_form"),
                    value,
                    vec![component("W*R*sqrt(n)", closed)],
                    EXACT_TOL,
                    &(&tree, n),
                ));
            }
            if n <= 8 {
                let c = rng.gen_range(0.1..3.0);
                let pm = FiniteFamily::new(&[vec![c; n_points], vec![-c; n_points]])?;
                let brute = pm_constant_brute_force(c, n);
                let exact = sequential_rademacher_exact(&pm, &tree)?;
                out.push(BoundReport::new(
                    TheoremId::SeqGen,
                    format!("{tag}/pm_constant/matches_sign_enumeration"),
                    (exact - brute).abs(),
                    vec![component("exact", 0.0)],
                    1e-12,
                    &(c, n, &tree),
                ));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<BoundReport> = per.into_iter().flatten().collect();
    out.extend(residual_contraction_reports(sc, sequences.min(20), child_seed(seed, u64::MAX))?);
    Ok(out)
}

/// Tree-level contraction from the squared residual class to the residual
/// class over a small table family of the scenario.
pub fn residual_contraction_reports(sc: &Scenario, trees: usize, seed: u64) -> Result<Vec<BoundReport>> {
    let mdp = &sc.mdp;
    let floor = mdp.r_max() / (1.0 - mdp.gamma());
    let mut rng = child_rng(seed, 0);
    let tables: Vec<QTable> =
        (0..4).map(|_| random_qtable(&mut rng, mdp.n_states(), mdp.n_actions(), floor)).collect();
    let class = ResidualClass::new(mdp, &tables, floor)?;
    let cands: Vec<usize> = (0..class.points().len()).collect();
    (0..trees)
        .map(|i| {
            let mut rng = child_rng(seed, 1 + i as u64);
            let depth = rng.gen_range(2..=8);
            let tree = PredictableTree::random(&mut rng, depth, &cands)?;
            let mut r = contraction_check(&class, &tree)?;
            r.instance = format!("{}/{}/tree={i}/depth={depth}", sc.id, r.instance);
            Ok(r)
        })
        .collect()
}

// ── Scaling ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    /// `est_slow_rate(B, n, δ/K, R_n)` with `R_n` the normalized class complexity bound.
    pub stat_bound: f64,
    pub realized_median: f64,
    pub eps_app_median: f64,
    /// Seeds with `max_k (ε_k − ε_app,k − ε_opt,k) ≤ stat_bound`.
    pub covered: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub slope_se: f64,
    pub spearman: f64,
    pub medians_nonincreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingOutcome {
    pub class: String,
    pub rows: Vec<ScalingRow>,
    pub fit: ScalingFit,
    pub reports: Vec<BoundReport>,
}

/// Class of the scaling study: the configured linear class, else the
/// tabular linear ball of radius `r_max/(1−γ) √|S×A|`.
pub fn scaling_class_config(cfg: &ExperimentConfig, mdp: &FiniteMdp) -> ClassConfig {
    match &cfg.class {
        Some(c @ ClassConfig::Linear { .. }) => c.clone(),
        _ => ClassConfig::Linear {
            features: FeatureKind::Tabular,
            degree: 1,
            weight_bound: mdp.r_max() / (1.0 - mdp.gamma()) * (mdp.n_pairs() as f64).sqrt(),
            clip: None,
        },
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Least-squares slope and its standard error.
pub fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let se = if x.len() > 2 { (ssr / (m - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, se)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation, average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let m = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / m, ry.iter().sum::<f64>() / m);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

pub fn scaling_study(cfg: &ExperimentConfig, sc: &Scenario, seed: u64) -> Result<ScalingOutcome> {
    let mdp = &sc.mdp;
    let floor = mdp.r_max() / (1.0 - mdp.gamma());
    let (class, clip) = scaling_class_config(cfg, mdp).build(mdp.n_states(), mdp.n_actions(), floor)?;
    let q0 = ParamQ::zero(class.clone(), clip)?;
    let k = cfg.k;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (gi, &n) in cfg.scaling.n_grid.iter().enumerate() {
        let st = FqiSettings { n, ..settings(cfg, clip) };
        let r_n = class_complexity_upper(&class, clip, n)? / n as f64;
        let stat_bound = est_slow_rate(clip, n, cfg.delta / k as f64, r_n)?;
        let stream = child_seed(seed, gi as u64);
        let per_seed: Vec<(f64, f64, f64)> = (0..cfg.scaling.seeds)
            .into_par_iter()
            .map(|s| -> Result<(f64, f64, f64)> {
                let trace = run_fqi_fresh(mdp, &class, &sc.mu, &st, &q0, child_seed(stream, s as u64))?;
                let realized = trace.rounds.iter().map(|r| r.eps_k).fold(0.0, f64::max);
                let app = trace.rounds.iter().map(|r| r.eps_app_k).fold(0.0, f64::max);
                let excess =
                    trace.rounds.iter().map(|r| r.eps_k - r.eps_app_k - r.eps_opt_k).fold(f64::NEG_INFINITY, f64::max);
                Ok((realized, app, excess))
            })
            .collect::<Result<_>>()?;
        let covered = per_seed.iter().filter(|p| p.2 <= stat_bound + EXACT_TOL).count();
        let seeds = per_seed.len();
        reports.push(rate_report(
            TheoremId::EstSlow,
            format!("{}/scaling/n={n}/coverage", sc.id),
            seeds - covered,
            seeds,
            cfg.delta,
            &(n, stat_bound, stream),
        ));
        let mut realized: Vec<f64> = per_seed.iter().map(|p| p.0).collect();
        let mut app: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
        rows.push(ScalingRow {
            n,
            stat_bound,
            realized_median: median(&mut realized),
            eps_app_median: median(&mut app),
            covered,
            seeds,
        });
    }
    let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.stat_bound.ln()).collect();
    let (slope, slope_se) = ols_slope(&lx, &ly);
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let meds: Vec<f64> = rows.iter().map(|r| r.realized_median).collect();
    let medians_nonincreasing = meds.windows(2).all(|w| w[1] <= w[0]);
    let fit = ScalingFit { slope, slope_se, spearman: spearman(&ns, &meds), medians_nonincreasing };
    Ok(ScalingOutcome { class: class.kind().to_string(), rows, fit, reports })
}

// ── Full suite ───────────────────────────────────────────────────────

/// Check groups in run order, with the theorem ids each group reports on.
pub const GROUPS: [(&str, &[TheoremId]); 10] = [
    ("contraction", &[TheoremId::Contraction]),
    ("dominance", &[TheoremId::PolicyIterDominance]),
    ("propagation", &[TheoremId::ErrPropGreedy, TheoremId::ErrPropMax]),
    ("concentrability", &[TheoremId::Concentrability]),
    ("mismatch", &[TheoremId::DistMismatch]),
    ("fresh", &[TheoremId::Decomp, TheoremId::FqiUnified, TheoremId::EstSlow]),
    ("complexity", &[TheoremId::SeqGen]),
    ("seq_gen", &[TheoremId::SeqGen]),
    ("adaptive", &[TheoremId::AdaptiveResidual, TheoremId::AdaptivePerf]),
    ("regret", &[TheoremId::RegretCert]),
];

/// Runs every enabled check group; reports come back in group order.
pub fn run_suite(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<BoundReport>> {
    let sc = cfg.scenario()?;
    let t = &cfg.trials;
    let mut out = Vec::new();
    for (gi, (name, ids)) in GROUPS.iter().enumerate() {
        if !ids.iter().any(|&id| cfg.checks_enabled(id)) {
            continue;
        }
        let s = child_seed(seed, gi as u64);
        let reports = match *name {
            "contraction" => contraction_reports(t.contraction, s, cfg.mutation.contraction_modulus_scale)?,
            "dominance" => dominance_reports(t.dominance, s)?,
            "propagation" => propagation_suite(t.propagation, s)?,
            "concentrability" => concentrability_suite(t.concentrability, s)?,
            "mismatch" => mismatch_suite(t.mismatch, s)?,
            "fresh" => fresh_suite(cfg, &sc, t.fresh_runs, s)?,
            "complexity" => complexity_suite(cfg, &sc, t.complexity_sequences, s)?,
            "seq_gen" => seq_gen_suite(cfg, &sc, t.seq_gen, s)?,
            "adaptive" => adaptive_suite(cfg, &sc, t.adaptive_runs, s)?,
            "regret" => regret_suite(t.regret, s)?,
            _ => unreachable!("group table is fixed"),
        };
        out.extend(reports.into_iter().filter(|r| cfg.checks_enabled(r.theorem)));
    }
    Ok(out)
}
