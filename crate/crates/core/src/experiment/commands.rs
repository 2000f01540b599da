use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ProtocolConfig};
use super::scenarios::Scenario;
use super::suite::{self, rate_report};
use crate::bounds::{
    adaptive_concentrability, adaptive_performance_components, component, concentrability_stabilized,
    dist_mismatch_components, est_slow_rate, fqi_unified_components, injected_residual_run, propagation_reports,
    regret_prefix_reports, value_gap_l1, write_reports_csv, BoundReport, InitGap, RoundTerms, TheoremId, EXACT_TOL,
};
use crate::classes::{residual_envelope, FunctionClass, ParamQ};
use crate::complexity::{
    alpha_prime, class_complexity_upper, finite_class_complexity_upper, residual_class_complexity_upper,
    sequential_rademacher_search, LinearBall, RkhsBall, SearchResult,
};
use crate::error::{Error, Result};
use crate::fqi::{decomposition_report, run_fqi_adaptive, run_fqi_fresh, write_trace_csv, FqiTrace};
use crate::mdp::{optimal_solution, value_iteration, value_iteration_sequence, QTable, SaDistribution};
use crate::seeding::{child_rng, child_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Fqi,
    Complexity,
    Bounds,
    Scaling,
    Verify,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Fqi => "fqi",
            Command::Complexity => "complexity",
            Command::Bounds => "bounds",
            Command::Scaling => "scaling",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommandOutcome {
    pub command: Command,
    pub reports: Vec<BoundReport>,
    /// Files written, relative to the output directory, in write order.
    pub files: Vec<String>,
}

impl CommandOutcome {
    /// Theorem ids with at least one hard failure, in canonical order.
    pub fn hard_failures(&self) -> Vec<TheoremId> {
        TheoremId::ALL
            .into_iter()
            .filter(|id| self.reports.iter().any(|r| r.theorem == *id && r.hard_failure()))
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.hard_failures().is_empty()
    }
}

#[derive(Serialize)]
struct TheoremRecord {
    theorem: &'static str,
    status: &'static str,
    reports: usize,
    passed: usize,
    failed: usize,
    advisory: usize,
    /// Smallest `bound + tol − realized` among gating reports.
    worst_margin: Option<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    config_digest: String,
    scenario: &'a str,
    seeds: &'a [u64],
    theorems: Vec<TheoremRecord>,
    hard_failures: Vec<&'static str>,
    files: &'a [String],
}

fn theorem_records(reports: &[BoundReport]) -> Vec<TheoremRecord> {
    TheoremId::ALL
        .into_iter()
        .map(|id| {
            let mine: Vec<&BoundReport> = reports.iter().filter(|r| r.theorem == id).collect();
            let failed = mine.iter().filter(|r| r.hard_failure()).count();
            let advisory = mine.iter().filter(|r| r.advisory).count();
            let worst_margin = mine.iter().filter(|r| !r.advisory).map(|r| r.margin()).reduce(f64::min);
            let status = if mine.is_empty() {
                "not_run"
            } else if failed > 0 {
                "fail"
            } else {
                "pass"
            };
            TheoremRecord {
                theorem: id.as_str(),
                status,
                reports: mine.len(),
                passed: mine.iter().filter(|r| r.pass).count(),
                failed,
                advisory,
                worst_margin,
            }
        })
        .collect()
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Runs one command, writing its artifacts plus `reports.csv` and
/// `summary.json` under `out_dir`. `jobs` sizes the worker pool.
pub fn run_command(cmd: Command, cfg: &ExperimentConfig, out_dir: &Path, jobs: Option<usize>) -> Result<CommandOutcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs:?} workers: {e}")))?;
    pool.install(|| run_inner(cmd, cfg, out_dir))
}

fn run_inner(cmd: Command, cfg: &ExperimentConfig, out_dir: &Path) -> Result<CommandOutcome> {
    let sc = cfg.scenario()?;
    let mut out = Output::new(out_dir)?;
    let reports = match cmd {
        Command::Solve => cmd_solve(cfg, &sc, &mut out)?,
        Command::Fqi => cmd_fqi(cfg, &sc, &mut out)?,
        Command::Complexity => cmd_complexity(cfg, &sc, &mut out)?,
        Command::Bounds => cmd_bounds(cfg, &sc, &mut out)?,
        Command::Scaling => cmd_scaling(cfg, &sc, &mut out)?,
        Command::Verify => suite::run_suite(cfg, cfg.seeds[0])?,
    };
    out.write("reports.csv", |w| write_reports_csv(&reports, w))?;
    let mut files = out.files.clone();
    files.push("summary.json".into());
    let records = theorem_records(&reports);
    let hard: Vec<&'static str> = records.iter().filter(|r| r.failed > 0).map(|r| r.theorem).collect();
    let summary = Summary {
        command: cmd.as_str(),
        config_digest: cfg.digest(),
        scenario: &sc.id,
        seeds: &cfg.seeds,
        theorems: records,
        hard_failures: hard,
        files: &files,
    };
    out.write("summary.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &summary).map_err(|e| Error::Io(e.into()))?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(CommandOutcome { command: cmd, reports, files: out.files })
}

// ── solve ────────────────────────────────────────────────────────────

fn cmd_solve(_cfg: &ExperimentConfig, sc: &Scenario, out: &mut Output) -> Result<Vec<BoundReport>> {
    let mdp = &sc.mdp;
    let sol = optimal_solution(mdp)?;
    out.write("mdp.txt", |w| crate::mdp::write_mdp(mdp, w))?;
    out.write("q_star.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["s", "a", "q_star"]).map_err(csv_io)?;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                c.write_record([s.to_string(), a.to_string(), num(sol.q_star.get(s, a))]).map_err(csv_io)?;
            }
        }
        c.flush()?;
        Ok(())
    })?;
    out.write("v_star.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["s", "v_star", "action"]).map_err(csv_io)?;
        for s in 0..mdp.n_states() {
            c.write_record([s.to_string(), num(sol.v_star[s]), sol.policy.action(s).to_string()]).map_err(csv_io)?;
        }
        c.flush()?;
        Ok(())
    })?;
    let (q_vi, _) = value_iteration(mdp, &QTable::zeros(mdp.n_states(), mdp.n_actions()), 1e-12)?;
    Ok(vec![BoundReport::new(
        TheoremId::PolicyIterDominance,
        format!("{}/value_iteration_matches_exact_solve", sc.id),
        q_vi.sub(&sol.q_star).sup_norm(),
        vec![component("exact", 0.0)],
        EXACT_TOL,
        mdp,
    )])
}

// ── fqi ──────────────────────────────────────────────────────────────

fn cmd_fqi(cfg: &ExperimentConfig, sc: &Scenario, out: &mut Output) -> Result<Vec<BoundReport>> {
    let class_cfg = cfg.require_class()?;
    let mdp = &sc.mdp;
    let floor = mdp.r_max() / (1.0 - mdp.gamma());
    let (class, clip) = class_cfg.build(mdp.n_states(), mdp.n_actions(), floor)?;
    let st = suite::settings(cfg, clip);
    let q0 = ParamQ::zero(class.clone(), clip)?;
    let behavior = cfg.behavior.build(&sc.mu)?;
    behavior.validate(mdp)?;
    let sol = optimal_solution(mdp)?;
    let c_fresh = concentrability_stabilized(mdp, &sc.rho, &sc.mu, 400)?.c_upper;
    let gamma = mdp.gamma();
    let k = cfg.k;

    let traces: Vec<FqiTrace> = cfg
        .seeds
        .par_iter()
        .map(|&seed| match cfg.protocol {
            ProtocolConfig::Fresh => run_fqi_fresh(mdp, &class, &sc.mu, &st, &q0, seed),
            ProtocolConfig::Adaptive => run_fqi_adaptive(mdp, &class, &behavior, &st, &q0, seed),
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::new();
    for trace in &traces {
        out.write(&format!("trace_seed{}.csv", trace.seed), |w| write_trace_csv(trace, w))?;
        let tag = format!("{}/{}/seed={}", sc.id, class.kind(), trace.seed);
        for r in &trace.rounds {
            reports.push(
                BoundReport::new(
                    TheoremId::AdaptiveResidual,
                    format!("{tag}/round={}", r.k),
                    r.eps_k,
                    vec![
                        component("eps_app", r.eps_app_k),
                        component("sqrt(2alpha')", (2.0 * r.alpha_prime).sqrt()),
                        component("eps_opt", r.eps_opt_k),
                    ],
                    EXACT_TOL,
                    &(trace.seed, &r.labels_digest),
                )
                .advisory(),
            );
        }
        let gap = value_gap_l1(mdp, &sc.rho, &sol.v_star, &trace.final_policy())?;
        let max_eps = trace.rounds.iter().map(|r| r.eps_k).fold(0.0, f64::max);
        match cfg.protocol {
            ProtocolConfig::Fresh => {
                if class.is_convex() {
                    for kk in 0..k {
                        let d = decomposition_report(mdp, trace, kk)?;
                        reports.push(BoundReport::new(
                            TheoremId::Decomp,
                            format!("{tag}/round={kk}/identity"),
                            d.identity_error,
                            vec![component("exact", 0.0)],
                            EXACT_TOL,
                            &(trace.seed, kk),
                        ));
                    }
                }
                reports.push(BoundReport::new(
                    TheoremId::FqiUnified,
                    format!("{tag}/realized_residual_plugin"),
                    gap,
                    fqi_unified_components(c_fresh, gamma, k, max_eps, 0.0, clip)?,
                    EXACT_TOL,
                    &(trace.seed, c_fresh, max_eps),
                ));
            }
            ProtocolConfig::Adaptive => {
                let designs: Vec<SaDistribution> = trace.rounds.iter().map(|r| r.design.clone()).collect();
                let horizon = crate::bounds::concentrability::default_horizon(gamma);
                let cad = adaptive_concentrability(mdp, &sc.rho, &sol.q_star, &trace.tables, &designs, horizon)?;
                let terms: Vec<RoundTerms> = trace
                    .rounds
                    .iter()
                    .map(|r| RoundTerms { eps_app: r.eps_app_k, alpha_prime: r.alpha_prime, eps_opt: r.eps_opt_k })
                    .collect();
                reports.push(
                    BoundReport::new(
                        TheoremId::AdaptivePerf,
                        format!("{tag}/c_ad_bound/v_loss_family"),
                        gap,
                        adaptive_performance_components(cad.c_ad, gamma, k, &terms, clip)?,
                        EXACT_TOL,
                        &(trace.seed, &cad),
                    )
                    .advisory(),
                );
                reports.push(BoundReport::new(
                    TheoremId::AdaptivePerf,
                    format!("{tag}/certified_plugin"),
                    gap,
                    fqi_unified_components(cad.certified_upper, gamma, k, max_eps, 0.0, clip)?,
                    EXACT_TOL,
                    &(trace.seed, &cad),
                ));
            }
        }
    }
    let violations = traces.iter().filter(|t| !t.all_pass()).count();
    reports.push(rate_report(
        TheoremId::AdaptiveResidual,
        format!("{}/{}/any_round_rate/runs={}", sc.id, class.kind(), traces.len()),
        violations,
        traces.len(),
        cfg.delta,
        &cfg.seeds,
    ));
    Ok(reports)
}

// ── complexity ───────────────────────────────────────────────────────

/// Deepest tree searched for the configured class.
const CLASS_SEARCH_DEPTH: usize = 10;

fn class_search(class: &FunctionClass, depth: usize, seed: u64, cfg: &ExperimentConfig) -> Result<Option<SearchResult>> {
    let cands: Vec<usize> = (0..class.n_pairs()).collect();
    Ok(match class {
        FunctionClass::Linear(c) => {
            if !c.weight_bound().is_finite() {
                return Ok(None);
            }
            let feats = cands.iter().map(|&p| c.features().vector(p)).collect();
            let ball = LinearBall::new(feats, c.weight_bound())?;
            Some(sequential_rademacher_search(&ball, &cands, depth, cfg.search, seed)?)
        }
        FunctionClass::Rkhs(c) => {
            let ball = RkhsBall::new(c.gram_of(&cands), c.norm_bound())?;
            Some(sequential_rademacher_search(&ball, &cands, depth, cfg.search, seed)?)
        }
        FunctionClass::Neural(_) => None,
    })
}

fn cmd_complexity(cfg: &ExperimentConfig, sc: &Scenario, out: &mut Output) -> Result<Vec<BoundReport>> {
    let mdp = &sc.mdp;
    let (class, clip) = suite::build_class(cfg, mdp)?;
    let seed = cfg.seeds[0];
    let mut reports = suite::complexity_suite(cfg, sc, cfg.trials.complexity_sequences, child_seed(seed, 0))?;

    let depth = cfg.n.min(CLASS_SEARCH_DEPTH);
    if let Some(found) = class_search(&class, depth, child_seed(seed, 1), cfg)? {
        let upper = class.closed_form_complexity_bound(depth)?;
        reports.push(BoundReport::new(
            TheoremId::SeqGen,
            format!("{}/{}/searched_tree/depth={depth}", sc.id, class.kind()),
            found.value,
            vec![component("closed_form", upper)],
            EXACT_TOL,
            &(&found.tree, depth),
        ));
        out.write("best_tree.txt", |w| {
            found.tree.dump(w, |p| {
                let (s, a) = mdp.unpair(p);
                format!("s={s} a={a}")
            })
        })?;
    }

    let n = cfg.n;
    let k = cfg.k;
    let b_res = residual_envelope(mdp.r_max(), mdp.gamma(), clip);
    let f_upper = class_complexity_upper(&class, clip, n)?;
    let g_upper = residual_class_complexity_upper(f_upper, mdp.gamma(), clip, mdp.n_states(), n);
    let ap = alpha_prime(b_res, n, cfg.delta / k as f64, g_upper)?;
    let est = est_slow_rate(clip, n, cfg.delta / k as f64, f_upper / n as f64)?;
    let rows: Vec<(&str, &str, f64)> = vec![
        ("clip", "B", clip),
        ("b_res", "r_max+(1+gamma)B", b_res),
        ("rseq_class_upper", "unnormalized", f_upper),
        ("rseq_residual_upper", "unnormalized", g_upper),
        ("alpha_prime", "delta/K, divides by n", ap),
        ("sqrt(2alpha_prime)", "delta/K", (2.0 * ap).sqrt()),
        ("est_slow", "delta/K, R_n normalized by n", est),
        ("finite_32_member_loss_upper", "unnormalized", finite_class_complexity_upper(32 * 32, b_res * b_res, n)),
    ];
    out.write("complexity.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["quantity", "convention", "value", "n", "delta", "K"]).map_err(csv_io)?;
        for (q, conv, v) in &rows {
            c.write_record([q.to_string(), conv.to_string(), num(*v), n.to_string(), num(cfg.delta), k.to_string()])
                .map_err(csv_io)?;
        }
        c.flush()?;
        Ok(())
    })?;
    Ok(reports)
}

// ── bounds ───────────────────────────────────────────────────────────

fn cmd_bounds(cfg: &ExperimentConfig, sc: &Scenario, out: &mut Output) -> Result<Vec<BoundReport>> {
    let mdp = &sc.mdp;
    let seed = cfg.seeds[0];
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let sol = optimal_solution(mdp)?;
    let conc = concentrability_stabilized(mdp, &sc.rho, &sc.mu, 400)?;
    out.write("concentrability.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["t", "s", "max_mass"]).map_err(csv_io)?;
        for (t, row) in conc.max_mass.iter().enumerate() {
            for (s, m) in row.iter().enumerate() {
                c.write_record([t.to_string(), s.to_string(), num(*m)]).map_err(csv_io)?;
            }
        }
        c.flush()?;
        Ok(())
    })?;
    let mut reports =
        suite::concentrability_instance_reports(&sc.id, mdp, &sc.rho, &sc.mu, suite::ORACLE_T_MAX)?;

    let mut rng = child_rng(seed, 0);
    let k = cfg.k;
    let mut rows = Vec::new();
    for eps in [0.01, 0.1] {
        let q0 = QTable::zeros(ns, na);
        let residuals = suite::residuals_at_level(&mut rng, &sc.mu, k, eps);
        let iterates = injected_residual_run(mdp, &q0, &residuals)?;
        let tag = format!("{}/injected/eps={eps}", sc.id);
        reports.extend(propagation_reports(mdp, &sol.q_star, &iterates, &residuals, &tag)?);
        let realized = value_gap_l1(mdp, &sc.rho, &sol.v_star, &crate::mdp::greedy_policy(&iterates[k]))?;
        let init = sc.mu.l2_norm(&q0.sub(&sol.q_star));
        let r = BoundReport::new(
            TheoremId::DistMismatch,
            tag,
            realized,
            dist_mismatch_components(conc.c_upper, gamma, k, eps, InitGap::L2(init))?,
            EXACT_TOL,
            &(&residuals, conc.c_upper),
        );
        rows.push((eps, realized, r.bound));
        reports.push(r);
    }
    out.write("mismatch.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["eps", "C_upper", "realized_l1_gap", "bound"]).map_err(csv_io)?;
        for (eps, realized, bound) in &rows {
            c.write_record([num(*eps), num(conc.c_upper), num(*realized), num(*bound)]).map_err(csv_io)?;
        }
        c.flush()?;
        Ok(())
    })?;

    let q0 = QTable::zeros(ns, na);
    let iterates = value_iteration_sequence(mdp, &q0, 49)?;
    let states: Vec<usize> = (0..iterates.len()).map(|_| rng.gen_range(0..ns)).collect();
    reports.extend(regret_prefix_reports(mdp, &sol.v_star, &iterates, &states, &format!("{}/value_iteration", sc.id))?);
    Ok(reports)
}

// ── scaling ──────────────────────────────────────────────────────────

fn cmd_scaling(cfg: &ExperimentConfig, sc: &Scenario, out: &mut Output) -> Result<Vec<BoundReport>> {
    let outcome = suite::scaling_study(cfg, sc, cfg.seeds[0])?;
    out.write("scaling.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["n", "stat_bound_term", "realized_residual_median", "eps_app_median", "covered", "seeds"])
            .map_err(csv_io)?;
        for r in &outcome.rows {
            c.write_record([
                r.n.to_string(),
                num(r.stat_bound),
                num(r.realized_median),
                num(r.eps_app_median),
                r.covered.to_string(),
                r.seeds.to_string(),
            ])
            .map_err(csv_io)?;
        }
        c.flush()?;
        Ok(())
    })?;
    let f = &outcome.fit;
    out.write("scaling_fit.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["class", "slope", "slope_se", "spearman", "medians_nonincreasing"]).map_err(csv_io)?;
        c.write_record([
            outcome.class.clone(),
            num(f.slope),
            num(f.slope_se),
            num(f.spearman),
            f.medians_nonincreasing.to_string(),
        ])
        .map_err(csv_io)?;
        c.flush()?;
        Ok(())
    })?;
    let mut reports = outcome.reports.clone();
    reports.push(BoundReport::new(
        TheoremId::EstSlow,
        format!("{}/scaling/slope_near_-1/4", sc.id),
        (f.slope + 0.25).abs(),
        vec![component("half_width", 0.05)],
        0.0,
        &outcome.rows,
    ));
    reports.push(
        BoundReport::new(
            TheoremId::EstSlow,
            format!("{}/scaling/median_spearman", sc.id),
            f.spearman,
            vec![component("nonpositive", 0.0)],
            0.0,
            &outcome.rows,
        )
        .advisory(),
    );
    Ok(reports)
}
