//! Acceptance criteria, one PASS/FAIL line each.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use fqi_lab::bounds::{BoundReport, TheoremId};
use fqi_lab::experiment::suite::{
    adaptive_suite, complexity_suite, concentrability_suite, contraction_reports, dominance_reports, mismatch_suite,
    propagation_suite, regret_suite, scaling_study, seq_gen_suite,
};
use fqi_lab::experiment::{run_command, scenario, Command, ExperimentConfig};

const SEED: u64 = 20_241_014;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    elapsed: Duration,
    limit: Duration,
    detail: String,
}

fn summarize(reports: &[BoundReport]) -> (bool, String) {
    let gating: Vec<&BoundReport> = reports.iter().filter(|r| !r.advisory).collect();
    let failed: Vec<&BoundReport> = gating.iter().copied().filter(|r| !r.pass).collect();
    let worst = gating.iter().map(|r| r.margin()).fold(f64::INFINITY, f64::min);
    let mut detail = format!("{} reports, {} failed, worst margin {worst:.3e}", gating.len(), failed.len());
    if let Some(f) = failed.first() {
        detail.push_str(&format!("; first failure {} realized {:.6e} bound {:.6e}", f.instance, f.realized, f.bound));
    }
    (!gating.is_empty() && failed.is_empty(), detail)
}

fn run(id: usize, name: &'static str, limit_secs: u64, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t = Instant::now();
    let (pass, detail) = f();
    let elapsed = t.elapsed();
    let limit = Duration::from_secs(limit_secs);
    Outcome { id, name, pass: pass && elapsed < limit, elapsed, limit, detail }
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn two_room_cfg(n: usize, k: usize, delta: f64) -> ExperimentConfig {
    ExperimentConfig { n, k, delta, ..ExperimentConfig::default() }
}

#[test]
fn acceptance() {
    let two_room = scenario("two_room").unwrap();
    let mut out = Vec::new();

    out.push(run(1, "contraction suite", 10, || summarize(&contraction_reports(1000, SEED, 1.0).unwrap())));

    out.push(run(2, "policy-iteration dominance", 30, || summarize(&dominance_reports(100, SEED + 1).unwrap())));

    out.push(run(3, "error propagation", 30, || summarize(&propagation_suite(40, SEED + 2).unwrap())));

    out.push(run(4, "concentrability oracle", 60, || summarize(&concentrability_suite(50, SEED + 3).unwrap())));

    out.push(run(5, "distribution-mismatch bound", 60, || summarize(&mismatch_suite(20, SEED + 4).unwrap())));

    out.push(run(6, "sequential Rademacher identities", 60, || {
        let cfg = ExperimentConfig::default();
        let reps = complexity_suite(&cfg, &two_room, 50, SEED + 5).unwrap();
        let identities: Vec<BoundReport> = reps
            .into_iter()
            .filter(|r| {
                r.instance.contains("constant_tree_equals_classical")
                    || r.instance.contains("pm_constant")
                    || r.instance.contains("below_closed_form")
            })
            .collect();
        summarize(&identities)
    }));

    out.push(run(7, "sequential generalization", 300, || {
        let cfg = two_room_cfg(64, 5, 0.1);
        summarize(&seq_gen_suite(&cfg, &two_room, 2000, SEED + 6).unwrap())
    }));

    let mut adaptive = Vec::new();
    out.push(run(8, "adaptive residual bound", 300, || {
        let cfg = two_room_cfg(64, 5, 0.2);
        adaptive = adaptive_suite(&cfg, &two_room, 500, SEED + 7).unwrap();
        let reps: Vec<BoundReport> =
            adaptive.iter().filter(|r| r.theorem == TheoremId::AdaptiveResidual).cloned().collect();
        let (pass, detail) = summarize(&reps);
        let rates: Vec<String> = reps
            .iter()
            .filter(|r| r.instance.contains("_rate"))
            .map(|r| format!("{} {:.4} <= {:.4}", r.instance, r.realized, r.bound))
            .collect();
        (pass, format!("{detail}; {}", rates.join("; ")))
    }));
    out.push(run(9, "adaptive performance bound (same campaign)", 300, || {
        let reps: Vec<BoundReport> = adaptive.iter().filter(|r| r.theorem == TheoremId::AdaptivePerf).cloned().collect();
        let (pass, detail) = summarize(&reps);
        let iid = reps.iter().find(|r| r.instance.ends_with("matches_fqi_unified")).map(|r| r.realized);
        (pass && iid.is_some_and(|g| g <= 1e-12), format!("{detail}; iid gap {iid:?}"))
    }));

    out.push(run(10, "regret certificate", 10, || summarize(&regret_suite(20, SEED + 8).unwrap())));

    out.push(run(11, "scaling study", 600, || {
        let cfg = ExperimentConfig::default();
        let s = scaling_study(&cfg, &two_room, SEED + 9).unwrap();
        let meds: Vec<String> = s.rows.iter().map(|r| format!("{}:{:.4}", r.n, r.realized_median)).collect();
        let pass = (-0.30..=-0.20).contains(&s.fit.slope) && s.fit.medians_nonincreasing;
        (pass, format!("class {} slope {:.4}, medians {}", s.class, s.fit.slope, meds.join(" ")))
    }));

    out.push(run(12, "verify determinism", 600, || {
        let cfg = ExperimentConfig::default();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_command(Command::Verify, &cfg, a.path(), None).unwrap();
        run_command(Command::Verify, &cfg, b.path(), Some(2)).unwrap();
        let (fa, fb) = (read_dir(a.path()), read_dir(b.path()));
        let same = !fa.is_empty() && fa == fb;
        (same, format!("{} files compared, identical = {same}", fa.len()))
    }));

    for o in &out {
        println!(
            "{} criterion {:>2} {}: {} ({:.1}s of {}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail,
            o.elapsed.as_secs_f64(),
            o.limit.as_secs()
        );
    }
    let failed: Vec<usize> = out.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
