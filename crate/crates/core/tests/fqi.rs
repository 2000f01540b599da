use std::sync::Arc;

use fqi_lab::batch::{ActionRule, Behavior, BehaviorRule, Protocol, StateRule, TransitionBatch};
use fqi_lab::classes::{FeatureMap, FunctionClass, LinearClass, OptBudget, ParamQ};
use fqi_lab::fqi::{
    bellman_labels, decomposition_report, diagonal_residual, residual_l2, run_fqi_adaptive, run_fqi_fresh,
    write_trace_csv, FqiSettings,
};
use fqi_lab::mdp::random::{random_deterministic_mdp, random_mdp, random_qtable, random_sa_dist};
use fqi_lab::mdp::{
    bellman_optimality, optimal_solution, value_iteration_sequence, FiniteMdp, QTable, SaDistribution, StateDist,
    Transition,
};
use fqi_lab::seeding::rng;
use fqi_lab::{Error, Result};
use rand::Rng;

/// Visits every pair in turn, independent of the iterate.
struct RoundRobin;

impl Behavior for RoundRobin {
    fn id(&self) -> String {
        "round_robin".into()
    }
    fn conditional_law(&self, mdp: &FiniteMdp, _q: &QTable, prefix: &[Transition]) -> Result<Vec<f64>> {
        let mut law = vec![0.0; mdp.n_pairs()];
        law[prefix.len() % mdp.n_pairs()] = 1.0;
        Ok(law)
    }
}

fn tabular(ns: usize, na: usize) -> Arc<FunctionClass> {
    Arc::new(FunctionClass::Linear(LinearClass::tabular(ns, na, f64::INFINITY).unwrap()))
}

fn poly(ns: usize, na: usize, w: f64) -> Arc<FunctionClass> {
    let f = FeatureMap::polynomial_actions(ns, na, 1).unwrap();
    Arc::new(FunctionClass::Linear(LinearClass::new(f, w).unwrap()))
}

fn settings(mdp: &FiniteMdp, n: usize, rounds: usize) -> FqiSettings {
    FqiSettings { n, rounds, delta: 0.1, clip: mdp.r_max() / (1.0 - mdp.gamma()), budget: OptBudget::default() }
}

fn batch(transitions: Vec<Transition>) -> TransitionBatch {
    TransitionBatch { transitions, protocol: Protocol::Fresh, behavior: "test".into(), round: 0, seed: 0 }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

#[test]
fn labels_examples() {
    let mut r = rng(51);
    let mdp = random_mdp(&mut r, 3, 2, 0.9);
    let ts: Vec<Transition> = (0..20)
        .map(|_| {
            let (s, a, s_next) = (r.gen_range(0..3), r.gen_range(0..2), r.gen_range(0..3));
            Transition { s, a, r: mdp.reward(s, a), s_next }
        })
        .collect();
    let b = batch(ts.clone());
    let zero = bellman_labels(&QTable::zeros(3, 2), &b, 0.9).unwrap();
    assert!(zero.iter().zip(&ts).all(|(y, t)| *y == t.r));
    let q = random_qtable(&mut r, 3, 2, 10.0);
    let myopic = bellman_labels(&q, &b, 0.0).unwrap();
    assert!(myopic.iter().zip(&ts).all(|(y, t)| *y == t.r));
    let b_clip = 10.0;
    let y = bellman_labels(&q, &b, 0.9).unwrap();
    assert!(y.iter().all(|v| v.abs() <= mdp.r_max() + 0.9 * b_clip));
    assert!(bellman_labels(&q, &batch(vec![]), 0.9).is_err());
}

#[test]
fn residual_l2_examples() {
    let mut r = rng(52);
    let mdp = random_mdp(&mut r, 4, 2, 0.8);
    let q = random_qtable(&mut r, 4, 2, 3.0);
    let target = bellman_optimality(&mdp, &q).unwrap();
    let mu = random_sa_dist(&mut r, 4, 2);
    assert_eq!(residual_l2(&target, &q, &mdp, &mu).unwrap(), 0.0);
    let other = random_qtable(&mut r, 4, 2, 3.0);
    let point = SaDistribution::point(4, 2, 2, 1);
    let got = residual_l2(&other, &q, &mdp, &point).unwrap();
    assert!((got - (other.get(2, 1) - target.get(2, 1)).abs()).abs() < 1e-12);
    let mut acc = 0.0;
    for s in 0..4 {
        for a in 0..2 {
            acc += mu.mass(s, a) * (other.get(s, a) - target.get(s, a)).powi(2);
        }
    }
    assert!((residual_l2(&other, &q, &mdp, &mu).unwrap() - acc.sqrt()).abs() < 1e-12);
}

#[test]
fn diagonal_residual_examples() {
    let one = FiniteMdp::new(1, 1, vec![1.0], vec![1.0], 0.5, 1.0).unwrap();
    assert_eq!(diagonal_residual(&QTable::zeros(1, 1), &one).unwrap(), 1.0);
    let mut r = rng(53);
    let mdp = random_mdp(&mut r, 5, 3, 0.9);
    let q_star = optimal_solution(&mdp).unwrap().q_star;
    assert!(diagonal_residual(&q_star, &mdp).unwrap() < 1e-9);
    let seq = value_iteration_sequence(&mdp, &random_qtable(&mut r, 5, 3, 5.0), 30).unwrap();
    let d: Vec<f64> = seq.iter().map(|q| diagonal_residual(q, &mdp).unwrap()).collect();
    for w in d.windows(2) {
        assert!(w[1] <= 0.9 * w[0] + 1e-9);
    }
}

#[test]
fn tabular_deterministic_run_is_value_iteration() {
    let mut r = rng(54);
    let mdp = random_deterministic_mdp(&mut r, 4, 2, 0.9);
    let class = tabular(4, 2);
    let cfg = settings(&mdp, 16, 8);
    let q0 = ParamQ::zero(class.clone(), cfg.clip).unwrap();
    let trace = run_fqi_adaptive(&mdp, &class, &RoundRobin, &cfg, &q0, 3).unwrap();
    let vi = value_iteration_sequence(&mdp, &QTable::zeros(4, 2), 8).unwrap();
    for rec in &trace.rounds {
        assert!(rec.eps_k < 1e-12, "round {} eps {}", rec.k, rec.eps_k);
        assert!(rec.eps_app_k < 1e-12);
        assert!(rec.pass);
        assert!((rec.design.total() - 1.0).abs() < 1e-12);
    }
    assert!(trace.final_table().sub(&vi[8]).sup_norm() < 1e-12);
}

#[test]
fn myopic_rich_class_has_zero_residual() {
    let mut r = rng(55);
    let mdp = random_mdp(&mut r, 3, 2, 0.0);
    let class = tabular(3, 2);
    let cfg = settings(&mdp, 200, 3);
    let q0 = ParamQ::zero(class.clone(), cfg.clip).unwrap();
    let trace = run_fqi_fresh(&mdp, &class, &SaDistribution::uniform(3, 2), &cfg, &q0, 9).unwrap();
    for rec in &trace.rounds {
        assert!(rec.eps_k < 1e-12 && rec.eps_app_k < 1e-12);
    }
    let rewards = QTable::from_vec(3, 2, mdp.rewards().to_vec()).unwrap();
    assert!(trace.tables[1].sub(&rewards).sup_norm() < 1e-12);
}

#[test]
fn more_data_does_not_raise_median_residual() {
    let mut r = rng(56);
    let mdp = random_mdp(&mut r, 6, 2, 0.8);
    let class = poly(6, 2, 1e3);
    let mu = SaDistribution::uniform(6, 2);
    let eps_at = |n: usize| {
        let cfg = settings(&mdp, n, 3);
        let q0 = ParamQ::zero(class.clone(), cfg.clip).unwrap();
        median(
            (0..20)
                .map(|seed| {
                    let t = run_fqi_fresh(&mdp, &class, &mu, &cfg, &q0, seed).unwrap();
                    t.rounds.iter().map(|x| x.eps_k).sum::<f64>() / 3.0
                })
                .collect(),
        )
    };
    assert!(eps_at(100) <= eps_at(50));
}

#[test]
fn runs_are_deterministic_and_validated() {
    let mut r = rng(57);
    let mdp = random_mdp(&mut r, 4, 2, 0.9);
    let class = poly(4, 2, 20.0);
    let cfg = settings(&mdp, 30, 4);
    let q0 = ParamQ::zero(class.clone(), cfg.clip).unwrap();
    let mu = SaDistribution::uniform(4, 2);
    let a = run_fqi_fresh(&mdp, &class, &mu, &cfg, &q0, 77).unwrap();
    let b = run_fqi_fresh(&mdp, &class, &mu, &cfg, &q0, 77).unwrap();
    assert_eq!(a.rounds, b.rounds);
    assert_eq!(a.tables, b.tables);
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    write_trace_csv(&a, &mut csv_a).unwrap();
    write_trace_csv(&b, &mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
    assert!(String::from_utf8(csv_a).unwrap().starts_with("k,loss,eps_k,eps_app_k,eps_opt_k,diag_residual,alpha_prime,bound_rhs,pass"));

    assert!(run_fqi_fresh(&mdp, &class, &SaDistribution::uniform(3, 2), &cfg, &q0, 1).is_err());
    let zero_rounds = FqiSettings { rounds: 0, ..cfg.clone() };
    assert!(run_fqi_fresh(&mdp, &class, &mu, &zero_rounds, &q0, 1).is_err());
    let low_clip = FqiSettings { clip: 1.0, ..cfg.clone() };
    assert!(run_fqi_fresh(&mdp, &class, &mu, &low_clip, &q0, 1).is_err());
}

#[test]
fn fixed_behavior_reproduces_fresh_draws() {
    let mut r = rng(58);
    let mdp = random_mdp(&mut r, 4, 2, 0.9);
    let class = poly(4, 2, 20.0);
    let cfg = settings(&mdp, 40, 5);
    let q0 = ParamQ::zero(class.clone(), cfg.clip).unwrap();
    let mu = random_sa_dist(&mut r, 4, 2);
    let fresh = run_fqi_fresh(&mdp, &class, &mu, &cfg, &q0, 5).unwrap();
    let adaptive = run_fqi_adaptive(&mdp, &class, &BehaviorRule::Fixed { mu: mu.clone() }, &cfg, &q0, 5).unwrap();
    for (f, a) in fresh.batches.iter().zip(&adaptive.batches) {
        assert_eq!(f.transitions, a.transitions);
    }
    assert_eq!(fresh.tables, adaptive.tables);
    for (f, a) in fresh.rounds.iter().zip(&adaptive.rounds) {
        assert!((f.eps_k - a.eps_k).abs() < 1e-12);
        assert!(f.design.masses().iter().zip(a.design.masses()).all(|(x, y)| (x - y).abs() < 1e-15));
    }
}

#[test]
fn eps_greedy_designs_are_distributions() {
    let mut r = rng(59);
    let mdp = random_mdp(&mut r, 4, 2, 0.9);
    let class = poly(4, 2, 20.0);
    let cfg = settings(&mdp, 50, 6);
    let q0 = ParamQ::zero(class.clone(), cfg.clip).unwrap();
    let behavior = BehaviorRule::Policy {
        action: ActionRule::EpsGreedy { eps: 0.3 },
        states: StateRule::Trajectory { reset_prob: 0.2, reset: StateDist::uniform(4) },
    };
    let trace = run_fqi_adaptive(&mdp, &class, &behavior, &cfg, &q0, 11).unwrap();
    for rec in &trace.rounds {
        assert!((rec.design.total() - 1.0).abs() < 1e-12);
        assert!(rec.design.masses().iter().all(|&m| m >= 0.0));
    }
    assert_eq!(trace.protocol, Protocol::Adaptive);
}

#[test]
fn decomposition_identity_and_degenerate_terms() {
    let mut r = rng(60);
    let stochastic = random_mdp(&mut r, 5, 2, 0.9);
    let class = poly(5, 2, 30.0);
    let cfg = settings(&stochastic, 40, 4);
    let q0 = ParamQ::zero(class.clone(), cfg.clip).unwrap();
    let mu = SaDistribution::uniform(5, 2);
    let trace = run_fqi_fresh(&stochastic, &class, &mu, &cfg, &q0, 2).unwrap();
    for k in 0..4 {
        let d = decomposition_report(&stochastic, &trace, k).unwrap();
        assert!(d.identity_error <= 1e-9);
    }

    let det = random_deterministic_mdp(&mut r, 5, 2, 0.9);
    let trace = run_fqi_fresh(&det, &class, &mu, &cfg, &q0, 3).unwrap();
    for k in 0..4 {
        let d = decomposition_report(&det, &trace, k).unwrap();
        assert!(d.est_noise.sup_norm() < 1e-9);
    }

    let tab = tabular(5, 2);
    let q0t = ParamQ::zero(tab.clone(), cfg.clip).unwrap();
    let trace = run_fqi_fresh(&stochastic, &tab, &mu, &cfg, &q0t, 4).unwrap();
    for k in 0..4 {
        let d = decomposition_report(&stochastic, &trace, k).unwrap();
        assert!(d.approx.sup_norm() < 1e-9);
        assert!(d.identity_error <= 1e-9);
    }

    let adaptive = run_fqi_adaptive(&stochastic, &class, &BehaviorRule::Fixed { mu }, &cfg, &q0, 2).unwrap();
    assert!(matches!(decomposition_report(&stochastic, &adaptive, 0), Err(Error::Unsupported(_))));
}

#[test]
fn design_error_shrinks_with_n() {
    let mut r = rng(61);
    let mdp = random_mdp(&mut r, 6, 2, 0.8);
    let class = poly(6, 2, 1e3);
    let mu = SaDistribution::uniform(6, 2);
    let at = |n: usize| {
        let cfg = settings(&mdp, n, 1);
        let q0 = ParamQ::zero(class.clone(), cfg.clip).unwrap();
        median(
            (0..20)
                .map(|seed| {
                    let t = run_fqi_fresh(&mdp, &class, &mu, &cfg, &q0, 100 + seed).unwrap();
                    decomposition_report(&mdp, &t, 0).unwrap().est_design_l2
                })
                .collect(),
        )
    };
    let (a, b, c) = (at(16), at(64), at(256));
    assert!(b < a && c < b, "{a} {b} {c}");
}
