use fqi_lab::bounds::{
    adaptive_performance_bound, concentrability, concentrability_stabilized, dist_mismatch_bound,
    enumerate_max_mass, error_propagation_bound, est_slow_rate, fqi_unified_bound, injected_residual_run,
    max_propagation_bound, propagation_reports, regret_certificate, regret_gaps, regret_prefix_reports,
    value_gap_l1, BoundReport, InitGap, RoundTerms, TheoremId,
};
use fqi_lab::fqi::diagonal_residual;
use fqi_lab::mdp::random::{random_mdp, random_qtable, random_sa_dist, random_sparse_mdp, random_state_dist};
use fqi_lab::mdp::{
    greedy_policy, marginal_propagate, optimal_solution, value_iteration_sequence, FiniteMdp, QTable,
    SaDistribution, StateDist,
};
use fqi_lab::seeding::rng;
use proptest::prelude::*;
use rand::Rng;

/// `max_π̄ P_t^π̄(s,a)` by listing every deterministic rule sequence `(π_0, …, π_t)`.
fn naive_max_marginals(mdp: &FiniteMdp, rho: &StateDist, t: usize) -> Vec<f64> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let rules = na.pow(ns as u32);
    let action = |rule: usize, s: usize| (rule / na.pow(s as u32)) % na;
    let total = rules.pow(t as u32 + 1);
    let mut best = vec![0.0; ns * na];
    for code in 0..total {
        let rule_at = |step: usize| (code / rules.pow(step as u32)) % rules;
        let mut dist = rho.mass().to_vec();
        for step in 0..t {
            let r = rule_at(step);
            let mut next = vec![0.0; ns];
            for s in 0..ns {
                let a = action(r, s);
                for s2 in 0..ns {
                    next[s2] += dist[s] * mdp.p(s, a, s2);
                }
            }
            dist = next;
        }
        let r = rule_at(t);
        for s in 0..ns {
            let sa = s * na + action(r, s);
            best[sa] = f64::max(best[sa], dist[s]);
        }
    }
    best
}

fn naive_concentrability(mdp: &FiniteMdp, rho: &StateDist, mu: &SaDistribution, t_max: usize) -> f64 {
    let mut c: f64 = 0.0;
    for t in 0..=t_max {
        for (m, w) in naive_max_marginals(mdp, rho, t).iter().zip(mu.masses()) {
            if *m > 0.0 {
                c = c.max(if *w > 0.0 { m / w } else { f64::INFINITY });
            }
        }
    }
    c
}

#[test]
fn one_state_two_actions_gives_two() {
    let mdp = FiniteMdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 1.0], 0.9, 1.0).unwrap();
    let res = concentrability(&mdp, &StateDist::uniform(1), &SaDistribution::uniform(1, 2), 5).unwrap();
    assert!((res.c - 2.0).abs() < 1e-12);
    assert!(!res.infinite);
}

#[test]
fn stationary_single_action_gives_one() {
    let mdp = FiniteMdp::new(2, 1, vec![0.3, 0.7, 0.7, 0.3], vec![0.0, 1.0], 0.9, 1.0).unwrap();
    let rho = StateDist::uniform(2);
    let res = concentrability_stabilized(&mdp, &rho, &SaDistribution::uniform(2, 1), 200).unwrap();
    assert!((res.c - 1.0).abs() < 1e-12);
    assert!(res.stabilized);
}

#[test]
fn zero_mass_is_infinite() {
    let mdp = FiniteMdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 1.0], 0.9, 1.0).unwrap();
    let mu = SaDistribution::point(1, 2, 0, 0);
    let res = concentrability(&mdp, &StateDist::uniform(1), &mu, 3).unwrap();
    assert!(res.infinite && res.c.is_infinite());
}

#[test]
fn dp_matches_exhaustive_policy_oracle() {
    let mut r = rng(41);
    for i in 0..6 {
        let mdp = if i % 2 == 0 { random_mdp(&mut r, 3, 2, 0.9) } else { random_sparse_mdp(&mut r, 3, 2, 0.9, 2) };
        let rho = random_state_dist(&mut r, 3);
        let mu = random_sa_dist(&mut r, 3, 2);
        let t_max = 3;
        let dp = concentrability(&mdp, &rho, &mu, t_max).unwrap();
        let brute = naive_concentrability(&mdp, &rho, &mu, t_max);
        assert!((dp.c - brute).abs() <= 1e-12 * brute.max(1.0), "dp {} vs brute {brute}", dp.c);
        assert!(dp.c <= dp.c_upper);
        for t in 0..=t_max {
            let m = naive_max_marginals(&mdp, &rho, t);
            for s in 0..3 {
                let state_max = (0..2).map(|a| m[s * 2 + a]).fold(0.0, f64::max);
                assert!((dp.max_mass[t][s] - state_max).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn pruned_enumerator_matches_dp_to_depth_eight() {
    let mut r = rng(42);
    let mdp = random_sparse_mdp(&mut r, 3, 2, 0.9, 2);
    let rho = random_state_dist(&mut r, 3);
    let mu = random_sa_dist(&mut r, 3, 2);
    let dp = concentrability(&mdp, &rho, &mu, 8).unwrap();
    let en = enumerate_max_mass(&mdp, &rho, 8, 1 << 25).unwrap();
    assert_eq!(en.horizon, 8);
    for t in 0..=8 {
        for s in 0..3 {
            assert!((dp.max_mass[t][s] - en.max_mass[t][s]).abs() < 1e-12);
        }
    }
}

#[test]
fn witness_reproduces_ratio() {
    let mut r = rng(43);
    for _ in 0..10 {
        let mdp = random_mdp(&mut r, 4, 2, 0.8);
        let rho = random_state_dist(&mut r, 4);
        let mu = random_sa_dist(&mut r, 4, 2);
        let res = concentrability(&mdp, &rho, &mu, 6).unwrap();
        let w = res.witness.as_ref().unwrap();
        let m = marginal_propagate(&mdp, &rho, &w.policy, w.t).unwrap();
        let ratio = m.mass(w.s, w.a) / mu.mass(w.s, w.a);
        assert!((ratio - res.c).abs() <= 1e-9 * res.c.max(1.0));
    }
}

#[test]
fn propagation_examples() {
    let got = error_propagation_bound(0.9, 3, 1.0, &[0.1, 0.1, 0.1]).unwrap();
    assert!((got - 2.0).abs() < 1e-12);
    let half = max_propagation_bound(0.9, 3, 1.0, &[0.1, 0.1, 0.1]).unwrap();
    assert!((2.0 * half - got).abs() < 1e-12);
    assert!((error_propagation_bound(0.5, 4, 3.0, &[0.0; 4]).unwrap() - 2.0 * 0.0625 * 3.0).abs() < 1e-15);
    assert!((max_propagation_bound(0.5, 4, 3.0, &[0.0; 4]).unwrap() - 0.0625 * 3.0).abs() < 1e-15);
    assert!(error_propagation_bound(0.5, 3, 1.0, &[0.0; 4]).is_err());
}

#[test]
fn injected_runs_respect_every_propagation_check() {
    let mut r = rng(44);
    for i in 0..10 {
        let gamma = if i % 2 == 0 { 0.5 } else { 0.9 };
        let mdp = random_mdp(&mut r, 4, 3, gamma);
        let q_star = optimal_solution(&mdp).unwrap().q_star;
        let q0 = random_qtable(&mut r, 4, 3, 5.0);
        let residuals: Vec<QTable> = (0..8).map(|_| random_qtable(&mut r, 4, 3, 0.3)).collect();
        let iterates = injected_residual_run(&mdp, &q0, &residuals).unwrap();
        let reports = propagation_reports(&mdp, &q_star, &iterates, &residuals, "t").unwrap();
        assert_eq!(reports.len(), 4 * 8);
        for rep in &reports {
            assert!(rep.pass, "{rep:?}");
        }
        let sups: Vec<f64> = residuals.iter().map(QTable::sup_norm).collect();
        let last = iterates[8].sub(&q_star).sup_norm();
        assert!(last <= max_propagation_bound(gamma, 8, q0.sub(&q_star).sup_norm(), &sups).unwrap() + 1e-9);
    }
}

#[test]
fn dist_mismatch_examples() {
    let far = dist_mismatch_bound(1.0, 0.5, 2000, 0.01, InitGap::L2(0.0)).unwrap();
    assert!((far - 0.16).abs() < 1e-12);
    assert_eq!(dist_mismatch_bound(3.0, 0.9, 10, 0.0, InitGap::L2(0.0)).unwrap(), 0.0);
    let sup = dist_mismatch_bound(4.0, 0.5, 1, 0.0, InitGap::Sup(1.0)).unwrap();
    assert!((sup - 4.0).abs() < 1e-12);
    let l2 = dist_mismatch_bound(4.0, 0.5, 1, 0.0, InitGap::L2(1.0)).unwrap();
    assert!((l2 - 8.0).abs() < 1e-12);
    assert!(dist_mismatch_bound(0.5, 0.5, 1, 0.0, InitGap::L2(1.0)).is_err());
}

fn scaled_to_l2(q: QTable, mu: &SaDistribution, eps: f64) -> QTable {
    let n = mu.l2_norm(&q);
    q.scale(eps / n)
}

#[test]
fn dist_mismatch_holds_on_injected_runs() {
    let mut r = rng(45);
    for _ in 0..20 {
        let gamma = r.gen_range(0.5..0.9);
        let mdp = random_mdp(&mut r, 5, 2, gamma);
        let sol = optimal_solution(&mdp).unwrap();
        let rho = random_state_dist(&mut r, 5);
        let mu = random_sa_dist(&mut r, 5, 2);
        let c = concentrability_stabilized(&mdp, &rho, &mu, 400).unwrap().c_upper;
        for eps in [0.01, 0.1] {
            let residuals: Vec<QTable> =
                (0..10).map(|_| scaled_to_l2(random_qtable(&mut r, 5, 2, 1.0), &mu, eps)).collect();
            let q0 = QTable::zeros(5, 2);
            let iterates = injected_residual_run(&mdp, &q0, &residuals).unwrap();
            let pi = greedy_policy(&iterates[10]);
            let realized = value_gap_l1(&mdp, &rho, &sol.v_star, &pi).unwrap();
            let init = mu.l2_norm(&q0.sub(&sol.q_star));
            let bound = dist_mismatch_bound(c, gamma, 10, eps, InitGap::L2(init)).unwrap();
            assert!(realized <= bound + 1e-9, "{realized} > {bound}");
        }
    }
}

#[test]
fn fqi_unified_examples() {
    let b = 10.0;
    let pure = fqi_unified_bound(2.0, 0.9, 5, 0.0, 0.0, b).unwrap();
    assert!((pure - 8.0 * b * 0.9f64.powi(5) / 0.1).abs() < 1e-9);
    let long = fqi_unified_bound(1.0, 0.5, 5000, 0.0, 0.0, b).unwrap();
    assert!(long < 1e-300);
    let u = fqi_unified_bound(2.0, 0.8, 7, 0.03, 0.05, b).unwrap();
    let d = dist_mismatch_bound(2.0, 0.8, 7, 0.08, InitGap::Sup(2.0 * b)).unwrap();
    assert!((u - d).abs() < 1e-12);
}

#[test]
fn est_slow_examples() {
    let delta = 2.0 / std::f64::consts::E.powi(2);
    let v = est_slow_rate(1.0, 8, delta, 0.0).unwrap();
    assert!((v - (8.0 * 0.5f64.sqrt()).sqrt()).abs() < 1e-12);
    assert!((v - 2.378).abs() < 1e-3);
    let c = 0.01;
    let n = 100;
    let a = est_slow_rate(1.0, n, 0.1, c / (n as f64).sqrt()).unwrap();
    let b = est_slow_rate(1.0, 16 * n, 0.1, c / ((16 * n) as f64).sqrt()).unwrap();
    assert!(((b / a) - 0.5).abs() <= 0.025);
    let lim = est_slow_rate(1.0, 50, 1.0 - 1e-12, 0.0).unwrap();
    assert!((lim - (8.0 * (2.0 * 2f64.ln() / 50.0).sqrt()).sqrt()).abs() < 1e-6);
    assert!(est_slow_rate(1.0, 8, 1.0, 0.0).is_err());
}

#[test]
fn adaptive_performance_examples() {
    let zero = vec![RoundTerms { eps_app: 0.0, alpha_prime: 0.0, eps_opt: 0.0 }; 4];
    let v = adaptive_performance_bound(3.0, 0.9, 4, &zero, 5.0).unwrap();
    assert!((v - 40.0 * 0.9f64.powi(4) / 0.1).abs() < 1e-9);
    let terms = vec![RoundTerms { eps_app: 0.02, alpha_prime: 0.005, eps_opt: 0.001 }; 6];
    let worst = terms[0].residual_bound();
    let a = adaptive_performance_bound(2.5, 0.8, 6, &terms, 5.0).unwrap();
    let u = fqi_unified_bound(2.5, 0.8, 6, 0.02, worst - 0.02, 5.0).unwrap();
    assert!((a - u).abs() < 1e-12);
    assert!(adaptive_performance_bound(2.5, 0.8, 5, &terms, 5.0).is_err());
}

#[test]
fn regret_examples() {
    assert_eq!(regret_certificate(&[0.0, 0.0], 0.9).unwrap(), 0.0);
    let mut r = rng(46);
    let mdp = random_mdp(&mut r, 2, 2, 0.9);
    let sol = optimal_solution(&mdp).unwrap();
    let c = 0.7;
    let shifted = sol.q_star.map(|v| v + c);
    let diag = diagonal_residual(&shifted, &mdp).unwrap();
    assert!((diag - c * 0.1).abs() < 1e-9);
    let gaps = regret_gaps(&mdp, &sol.v_star, &[shifted.clone()], &[1]).unwrap();
    assert!(gaps[0].abs() < 1e-9);
    assert!((regret_certificate(&[diag], 0.9).unwrap() - 2.0 * c).abs() < 1e-8);
    let at_star = regret_gaps(&mdp, &sol.v_star, &[sol.q_star.clone()], &[0]).unwrap();
    assert!(at_star[0].abs() < 1e-9);
}

#[test]
fn regret_holds_along_value_iteration() {
    let mut r = rng(47);
    let mdp = random_mdp(&mut r, 5, 3, 0.9);
    let sol = optimal_solution(&mdp).unwrap();
    let iterates = value_iteration_sequence(&mdp, &QTable::zeros(5, 3), 49).unwrap();
    let states: Vec<usize> = (0..50).map(|_| r.gen_range(0..5)).collect();
    let reports = regret_prefix_reports(&mdp, &sol.v_star, &iterates, &states, "vi").unwrap();
    assert_eq!(reports.len(), 50);
    assert!(reports.iter().all(|rep| rep.pass));
    let diag: Vec<f64> = iterates.iter().map(|q| diagonal_residual(q, &mdp).unwrap()).collect();
    for w in diag.windows(2) {
        assert!(w[1] <= 0.9 * w[0] + 1e-9);
    }
}

#[test]
fn report_never_passes_above_tolerance() {
    let r = BoundReport::new(TheoremId::RegretCert, "x", 1.0 + 2e-9, vec![("b".into(), 1.0)], 1e-9, &0);
    assert!(!r.pass && r.hard_failure());
    let ok = BoundReport::new(TheoremId::RegretCert, "x", 1.0, vec![("b".into(), 0.25), ("c".into(), 0.75)], 0.0, &0);
    assert!(ok.pass);
    assert!((ok.bound - 1.0).abs() < 1e-12);
    let adv = BoundReport::new(TheoremId::RegretCert, "x", 5.0, vec![], 0.0, &0).advisory();
    assert!(!adv.pass && !adv.hard_failure());
}

proptest! {
    #[test]
    fn bounds_are_monotone_in_error_inputs(
        gamma in 0.0f64..0.99,
        k in 1usize..20,
        base in 0.0f64..1.0,
        bump in 0.0f64..1.0,
        c in 1.0f64..50.0,
    ) {
        let sups = vec![base; k];
        let mut bigger = sups.clone();
        bigger[k / 2] += bump;
        prop_assert!(error_propagation_bound(gamma, k, base, &sups).unwrap() <= error_propagation_bound(gamma, k, base, &bigger).unwrap());
        prop_assert!(max_propagation_bound(gamma, k, base, &sups).unwrap() <= max_propagation_bound(gamma, k, base + bump, &sups).unwrap());
        prop_assert!(dist_mismatch_bound(c, gamma, k, base, InitGap::L2(base)).unwrap() <= dist_mismatch_bound(c, gamma, k, base + bump, InitGap::L2(base + bump)).unwrap());
        prop_assert!(fqi_unified_bound(c, gamma, k, base, base, 3.0).unwrap() <= fqi_unified_bound(c, gamma, k, base + bump, base, 3.0).unwrap());
        prop_assert!(est_slow_rate(3.0, k, 0.1, base).unwrap() <= est_slow_rate(3.0, k, 0.1, base + bump).unwrap());
        let terms = vec![RoundTerms { eps_app: base, alpha_prime: base, eps_opt: base }; k];
        let mut more = terms.clone();
        more[0].alpha_prime += bump;
        prop_assert!(adaptive_performance_bound(c, gamma, k, &terms, 3.0).unwrap() <= adaptive_performance_bound(c, gamma, k, &more, 3.0).unwrap());
        prop_assert!(regret_certificate(&sups, gamma).unwrap() <= regret_certificate(&bigger, gamma).unwrap());
    }

    #[test]
    fn concentrability_is_at_least_one_and_below_upper(seed in any::<u64>(), ns in 1usize..5, na in 1usize..4) {
        let mut r = rng(seed);
        let mdp = random_mdp(&mut r, ns, na, 0.8);
        let rho = random_state_dist(&mut r, ns);
        let mu = random_sa_dist(&mut r, ns, na);
        let res = concentrability(&mdp, &rho, &mu, 6).unwrap();
        prop_assert!(res.c >= 1.0 - 1e-12);
        prop_assert!(res.c <= res.c_upper);
    }
}
