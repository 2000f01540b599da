use fqi_lab::batch::BehaviorRule;
use fqi_lab::complexity::{
    alpha, alpha_prime, alpha_rates, classical_rademacher_exact, classical_rademacher_mc, contraction_check,
    finite_class_complexity_upper, sequential_rademacher_exact, sequential_rademacher_search,
    verify_seq_generalization, FiniteFamily, LinearBall, PredictableTree, ResidualClass, RkhsBall, SearchBudget,
};
use fqi_lab::mdp::random::{random_deterministic_mdp, random_mdp, random_qtable, random_sa_dist};
use fqi_lab::mdp::{optimal_solution, QTable, SaDistribution};
use fqi_lab::seeding::rng;
use fqi_lab::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// Independent path recursion: children of node `i` are `2i` (−1) and `2i+1` (+1).
fn oracle_tree_value(members: &[Vec<f64>], tree: &PredictableTree) -> f64 {
    fn rec(members: &[Vec<f64>], tree: &PredictableTree, t: usize, i: usize, sums: &[f64]) -> f64 {
        if t == tree.depth() {
            return sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        let p = tree.node(t, i);
        let mut total = 0.0;
        for (bit, sign) in [(0, -1.0), (1, 1.0)] {
            let next: Vec<f64> = sums.iter().zip(members).map(|(s, m)| s + sign * m[p]).collect();
            total += rec(members, tree, t + 1, 2 * i + bit, &next);
        }
        total
    }
    rec(members, tree, 0, 0, &vec![0.0; members.len()]) / (1u64 << tree.depth()) as f64
}

fn oracle_classical(members: &[Vec<f64>], points: &[usize]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for mask in 0..1usize << n {
        let best = members
            .iter()
            .map(|m| points.iter().enumerate().map(|(t, &p)| if mask >> t & 1 == 1 { m[p] } else { -m[p] }).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    total / (1u64 << n) as f64
}

fn random_members<R: Rng>(r: &mut R, k: usize, points: usize) -> Vec<Vec<f64>> {
    (0..k).map(|_| (0..points).map(|_| r.gen_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn singleton_family_is_zero() {
    let fam = FiniteFamily::new(&[vec![2.5, 2.5, 2.5]]).unwrap();
    assert!(classical_rademacher_exact(&fam, &[0, 1, 2, 1]).unwrap().abs() < 1e-12);
    let (est, se) = classical_rademacher_mc(&fam, &[0, 1, 2, 1], 20_000, 5).unwrap();
    assert!(est.abs() <= 4.0 * se + 1e-12);
    let mut r = rng(1);
    let tree = PredictableTree::random(&mut r, 6, &[0, 1, 2]).unwrap();
    assert!(sequential_rademacher_exact(&fam, &tree).unwrap().abs() < 1e-12);
    let res = sequential_rademacher_search(&fam, &[0, 1, 2], 5, SearchBudget::default(), 2).unwrap();
    assert!(res.value.abs() < 1e-12);
}

#[test]
fn plus_minus_constant_family() {
    let c = 1.75;
    let fam = FiniteFamily::new(&[vec![c, c], vec![-c, -c]]).unwrap();
    assert!((classical_rademacher_exact(&fam, &[0]).unwrap() - c).abs() < 1e-12);
    assert!((classical_rademacher_exact(&fam, &[0, 1]).unwrap() - c).abs() < 1e-12);
    let mut r = rng(2);
    for _ in 0..10 {
        let tree = PredictableTree::random(&mut r, 2, &[0, 1]).unwrap();
        assert!((sequential_rademacher_exact(&fam, &tree).unwrap() - c).abs() < 1e-12);
    }
}

#[test]
fn empty_inputs_are_invalid() {
    assert!(FiniteFamily::new(&[]).is_err());
    let fam = FiniteFamily::new(&[vec![1.0]]).unwrap();
    assert!(classical_rademacher_mc(&fam, &[0], 0, 1).is_err());
    assert!(PredictableTree::new(vec![vec![0], vec![0]]).is_err());
    let deep = PredictableTree::constant(&[0; 17]).unwrap();
    assert!(matches!(sequential_rademacher_exact(&fam, &deep), Err(Error::Unsupported(_))));
}

#[test]
fn exact_values_match_path_oracle() {
    let mut r = rng(3);
    for _ in 0..20 {
        let members = random_members(&mut r, 5, 4);
        let fam = FiniteFamily::new(&members).unwrap();
        let depth = r.gen_range(1..=7);
        let tree = PredictableTree::random(&mut r, depth, &[0, 1, 2, 3]).unwrap();
        let got = sequential_rademacher_exact(&fam, &tree).unwrap();
        assert!((got - oracle_tree_value(&members, &tree)).abs() < 1e-12);
        let points: Vec<usize> = (0..depth).map(|_| r.gen_range(0..4)).collect();
        let got = classical_rademacher_exact(&fam, &points).unwrap();
        assert!((got - oracle_classical(&members, &points)).abs() < 1e-12);
    }
}

#[test]
fn monte_carlo_tracks_exact_value() {
    let mut r = rng(4);
    let members = random_members(&mut r, 6, 5);
    let fam = FiniteFamily::new(&members).unwrap();
    let points = [0, 1, 2, 3, 4, 0, 1, 2];
    let exact = classical_rademacher_exact(&fam, &points).unwrap();
    let (est, se) = classical_rademacher_mc(&fam, &points, 50_000, 9).unwrap();
    assert!((est - exact).abs() <= 4.0 * se);
    assert_eq!(classical_rademacher_mc(&fam, &points, 1000, 9).unwrap(), classical_rademacher_mc(&fam, &points, 1000, 9).unwrap());
}

#[test]
fn massart_dominates_tree_values() {
    let mut r = rng(5);
    for _ in 0..20 {
        let members = random_members(&mut r, 8, 3);
        let fam = FiniteFamily::new(&members).unwrap();
        let tree = PredictableTree::random(&mut r, 8, &[0, 1, 2]).unwrap();
        let v = sequential_rademacher_exact(&fam, &tree).unwrap();
        assert!(v <= finite_class_complexity_upper(8, fam.sup_abs(), 8) + 1e-12);
    }
}

fn linear_ball<R: Rng>(r: &mut R, points: usize, dim: usize, radius: f64) -> (LinearBall, f64) {
    let feats: Vec<DVector<f64>> = (0..points).map(|_| DVector::from_fn(dim, |_, _| r.gen_range(-1.0..1.0))).collect();
    let rphi = feats.iter().map(|f| f.norm()).fold(0.0, f64::max);
    (LinearBall::new(feats, radius).unwrap(), rphi)
}

fn gaussian_ball<R: Rng>(r: &mut R, points: usize, radius: f64) -> RkhsBall {
    let xs: Vec<f64> = (0..points).map(|_| r.gen::<f64>()).collect();
    let g = DMatrix::from_fn(points, points, |i, j| (-(xs[i] - xs[j]).powi(2) / (2.0 * 0.09)).exp());
    RkhsBall::new(g, radius).unwrap()
}

#[test]
fn search_sits_between_constant_and_closed_form() {
    let mut r = rng(6);
    let candidates: Vec<usize> = (0..6).collect();
    for n in [3, 6, 9] {
        let (lin, rphi) = linear_ball(&mut r, 6, 3, 2.0);
        let res = sequential_rademacher_search(&lin, &candidates, n, SearchBudget::default(), 7).unwrap();
        assert!(res.constant_value <= res.value + 1e-12);
        assert!(res.value <= 2.0 * rphi * (n as f64).sqrt() + 1e-9);
        let direct = sequential_rademacher_exact(&lin, &res.tree).unwrap();
        assert!((direct - res.value).abs() < 1e-12);

        let rk = gaussian_ball(&mut r, 6, 1.5);
        let res = sequential_rademacher_search(&rk, &candidates, n, SearchBudget::default(), 8).unwrap();
        assert!(res.constant_value <= res.value + 1e-12);
        assert!(res.value <= 1.5 * 1.0 * (n as f64).sqrt() + 1e-9);
    }
}

#[test]
fn constant_tree_equals_classical() {
    let mut r = rng(7);
    let (lin, _) = linear_ball(&mut r, 5, 4, 1.0);
    let rk = gaussian_ball(&mut r, 5, 1.0);
    for _ in 0..10 {
        let points: Vec<usize> = (0..8).map(|_| r.gen_range(0..5)).collect();
        let tree = PredictableTree::constant(&points).unwrap();
        let a = sequential_rademacher_exact(&lin, &tree).unwrap();
        assert!((a - classical_rademacher_exact(&lin, &points).unwrap()).abs() < 1e-12);
        let b = sequential_rademacher_exact(&rk, &tree).unwrap();
        assert!((b - classical_rademacher_exact(&rk, &points).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn tree_dump_round_trips() {
    let mut r = rng(8);
    let tree = PredictableTree::random(&mut r, 5, &[0, 3, 7, 11]).unwrap();
    let mut buf = Vec::new();
    tree.dump(&mut buf, |p| format!("z{p}")).unwrap();
    assert_eq!(PredictableTree::parse(buf.as_slice()).unwrap(), tree);
    assert!(PredictableTree::parse("depth 2\n1 . 0\n".as_bytes()).is_err());
}

#[test]
fn zero_residual_family_has_zero_sides() {
    let mut r = rng(9);
    let mdp = random_deterministic_mdp(&mut r, 4, 2, 0.8);
    let q_star = optimal_solution(&mdp).unwrap().q_star;
    let clip = mdp.r_max() / (1.0 - mdp.gamma());
    let class = ResidualClass::new(&mdp, &[q_star], clip).unwrap();
    let n_points = class.points().len();
    let tree = PredictableTree::random(&mut r, 6, &(0..n_points).collect::<Vec<_>>()).unwrap();
    let report = contraction_check(&class, &tree).unwrap();
    assert!(report.realized.abs() < 1e-12 && report.bound.abs() < 1e-12);
    assert!(report.pass);
}

#[test]
fn contraction_holds_on_random_trees_and_is_homogeneous() {
    let mut r = rng(10);
    let mdp = random_mdp(&mut r, 3, 2, 0.9);
    let clip = mdp.r_max() / (1.0 - mdp.gamma());
    let tables: Vec<QTable> = (0..3).map(|_| random_qtable(&mut r, 3, 2, clip)).collect();
    let class = ResidualClass::new(&mdp, &tables, clip).unwrap();
    let candidates: Vec<usize> = (0..class.points().len()).collect();
    for _ in 0..50 {
        let depth = r.gen_range(2..=8);
        let tree = PredictableTree::random(&mut r, depth, &candidates).unwrap();
        let report = contraction_check(&class, &tree).unwrap();
        assert!(report.realized <= report.bound + 1e-9, "{report:?}");
        let base = sequential_rademacher_exact(class.residual(), &tree).unwrap();
        let scaled = sequential_rademacher_exact(&class.residual().scaled(2.5), &tree).unwrap();
        assert!((scaled - 2.5 * base).abs() < 1e-9);
    }
}

#[test]
fn alpha_formula_examples() {
    let delta = 2.0 / std::f64::consts::E.powi(2);
    assert!((alpha(1.0, 8, delta, 0.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    let near_one = alpha(1.0, 8, 1.0 - 1e-12, 0.0).unwrap();
    assert!((near_one - (2.0 * 2f64.ln() / 8.0).sqrt()).abs() < 1e-9);
    assert!(alpha(1.0, 8, 0.0, 0.0).is_err());
    assert!(alpha_prime(1.0, 8, 1.0, 0.0).is_err());
    let ab = alpha_rates(2.0, 16, 0.1, 3.0, 5.0).unwrap();
    let tail = 4.0 * (2.0 * 20f64.ln() / 16.0).sqrt();
    assert!((ab.alpha - (2.0 / 16.0 * 3.0 + tail)).abs() < 1e-12);
    assert!((ab.alpha_prime - (4.0 * 2.0 / 16.0 * 5.0 + tail)).abs() < 1e-12);
}

#[test]
fn alpha_decreases_in_n_for_sqrt_complexity() {
    let mut prev = (f64::INFINITY, f64::INFINITY);
    for n in [4, 8, 16, 32, 64, 128] {
        let r = 1.3 * (n as f64).sqrt();
        let a = alpha_rates(1.5, n, 0.1, r, r).unwrap();
        assert!(a.alpha < prev.0 && a.alpha_prime < prev.1);
        prev = (a.alpha, a.alpha_prime);
    }
}

#[test]
fn deterministic_schedule_has_no_deviation() {
    let mut r = rng(11);
    let mdp = random_deterministic_mdp(&mut r, 3, 2, 0.9);
    let clip = mdp.r_max() / (1.0 - mdp.gamma());
    let family: Vec<QTable> = (0..3).map(|_| random_qtable(&mut r, 3, 2, clip)).collect();
    let behavior = BehaviorRule::Fixed { mu: SaDistribution::point(3, 2, 1, 1) };
    let q_hat = QTable::zeros(3, 2);
    let (report, out) = verify_seq_generalization(&mdp, &family, &behavior, &q_hat, 16, 0.1, 20, 3, clip).unwrap();
    assert!(out.deviations.iter().all(|&d| d < 1e-9));
    assert_eq!(out.violations, 0);
    assert!(report.pass);
}

#[test]
fn violation_rate_within_binomial_slack() {
    let mut r = rng(12);
    let mdp = random_mdp(&mut r, 3, 2, 0.9);
    let clip = mdp.r_max() / (1.0 - mdp.gamma());
    let family: Vec<QTable> = (0..4).map(|_| random_qtable(&mut r, 3, 2, clip)).collect();
    let behavior = BehaviorRule::Fixed { mu: random_sa_dist(&mut r, 3, 2) };
    let q_hat = family[0].clone();
    let (report, small) = verify_seq_generalization(&mdp, &family, &behavior, &q_hat, 32, 0.1, 2000, 4, clip).unwrap();
    assert!(report.pass, "{report:?}");
    assert!(report.realized <= 0.1 + 3.0 * (0.09f64 / 2000.0).sqrt());
    let (_, big) = verify_seq_generalization(&mdp, &family, &behavior, &q_hat, 64, 0.1, 50, 4, clip).unwrap();
    assert!(big.alpha < small.alpha);
}

proptest! {
    #[test]
    fn constant_tree_identity(seed in any::<u64>(), k in 1usize..6, depth in 1usize..9) {
        let mut r = rng(seed);
        let members = random_members(&mut r, k, 4);
        let fam = FiniteFamily::new(&members).unwrap();
        let points: Vec<usize> = (0..depth).map(|_| r.gen_range(0..4)).collect();
        let tree = PredictableTree::constant(&points).unwrap();
        let a = sequential_rademacher_exact(&fam, &tree).unwrap();
        let b = classical_rademacher_exact(&fam, &points).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn linear_tree_values_below_closed_form(seed in any::<u64>(), depth in 1usize..9, w in 0.1f64..3.0) {
        let mut r = rng(seed);
        let (lin, rphi) = linear_ball(&mut r, 5, 3, w);
        let tree = PredictableTree::random(&mut r, depth, &[0, 1, 2, 3, 4]).unwrap();
        let v = sequential_rademacher_exact(&lin, &tree).unwrap();
        prop_assert!(v <= w * rphi * (depth as f64).sqrt() + 1e-9);
    }

    #[test]
    fn squared_class_contracts(seed in any::<u64>(), depth in 2usize..8) {
        let mut r = rng(seed);
        let mdp = random_mdp(&mut r, 3, 2, 0.8);
        let clip = mdp.r_max() / (1.0 - mdp.gamma());
        let tables: Vec<QTable> = (0..2).map(|_| random_qtable(&mut r, 3, 2, clip)).collect();
        let class = ResidualClass::new(&mdp, &tables, clip).unwrap();
        let candidates: Vec<usize> = (0..class.points().len()).collect();
        let tree = PredictableTree::random(&mut r, depth, &candidates).unwrap();
        let report = contraction_check(&class, &tree).unwrap();
        prop_assert!(report.realized <= report.bound + 1e-9);
    }
}
