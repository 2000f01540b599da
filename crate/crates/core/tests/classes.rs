use std::sync::Arc;

use fqi_lab::classes::{
    ball_constrained_lstsq, erm_fit, residual_envelope, spectral_norm_power, Activation, FeatureMap, FunctionClass,
    Kernel, LinearClass, NeuralClass, OptBudget, OptCertificate, ParamQ, Params, RkhsClass,
};
use fqi_lab::mdp::random::random_mdp;
use fqi_lab::seeding::rng;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn poly_linear(ns: usize, na: usize, w: f64) -> Arc<FunctionClass> {
    let f = FeatureMap::polynomial_actions(ns, na, 2).unwrap();
    Arc::new(FunctionClass::Linear(LinearClass::new(f, w).unwrap()))
}

fn gaussian_rkhs(ns: usize, na: usize, w: f64) -> Arc<FunctionClass> {
    let f = FeatureMap::coordinate_embedding(ns, na).unwrap();
    Arc::new(FunctionClass::Rkhs(RkhsClass::new(f, Kernel::Gaussian { bandwidth: 0.4 }, w).unwrap()))
}

fn small_net(ns: usize, na: usize) -> Arc<FunctionClass> {
    let f = FeatureMap::coordinate_embedding(ns, na).unwrap();
    Arc::new(FunctionClass::Neural(NeuralClass::new(f, vec![6], vec![2.0, 1.5], Activation::Tanh).unwrap()))
}

fn empirical_loss(q: &ParamQ, points: &[usize], labels: &[f64]) -> f64 {
    points.iter().zip(labels).map(|(&p, &y)| (q.value(p) - y).powi(2)).sum::<f64>() / points.len() as f64
}

fn random_design<R: Rng>(r: &mut R, pairs: usize, n: usize) -> (Vec<usize>, Vec<f64>) {
    let points: Vec<usize> = (0..n).map(|_| r.gen_range(0..pairs)).collect();
    let labels = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
    (points, labels)
}

fn random_in_ball<R: Rng>(r: &mut R, class: &Arc<FunctionClass>, clip: f64) -> ParamQ {
    match &**class {
        FunctionClass::Linear(c) => {
            let d = c.features().dim();
            let mut theta: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
            let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            let target = c.weight_bound() * r.gen::<f64>().sqrt();
            theta.iter_mut().for_each(|v| *v *= target / norm);
            ParamQ::new(class.clone(), Params::Linear(theta), clip).unwrap()
        }
        FunctionClass::Rkhs(c) => {
            let anchors: Vec<usize> = (0..class.n_pairs()).collect();
            let coeffs: Vec<f64> = anchors.iter().map(|_| r.gen_range(-1.0..1.0)).collect();
            let q = ParamQ::new(class.clone(), Params::Rkhs { anchors: anchors.clone(), coeffs: coeffs.clone() }, clip)
                .unwrap();
            let scale = c.norm_bound() * r.gen::<f64>() / q.norm();
            let coeffs = coeffs.iter().map(|v| v * scale).collect();
            ParamQ::new(class.clone(), Params::Rkhs { anchors, coeffs }, clip).unwrap()
        }
        FunctionClass::Neural(_) => unreachable!(),
    }
}

#[test]
fn zero_and_reproducing_and_clip() {
    let lin = poly_linear(4, 2, 5.0);
    let zero = ParamQ::zero(lin.clone(), 10.0).unwrap();
    assert!(zero.to_table().values().iter().all(|&v| v == 0.0));

    let rk = gaussian_rkhs(4, 2, 5.0);
    let x0 = 3;
    let single = ParamQ::new(rk.clone(), Params::Rkhs { anchors: vec![x0], coeffs: vec![1.7] }, 10.0).unwrap();
    let kxx = match &*rk {
        FunctionClass::Rkhs(c) => c.kernel_at(x0, x0),
        _ => unreachable!(),
    };
    assert!((single.value(x0) - 1.7 * kxx).abs() < 1e-15);

    let dim = FeatureMap::polynomial_actions(4, 2, 2).unwrap().dim();
    let big = ParamQ::new(lin, Params::Linear(vec![100.0; dim]), 2.5).unwrap();
    assert_eq!(big.evaluate(3, 1).unwrap(), 2.5);
    assert!(big.evaluate(4, 0).is_err());
}

#[test]
fn empty_batch_is_invalid() {
    let lin = poly_linear(3, 2, 1.0);
    assert!(erm_fit(&lin, &[], &[], 5.0, &OptBudget::default()).is_err());
}

#[test]
fn realizable_labels_are_fit_exactly() {
    let lin = poly_linear(5, 2, 10.0);
    let theta: Vec<f64> = vec![0.5, -1.0, 2.0, 1.0, 0.0, -0.5];
    let truth = ParamQ::new(lin.clone(), Params::Linear(theta), 100.0).unwrap();
    let points: Vec<usize> = (0..40).map(|i| i % 10).collect();
    let labels: Vec<f64> = points.iter().map(|&p| truth.value(p)).collect();
    let fit = erm_fit(&lin, &points, &labels, 100.0, &OptBudget::default()).unwrap();
    assert!(fit.achieved_loss <= 1e-10);
    assert!(fit.eps_opt <= 1e-5);
    assert_eq!(fit.certificate, OptCertificate::Exact);
}

#[test]
fn constant_labels_are_reproduced() {
    for class in [poly_linear(4, 3, 50.0), gaussian_rkhs(4, 3, 50.0)] {
        let points: Vec<usize> = (0..12).collect();
        let labels = vec![1.25; 12];
        let fit = erm_fit(&class, &points, &labels, 100.0, &OptBudget::default()).unwrap();
        for &p in &points {
            assert!((fit.q.value(p) - 1.25).abs() < 1e-6, "{} at {p}: {}", class.kind(), fit.q.value(p));
        }
    }
}

#[test]
fn duplicated_point_averages_conflicting_labels() {
    let tab = Arc::new(FunctionClass::Linear(LinearClass::tabular(3, 2, f64::INFINITY).unwrap()));
    let fit = erm_fit(&tab, &[2, 2, 4], &[1.0, 3.0, -1.0], 10.0, &OptBudget::default()).unwrap();
    assert!((fit.q.value(2) - 2.0).abs() < 1e-12);
    assert!((fit.q.value(4) + 1.0).abs() < 1e-12);
    assert!((fit.achieved_loss - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn closed_form_complexity_examples() {
    let unit = FeatureMap::new(1, 1, 1, vec![1.0]).unwrap();
    let lin = FunctionClass::Linear(LinearClass::new(unit, 1.0).unwrap());
    assert_eq!(lin.closed_form_complexity_bound(4).unwrap(), 2.0);
    assert_eq!(lin.closed_form_complexity_bound(1).unwrap(), 1.0);
    assert!(lin.closed_form_complexity_bound(0).is_err());

    let three = FeatureMap::new(1, 1, 1, vec![3.0]).unwrap();
    let rk = FunctionClass::Rkhs(RkhsClass::new(three, Kernel::Linear, 2.0).unwrap());
    assert!((rk.closed_form_complexity_bound(9).unwrap() - 18.0).abs() < 1e-12);

    let f = FeatureMap::new(1, 1, 2, vec![1.0, 0.0]).unwrap();
    let net = FunctionClass::Neural(NeuralClass::new(f, vec![3], vec![2.0, 3.0], Activation::Relu).unwrap());
    let want = 6.0 * (4.0 * 4f64.ln()).sqrt();
    assert!((net.closed_form_complexity_bound(4).unwrap() - want).abs() < 1e-12);
    assert!(net.complexity_bound_is_nominal());
}

#[test]
fn bad_constructions_are_rejected() {
    let f = FeatureMap::new(1, 2, 1, vec![1.0, 2.0]).unwrap();
    assert!(LinearClass::with_feature_bound(f.clone(), 1.0, 1.5).is_err());
    assert!(LinearClass::new(f.clone(), 0.0).is_err());
    assert!(RkhsClass::new(f.clone(), Kernel::Gaussian { bandwidth: -1.0 }, 1.0).is_err());
    assert!(NeuralClass::new(f, vec![2], vec![1.0], Activation::Relu).is_err());
    assert!(FeatureMap::new(1, 1, 2, vec![1.0]).is_err());
}

#[test]
fn ball_lstsq_lands_on_the_boundary() {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    let y = DVector::from_vec(vec![10.0, -4.0, 6.0]);
    let sol = ball_constrained_lstsq(&x, &y, 1.0).unwrap();
    assert!((sol.theta.norm() - 1.0).abs() <= 1e-9);
    assert!(sol.multiplier > 0.0);
    let free = ball_constrained_lstsq(&x, &y, 1e6).unwrap();
    assert_eq!(free.multiplier, 0.0);
}

#[test]
fn convex_fits_beat_random_in_ball_candidates() {
    let mut r = rng(31);
    for class in [poly_linear(6, 2, 1.5), gaussian_rkhs(6, 2, 1.5)] {
        let (points, labels) = random_design(&mut r, 12, 30);
        let clip = 1e3;
        let fit = erm_fit(&class, &points, &labels, clip, &OptBudget::default()).unwrap();
        assert!(fit.q.norm() <= 1.5 + 1e-9, "{} norm {}", class.kind(), fit.q.norm());
        for _ in 0..1000 {
            let cand = random_in_ball(&mut r, &class, clip);
            assert!(empirical_loss(&cand, &points, &labels) >= fit.achieved_loss - 1e-8);
        }
    }
}

#[test]
fn network_layers_respect_their_caps() {
    let mut r = rng(32);
    let net = small_net(5, 2);
    let (points, labels) = random_design(&mut r, 10, 25);
    let budget = OptBudget { restarts: 2, steps: 150, learning_rate: 0.1, seed: 3 };
    let fit = erm_fit(&net, &points, &labels, 10.0, &budget).unwrap();
    assert!(matches!(fit.certificate, OptCertificate::RestartRelative { .. }));
    let (FunctionClass::Neural(c), Params::Neural(layers)) = (&*net, fit.q.params()) else { unreachable!() };
    for ((rows, cols, data), m) in layers.iter().zip(c.layer_bounds()) {
        let norm = spectral_norm_power(&DMatrix::from_row_slice(*rows, *cols, data), 200);
        assert!(norm <= m * (1.0 + 1e-6), "layer norm {norm} > {m}");
    }
    let again = erm_fit(&net, &points, &labels, 10.0, &budget).unwrap();
    assert_eq!(again.q, fit.q);
}

#[test]
fn residual_envelope_holds_for_class_members() {
    let mut r = rng(33);
    let mdp = random_mdp(&mut r, 6, 2, 0.9);
    let class = poly_linear(6, 2, 40.0);
    let clip = class.default_clip(&mdp);
    let env = residual_envelope(mdp.r_max(), mdp.gamma(), clip);
    for _ in 0..200 {
        let f = random_in_ball(&mut r, &class, clip).to_table();
        let g = random_in_ball(&mut r, &class, clip).to_table();
        for s in 0..6 {
            for a in 0..2 {
                for s2 in 0..6 {
                    if mdp.p(s, a, s2) > 0.0 {
                        let res = f.get(s, a) - mdp.reward(s, a) - mdp.gamma() * g.state_max(s2);
                        assert!(res.abs() <= env);
                    }
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn evaluations_are_clipped(seed in any::<u64>(), clip in 0.1f64..5.0) {
        let mut r = rng(seed);
        let class = poly_linear(4, 2, 1e3);
        let dim = FeatureMap::polynomial_actions(4, 2, 2).unwrap().dim();
        let theta = (0..dim).map(|_| r.gen_range(-100.0..100.0)).collect();
        let q = ParamQ::new(class, Params::Linear(theta), clip).unwrap();
        prop_assert!(q.to_table().sup_norm() <= clip);
    }

    #[test]
    fn linear_and_rkhs_fits_are_norm_feasible(seed in any::<u64>(), w in 0.05f64..3.0) {
        let mut r = rng(seed);
        for class in [poly_linear(5, 2, w), gaussian_rkhs(5, 2, w)] {
            let (points, labels) = random_design(&mut r, 10, 20);
            let fit = erm_fit(&class, &points, &labels, 1e3, &OptBudget::default()).unwrap();
            prop_assert!(fit.q.norm() <= w + 1e-9);
        }
    }
}
