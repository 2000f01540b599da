use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FeatureMap;
use crate::error::{invalid, Result};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

/// Bias-free MLP `x ↦ W_L σ(W_{L−1} ⋯ σ(W_1 x))` with `‖W_ℓ‖_op ≤ M_ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralClass {
    pub(crate) inputs: FeatureMap,
    pub(crate) hidden: Vec<usize>,
    pub(crate) layer_bounds: Vec<f64>,
    pub(crate) activation: Activation,
}

pub(crate) type Layers = Vec<(usize, usize, Vec<f64>)>;

impl NeuralClass {
    pub fn new(inputs: FeatureMap, hidden: Vec<usize>, layer_bounds: Vec<f64>, activation: Activation) -> Result<Self> {
        if hidden.iter().any(|&h| h == 0) {
            return invalid("hidden widths must be positive");
        }
        if layer_bounds.len() != hidden.len() + 1 {
            return invalid(format!(
                "{} hidden layers need {} layer norm bounds, got {}",
                hidden.len(),
                hidden.len() + 1,
                layer_bounds.len()
            ));
        }
        if let Some(m) = layer_bounds.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return invalid(format!("layer norm bound {m} must be a positive real"));
        }
        Ok(Self { inputs, hidden, layer_bounds, activation })
    }

    pub fn inputs(&self) -> &FeatureMap {
        &self.inputs
    }
    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }
    pub fn input_dim(&self) -> usize {
        self.inputs.dim()
    }
    pub fn layer_bounds(&self) -> &[f64] {
        &self.layer_bounds
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `(rows, cols)` of each layer, input side first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.inputs.dim()];
        widths.extend(&self.hidden);
        widths.push(1);
        widths.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub(crate) fn layers_match(&self, layers: &Layers) -> bool {
        let shapes = self.layer_shapes();
        layers.len() == shapes.len()
            && layers.iter().zip(&shapes).all(|((r, c, d), &(sr, sc))| *r == sr && *c == sc && d.len() == sr * sc)
    }

    pub(crate) fn zero_layers(&self) -> Layers {
        self.layer_shapes().into_iter().map(|(r, c)| (r, c, vec![0.0; r * c])).collect()
    }

    pub(crate) fn forward(&self, layers: &Layers, x: &[f64]) -> f64 {
        let mats: Vec<DMatrix<f64>> = layers.iter().map(|(r, c, d)| DMatrix::from_row_slice(*r, *c, d)).collect();
        self.forward_mats(&mats, &DVector::from_column_slice(x))
    }

    fn forward_mats(&self, mats: &[DMatrix<f64>], x: &DVector<f64>) -> f64 {
        let mut h = x.clone();
        for (l, m) in mats.iter().enumerate() {
            h = m * h;
            if l + 1 < mats.len() {
                h.apply(|v| *v = self.activation.apply(*v));
            }
        }
        h[0]
    }

    /// Weighted objective `Σ_j w_j (f(x_j) − t_j)²` and its gradient.
    fn objective_and_grad(
        &self,
        mats: &[DMatrix<f64>],
        xs: &[DVector<f64>],
        weights: &[f64],
        targets: &[f64],
    ) -> (f64, Vec<DMatrix<f64>>) {
        let depth = mats.len();
        let mut grads: Vec<DMatrix<f64>> = mats.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect();
        let mut total = 0.0;
        for ((x, &w), &t) in xs.iter().zip(weights).zip(targets) {
            let mut hs = vec![x.clone()];
            let mut zs = Vec::with_capacity(depth);
            for (l, m) in mats.iter().enumerate() {
                let z = m * hs.last().expect("nonempty");
                if l + 1 < depth {
                    hs.push(z.map(|v| self.activation.apply(v)));
                }
                zs.push(z);
            }
            let out = zs[depth - 1][0];
            let err = out - t;
            total += w * err * err;
            let mut delta = DVector::from_element(1, 2.0 * w * err);
            for l in (0..depth).rev() {
                grads[l] += &delta * hs[l].transpose();
                if l > 0 {
                    let back = mats[l].transpose() * &delta;
                    delta = back.zip_map(&zs[l - 1], |b, z| b * self.activation.derivative(z));
                }
            }
        }
        (total, grads)
    }

    /// Projected gradient descent from `budget.restarts` random starts; returns
    /// the best iterate seen and the per-restart best objectives.
    pub(crate) fn train(
        &self,
        points: &[usize],
        weights: &[f64],
        targets: &[f64],
        budget: &super::OptBudget,
    ) -> (Layers, f64, Vec<f64>) {
        let xs: Vec<DVector<f64>> = points.iter().map(|&p| self.inputs.vector(p)).collect();
        let shapes = self.layer_shapes();
        let mut best: Option<(Vec<DMatrix<f64>>, f64)> = None;
        let mut per_restart = Vec::with_capacity(budget.restarts.max(1));
        for r in 0..budget.restarts.max(1) {
            let mut rng = seeding::child_rng(budget.seed, r as u64);
            let mut mats: Vec<DMatrix<f64>> = shapes
                .iter()
                .zip(&self.layer_bounds)
                .map(|(&(rows, cols), &cap)| {
                    let scale = (3.0 / cols as f64).sqrt();
                    let m = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0) * scale);
                    project_spectral(&m, cap)
                })
                .collect();
            let (mut obj, mut grads) = self.objective_and_grad(&mats, &xs, weights, targets);
            let mut run_best = (mats.clone(), obj);
            for _ in 0..budget.steps {
                for ((m, g), &cap) in mats.iter_mut().zip(&grads).zip(&self.layer_bounds) {
                    *m = project_spectral(&(&*m - g * budget.learning_rate), cap);
                }
                let next = self.objective_and_grad(&mats, &xs, weights, targets);
                obj = next.0;
                grads = next.1;
                if obj < run_best.1 {
                    run_best = (mats.clone(), obj);
                }
            }
            per_restart.push(run_best.1);
            if best.as_ref().is_none_or(|b| run_best.1 < b.1) {
                best = Some(run_best);
            }
        }
        let (mats, obj) = best.expect("at least one restart");
        let layers = mats
            .iter()
            .map(|m| (m.nrows(), m.ncols(), m.transpose().as_slice().to_vec()))
            .collect();
        (layers, obj, per_restart)
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().copied().fold(0.0, f64::max)
}

/// Power-iteration estimate of the operator norm.
pub fn spectral_norm_power(m: &DMatrix<f64>, iters: usize) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let mtm = m.transpose() * m;
    let mut v = DVector::from_fn(m.ncols(), |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    for _ in 0..iters {
        let w = &mtm * &v;
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        v = w / n;
    }
    (m * v).norm()
}

/// Clips singular values at `cap`.
fn project_spectral(m: &DMatrix<f64>, cap: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    if svd.singular_values.iter().all(|&s| s <= cap) {
        return m.clone();
    }
    let u = svd.u.expect("requested u");
    let vt = svd.v_t.expect("requested v_t");
    let s = DMatrix::from_diagonal(&svd.singular_values.map(|s| s.min(cap)));
    u * s * vt
}
