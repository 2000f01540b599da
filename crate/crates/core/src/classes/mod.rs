//! Hypothesis classes for the regression step: linear features in a norm
//! ball, RKHS balls, and spectrally norm-controlled networks.

mod erm;
mod linear;
mod neural;
mod rkhs;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::{FiniteMdp, QTable};

pub use erm::{erm_fit, project_weighted, ErmFit, OptBudget, OptCertificate, Projection};
pub use linear::{ball_constrained_lstsq, BallLstsq, LinearClass};
pub use neural::{spectral_norm_power, Activation, NeuralClass};
pub use rkhs::{Kernel, RkhsClass};

// ── Feature maps ─────────────────────────────────────────────────────

/// Vector attached to every `(s, a)` pair of a finite domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(n_states: usize, n_actions: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || dim == 0 {
            return invalid("feature map needs positive state, action and feature counts");
        }
        if data.len() != n_states * n_actions * dim {
            return invalid(format!("feature map needs {} values, got {}", n_states * n_actions * dim, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("feature values must be finite");
        }
        Ok(Self { n_states, n_actions, dim, data })
    }

    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n_states * n_actions * dim);
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = f(s, a);
                if row.len() != dim {
                    return invalid(format!("feature of ({s},{a}) has length {}, expected {dim}", row.len()));
                }
                data.extend(row);
            }
        }
        Self::new(n_states, n_actions, dim, data)
    }

    /// One-hot indicator of the pair.
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        let k = n_states * n_actions;
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            data[i * k + i] = 1.0;
        }
        Self { n_states, n_actions, dim: k, data }
    }

    /// `e_a ⊗ (1, x_s, …, x_s^degree)` with `x_s = s/(n_states − 1)`.
    pub fn polynomial_actions(n_states: usize, n_actions: usize, degree: usize) -> Result<Self> {
        let block = degree + 1;
        Self::from_fn(n_states, n_actions, n_actions * block, |s, a| {
            let x = state_coordinate(s, n_states);
            let mut row = vec![0.0; n_actions * block];
            for d in 0..block {
                row[a * block + d] = x.powi(d as i32);
            }
            row
        })
    }

    /// `(x_s, e_a)`: a low-dimensional input embedding for kernels and networks.
    pub fn coordinate_embedding(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::from_fn(n_states, n_actions, 1 + n_actions, |s, a| {
            let mut row = vec![0.0; 1 + n_actions];
            row[0] = state_coordinate(s, n_states);
            row[1 + a] = 1.0;
            row
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn row(&self, pair: usize) -> &[f64] {
        &self.data[pair * self.dim..(pair + 1) * self.dim]
    }
    pub fn norm(&self, pair: usize) -> f64 {
        self.row(pair).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
    /// Exhaustive `max ‖φ(s,a)‖₂` over the domain.
    pub fn max_norm(&self) -> f64 {
        (0..self.n_pairs()).map(|i| self.norm(i)).fold(0.0, f64::max)
    }
    pub fn vector(&self, pair: usize) -> DVector<f64> {
        DVector::from_column_slice(self.row(pair))
    }
}

/// Position of state `s` in `[0, 1]`.
pub fn state_coordinate(s: usize, n_states: usize) -> f64 {
    if n_states <= 1 {
        0.0
    } else {
        s as f64 / (n_states - 1) as f64
    }
}

// ── Classes ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FunctionClass {
    Linear(LinearClass),
    Rkhs(RkhsClass),
    Neural(NeuralClass),
}

impl FunctionClass {
    fn domain(&self) -> &FeatureMap {
        match self {
            FunctionClass::Linear(c) => &c.features,
            FunctionClass::Rkhs(c) => &c.inputs,
            FunctionClass::Neural(c) => &c.inputs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.domain().n_states()
    }
    pub fn n_actions(&self) -> usize {
        self.domain().n_actions()
    }
    pub fn n_pairs(&self) -> usize {
        self.domain().n_pairs()
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FunctionClass::Linear(_) => "linear",
            FunctionClass::Rkhs(_) => "rkhs",
            FunctionClass::Neural(_) => "nn",
        }
    }

    /// Linear and RKHS balls are convex; networks are not.
    pub fn is_convex(&self) -> bool {
        !matches!(self, FunctionClass::Neural(_))
    }

    /// True when the complexity bound carries an unspecified constant (set to 1).
    pub fn complexity_bound_is_nominal(&self) -> bool {
        matches!(self, FunctionClass::Neural(_))
    }

    /// Unnormalized sequential complexity bound: `W R_φ √n`, `W κ √n`, or
    /// `(∏ M_ℓ) √(n log 2d)` with the hidden constant fixed to 1.
    pub fn closed_form_complexity_bound(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return invalid("complexity bound needs n >= 1");
        }
        let rn = (n as f64).sqrt();
        Ok(match self {
            FunctionClass::Linear(c) => c.weight_bound * c.feature_bound * rn,
            FunctionClass::Rkhs(c) => c.norm_bound * c.kappa * rn,
            FunctionClass::Neural(c) => {
                let prod: f64 = c.layer_bounds.iter().product();
                prod * (n as f64 * (2.0 * c.inputs.dim() as f64).ln()).sqrt()
            }
        })
    }

    /// Largest `|f(s,a)|` any member can reach on the domain (before clipping).
    pub fn sup_bound(&self) -> f64 {
        match self {
            FunctionClass::Linear(c) => c.weight_bound * c.feature_bound,
            FunctionClass::Rkhs(c) => c.norm_bound * c.kappa,
            FunctionClass::Neural(c) => c.layer_bounds.iter().product::<f64>() * c.inputs.max_norm(),
        }
    }

    /// `max(r_max/(1−γ), sup_bound)`: the smallest admissible clip that never
    /// truncates a member of the class.
    pub fn default_clip(&self, mdp: &FiniteMdp) -> f64 {
        let floor = mdp.r_max() / (1.0 - mdp.gamma());
        let s = self.sup_bound();
        if s.is_finite() {
            floor.max(s)
        } else {
            floor
        }
    }
}

// ── Parameterized action-value functions ─────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Params {
    Linear(Vec<f64>),
    /// Representer expansion `Σ_j coeffs_j K(x_{anchor_j}, ·)` over pair indices.
    Rkhs { anchors: Vec<usize>, coeffs: Vec<f64> },
    /// Layer matrices, input side first, stored row-major as `(rows, cols, data)`.
    Neural(Vec<(usize, usize, Vec<f64>)>),
}

/// Member of a class together with its clip bound `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamQ {
    class: Arc<FunctionClass>,
    params: Params,
    clip: f64,
}

impl ParamQ {
    pub fn new(class: Arc<FunctionClass>, params: Params, clip: f64) -> Result<Self> {
        if !(clip.is_finite() && clip > 0.0) {
            return invalid(format!("clip bound {clip} must be a positive real"));
        }
        match (&*class, &params) {
            (FunctionClass::Linear(c), Params::Linear(theta)) if theta.len() == c.features.dim() => {}
            (FunctionClass::Rkhs(c), Params::Rkhs { anchors, coeffs })
                if anchors.len() == coeffs.len() && anchors.iter().all(|&i| i < c.inputs.n_pairs()) => {}
            (FunctionClass::Neural(c), Params::Neural(layers)) if c.layers_match(layers) => {}
            _ => return invalid(format!("parameters do not match a {} class", class.kind())),
        }
        Ok(Self { class, params, clip })
    }

    /// The zero function of the class.
    pub fn zero(class: Arc<FunctionClass>, clip: f64) -> Result<Self> {
        let params = match &*class {
            FunctionClass::Linear(c) => Params::Linear(vec![0.0; c.features.dim()]),
            FunctionClass::Rkhs(_) => Params::Rkhs { anchors: vec![], coeffs: vec![] },
            FunctionClass::Neural(c) => Params::Neural(c.zero_layers()),
        };
        Self::new(class, params, clip)
    }

    pub fn class(&self) -> &Arc<FunctionClass> {
        &self.class
    }
    pub fn params(&self) -> &Params {
        &self.params
    }
    pub fn clip(&self) -> f64 {
        self.clip
    }

    /// Unclipped forward value at a pair index.
    pub fn raw_value(&self, pair: usize) -> f64 {
        match (&*self.class, &self.params) {
            (FunctionClass::Linear(c), Params::Linear(theta)) => {
                c.features.row(pair).iter().zip(theta).map(|(x, w)| x * w).sum()
            }
            (FunctionClass::Rkhs(c), Params::Rkhs { anchors, coeffs }) => {
                anchors.iter().zip(coeffs).map(|(&j, &cj)| cj * c.kernel_at(j, pair)).sum()
            }
            (FunctionClass::Neural(c), Params::Neural(layers)) => c.forward(layers, c.inputs.row(pair)),
            _ => unreachable!("checked at construction"),
        }
    }

    /// Clipped value at a pair index.
    pub fn value(&self, pair: usize) -> f64 {
        self.raw_value(pair).clamp(-self.clip, self.clip)
    }

    /// Clipped value at `(s, a)`.
    pub fn evaluate(&self, s: usize, a: usize) -> Result<f64> {
        let (ns, na) = (self.class.n_states(), self.class.n_actions());
        if s >= ns || a >= na {
            return invalid(format!("(s={s}, a={a}) outside the {ns}x{na} domain"));
        }
        Ok(self.value(s * na + a))
    }

    pub fn to_table(&self) -> QTable {
        let (ns, na) = (self.class.n_states(), self.class.n_actions());
        QTable::from_vec(ns, na, (0..ns * na).map(|i| self.value(i)).collect()).expect("clipped values are finite")
    }

    /// Class norm of the parameters: `‖θ‖₂`, `√(cᵀGc)`, or the largest layer
    /// spectral norm relative to its cap.
    pub fn norm(&self) -> f64 {
        match (&*self.class, &self.params) {
            (FunctionClass::Linear(_), Params::Linear(theta)) => theta.iter().map(|v| v * v).sum::<f64>().sqrt(),
            (FunctionClass::Rkhs(c), Params::Rkhs { anchors, coeffs }) => {
                let mut total = 0.0;
                for (i, &ai) in anchors.iter().enumerate() {
                    for (j, &aj) in anchors.iter().enumerate() {
                        total += coeffs[i] * coeffs[j] * c.kernel_at(ai, aj);
                    }
                }
                total.max(0.0).sqrt()
            }
            (FunctionClass::Neural(c), Params::Neural(layers)) => layers
                .iter()
                .zip(&c.layer_bounds)
                .map(|((r, k, d), m)| neural::spectral_norm(&DMatrix::from_row_slice(*r, *k, d)) / m)
                .fold(0.0, f64::max),
            _ => unreachable!("checked at construction"),
        }
    }

    /// `B ≥ r_max/(1−γ)` against a concrete MDP of matching shape.
    pub fn check_against(&self, mdp: &FiniteMdp) -> Result<()> {
        if mdp.n_states() != self.class.n_states() || mdp.n_actions() != self.class.n_actions() {
            return invalid("class domain does not match the mdp");
        }
        let floor = mdp.r_max() / (1.0 - mdp.gamma());
        if self.clip < floor * (1.0 - 1e-12) {
            return invalid(format!("clip bound {} is below r_max/(1-gamma) = {floor}", self.clip));
        }
        Ok(())
    }
}

/// `B_res = R_max + (1+γ)B`.
pub fn residual_envelope(r_max: f64, gamma: f64, clip: f64) -> f64 {
    r_max + (1.0 + gamma) * clip
}
