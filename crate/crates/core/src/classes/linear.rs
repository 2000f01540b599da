use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::FeatureMap;
use crate::error::{invalid, Result};

/// `{(s,a) ↦ θᵀφ(s,a) : ‖θ‖₂ ≤ W}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClass {
    pub(crate) features: FeatureMap,
    pub(crate) weight_bound: f64,
    pub(crate) feature_bound: f64,
}

impl LinearClass {
    /// Uses the exhaustive `max ‖φ‖₂` as `R_φ`. `W` may be `+∞` (no constraint).
    pub fn new(features: FeatureMap, weight_bound: f64) -> Result<Self> {
        let r = features.max_norm();
        Self::with_feature_bound(features, weight_bound, r)
    }

    /// Validates a caller-supplied `R_φ` against every feature vector.
    pub fn with_feature_bound(features: FeatureMap, weight_bound: f64, feature_bound: f64) -> Result<Self> {
        if !(weight_bound > 0.0) {
            return invalid(format!("weight bound W = {weight_bound} must be positive"));
        }
        if !(feature_bound.is_finite() && feature_bound > 0.0) {
            return invalid(format!("feature bound R_phi = {feature_bound} must be a positive real"));
        }
        for i in 0..features.n_pairs() {
            let n = features.norm(i);
            if n > feature_bound * (1.0 + 1e-12) {
                let (s, a) = (i / features.n_actions(), i % features.n_actions());
                return invalid(format!("feature norm {n} at ({s},{a}) exceeds R_phi = {feature_bound}"));
            }
        }
        Ok(Self { features, weight_bound, feature_bound })
    }

    /// One parameter per pair with `‖θ‖₂ ≤ W`.
    pub fn tabular(n_states: usize, n_actions: usize, weight_bound: f64) -> Result<Self> {
        Self::with_feature_bound(FeatureMap::tabular(n_states, n_actions), weight_bound, 1.0)
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }
    pub fn weight_bound(&self) -> f64 {
        self.weight_bound
    }
    pub fn feature_bound(&self) -> f64 {
        self.feature_bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallLstsq {
    pub theta: DVector<f64>,
    /// Ridge multiplier at the solution; zero when the constraint is slack.
    pub multiplier: f64,
    /// `‖Xθ − y‖²`.
    pub objective: f64,
}

/// `min ‖Xθ − y‖²` subject to `‖θ‖₂ ≤ radius`.
///
/// The minimum-norm least-squares solution is returned when feasible;
/// otherwise the ridge path `θ(λ) = V diag(σ/(σ²+λ)) Uᵀy` is bisected
/// until `‖θ(λ)‖` sits on the boundary.
pub fn ball_constrained_lstsq(x: &DMatrix<f64>, y: &DVector<f64>, radius: f64) -> Result<BallLstsq> {
    if x.nrows() != y.len() {
        return invalid(format!("design has {} rows but {} targets", x.nrows(), y.len()));
    }
    if !(radius > 0.0) {
        return invalid(format!("radius {radius} must be positive"));
    }
    let d = x.ncols();
    if x.nrows() == 0 {
        return Ok(BallLstsq { theta: DVector::zeros(d), multiplier: 0.0, objective: 0.0 });
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested u");
    let vt = svd.v_t.as_ref().expect("requested v_t");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = smax * (x.nrows().max(d) as f64) * f64::EPSILON;
    let modes: Vec<(usize, f64, f64)> = (0..sigma.len())
        .filter(|&i| sigma[i] > cutoff && sigma[i] > 0.0)
        .map(|i| (i, sigma[i], u.column(i).dot(y)))
        .collect();

    let theta_at = |lambda: f64| -> DVector<f64> {
        let mut theta = DVector::zeros(d);
        for &(i, s, b) in &modes {
            let c = s * b / (s * s + lambda);
            theta += vt.row(i).transpose() * c;
        }
        theta
    };
    let norm_at = |lambda: f64| -> f64 {
        modes.iter().map(|&(_, s, b)| (s * b / (s * s + lambda)).powi(2)).sum::<f64>().sqrt()
    };

    let (theta, multiplier) = if norm_at(0.0) <= radius {
        (theta_at(0.0), 0.0)
    } else {
        let mut lo = 0.0;
        let mut hi = modes.iter().map(|&(_, s, b)| (s * b).abs()).sum::<f64>() / radius;
        while norm_at(hi) > radius {
            hi *= 2.0;
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if norm_at(mid) > radius {
                lo = mid;
            } else {
                hi = mid;
            }
            if radius - norm_at(hi) <= 1e-12 * radius.max(1.0) {
                break;
            }
        }
        (theta_at(hi), hi)
    };
    let resid = x * &theta - y;
    Ok(BallLstsq { objective: resid.norm_squared(), theta, multiplier })
}
