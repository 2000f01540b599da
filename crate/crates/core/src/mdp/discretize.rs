use serde::{Deserialize, Serialize};

use super::FiniteMdp;
use crate::error::{invalid, Result};

/// Shape of the next-state kernel around the drifted point `x + drift_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelShape {
    /// All mass on the cell containing the drifted point (clamped to the interval).
    Deterministic,
    /// Gaussian density evaluated at cell midpoints, then row-normalized.
    Gaussian { sigma: f64 },
    /// Next state uniform over the interval, independent of `(x, a)`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardShape {
    /// `exp(−(x − center)²/(2 width²)) − action_cost·|drift_a|`.
    Bump { center: f64, width: f64, action_cost: f64 },
}

/// One-dimensional continuous-state MDP on `[lo, hi]` with drift actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousMdpSpec {
    pub lo: f64,
    pub hi: f64,
    pub grid: usize,
    pub gamma: f64,
    pub drifts: Vec<f64>,
    pub kernel: KernelShape,
    pub reward: RewardShape,
}

impl ContinuousMdpSpec {
    pub fn cell_width(&self) -> f64 {
        (self.hi - self.lo) / self.grid as f64
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.cell_width()
    }

    /// Cell containing `x`, with points outside the interval clamped.
    pub fn cell_of(&self, x: f64) -> usize {
        let idx = ((x - self.lo) / self.cell_width()).floor();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.grid - 1)
        }
    }
}

/// Cell-midpoint discretization with row-normalized transitions.
pub fn discretize(spec: &ContinuousMdpSpec) -> Result<FiniteMdp> {
    if spec.grid < 2 {
        return invalid(format!("grid size {} must be at least 2", spec.grid));
    }
    if !(spec.lo.is_finite() && spec.hi.is_finite() && spec.lo < spec.hi) {
        return invalid(format!("interval [{}, {}] is not a proper finite interval", spec.lo, spec.hi));
    }
    if spec.drifts.is_empty() || spec.drifts.iter().any(|d| !d.is_finite()) {
        return invalid("need at least one finite drift action");
    }
    let n = spec.grid;
    let na = spec.drifts.len();
    let mut transition = Vec::with_capacity(n * na * n);
    let mut reward = Vec::with_capacity(n * na);
    for i in 0..n {
        let x = spec.midpoint(i);
        for (a, &drift) in spec.drifts.iter().enumerate() {
            let target = x + drift;
            let mut row = vec![0.0; n];
            match spec.kernel {
                KernelShape::Deterministic => row[spec.cell_of(target)] = 1.0,
                KernelShape::Uniform => row.iter_mut().for_each(|p| *p = 1.0),
                KernelShape::Gaussian { sigma } => {
                    if !(sigma.is_finite() && sigma > 0.0) {
                        return invalid(format!("gaussian kernel sigma = {sigma} must be positive"));
                    }
                    for (j, p) in row.iter_mut().enumerate() {
                        let z = (spec.midpoint(j) - target) / sigma;
                        *p = (-0.5 * z * z).exp();
                    }
                }
            }
            let total: f64 = row.iter().sum();
            if !(total.is_finite() && total > 0.0) {
                return invalid(format!(
                    "kernel is not normalizable at cell {i}, action {a}: total weight {total}"
                ));
            }
            transition.extend(row.iter().map(|p| p / total));
            reward.push(match spec.reward {
                RewardShape::Bump { center, width, action_cost } => {
                    let z = (x - center) / width;
                    (-0.5 * z * z).exp() - action_cost * drift.abs()
                }
            });
        }
    }
    if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
        return invalid(format!("reward shape produced non-finite value {r}"));
    }
    let r_max = reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let r_max = if r_max > 0.0 { r_max } else { 1.0 };
    // Renormalized rows can drift from 1 by an ulp or two; fold the excess
    // into the largest entry so the simplex check sees an exact row.
    for row in transition.chunks_mut(n) {
        let total: f64 = row.iter().sum();
        let (jmax, _) = row.iter().enumerate().fold((0, f64::MIN), |b, (j, &p)| if p > b.1 { (j, p) } else { b });
        row[jmax] += 1.0 - total;
    }
    FiniteMdp::new(n, na, transition, reward, spec.gamma, r_max)
}
