use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// A class whose supremum `sup_a Σ_t ε_t a(z_t)` can be accumulated one
/// signed point at a time.
pub trait SequentialClass: Sync {
    type Acc: Clone + Send;
    /// Number of admissible points `z`.
    fn n_points(&self) -> usize;
    fn empty(&self) -> Self::Acc;
    fn push(&self, acc: &mut Self::Acc, point: usize, sign: f64);
    fn sup(&self, acc: &Self::Acc) -> f64;
}

// ── Finite families ──────────────────────────────────────────────────

/// Finite family given by its values on a finite point set.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteFamily {
    n_members: usize,
    n_points: usize,
    /// Point-major: `values[p * n_members + m]`.
    values: Vec<f64>,
}

impl FiniteFamily {
    /// `members[m][p]` is member `m` at point `p`.
    pub fn new(members: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = members.first() else {
            return invalid("function family must be nonempty");
        };
        let n_points = first.len();
        if n_points == 0 || members.iter().any(|m| m.len() != n_points) {
            return invalid("every member must be evaluated on the same nonempty point set");
        }
        if members.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("family values must be finite");
        }
        let n_members = members.len();
        let mut values = vec![0.0; n_points * n_members];
        for (m, row) in members.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                values[p * n_members + m] = v;
            }
        }
        Ok(Self { n_members, n_points, values })
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }
    pub fn value(&self, member: usize, point: usize) -> f64 {
        self.values[point * self.n_members + member]
    }
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Every member multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self { values: self.values.iter().map(|v| lambda * v).collect(), ..self.clone() }
    }

    /// Members squared pointwise.
    pub fn squared(&self) -> Self {
        Self { values: self.values.iter().map(|v| v * v).collect(), ..self.clone() }
    }
}

impl SequentialClass for FiniteFamily {
    type Acc = Vec<f64>;

    fn n_points(&self) -> usize {
        self.n_points
    }
    fn empty(&self) -> Vec<f64> {
        vec![0.0; self.n_members]
    }
    fn push(&self, acc: &mut Vec<f64>, point: usize, sign: f64) {
        let row = &self.values[point * self.n_members..(point + 1) * self.n_members];
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += sign * v;
        }
    }
    fn sup(&self, acc: &Vec<f64>) -> f64 {
        acc.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

// ── Linear ball ──────────────────────────────────────────────────────

/// `{z ↦ θᵀφ(z) : ‖θ‖₂ ≤ W}`; the inner supremum is `W ‖Σ ε_t φ(z_t)‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBall {
    features: Vec<DVector<f64>>,
    radius: f64,
}

impl LinearBall {
    pub fn new(features: Vec<DVector<f64>>, radius: f64) -> Result<Self> {
        let Some(first) = features.first() else {
            return invalid("linear ball needs at least one point");
        };
        if features.iter().any(|f| f.len() != first.len()) {
            return invalid("all feature vectors must share one dimension");
        }
        if !(radius.is_finite() && radius > 0.0) {
            return invalid(format!("radius {radius} must be a positive real"));
        }
        Ok(Self { features, radius })
    }
}

impl SequentialClass for LinearBall {
    type Acc = DVector<f64>;

    fn n_points(&self) -> usize {
        self.features.len()
    }
    fn empty(&self) -> DVector<f64> {
        DVector::zeros(self.features[0].len())
    }
    fn push(&self, acc: &mut DVector<f64>, point: usize, sign: f64) {
        acc.axpy(sign, &self.features[point], 1.0);
    }
    fn sup(&self, acc: &DVector<f64>) -> f64 {
        self.radius * acc.norm()
    }
}

// ── RKHS ball ────────────────────────────────────────────────────────

/// `{f : ‖f‖_𝓗 ≤ W}`; the inner supremum is `W (cᵀGc)^{1/2}` where `c`
/// holds the signed visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsBall {
    gram: DMatrix<f64>,
    radius: f64,
}

impl RkhsBall {
    pub fn new(gram: DMatrix<f64>, radius: f64) -> Result<Self> {
        if gram.nrows() == 0 || !gram.is_square() {
            return invalid("gram matrix must be square and nonempty");
        }
        if !(radius.is_finite() && radius > 0.0) {
            return invalid(format!("radius {radius} must be a positive real"));
        }
        Ok(Self { gram, radius })
    }
}

/// `(Gc, cᵀGc)`.
#[derive(Debug, Clone)]
pub struct RkhsAcc {
    gc: DVector<f64>,
    quad: f64,
}

impl SequentialClass for RkhsBall {
    type Acc = RkhsAcc;

    fn n_points(&self) -> usize {
        self.gram.nrows()
    }
    fn empty(&self) -> RkhsAcc {
        RkhsAcc { gc: DVector::zeros(self.gram.nrows()), quad: 0.0 }
    }
    fn push(&self, acc: &mut RkhsAcc, point: usize, sign: f64) {
        acc.quad += 2.0 * sign * acc.gc[point] + self.gram[(point, point)];
        acc.gc.axpy(sign, &self.gram.column(point), 1.0);
    }
    fn sup(&self, acc: &RkhsAcc) -> f64 {
        self.radius * acc.quad.max(0.0).sqrt()
    }
}
