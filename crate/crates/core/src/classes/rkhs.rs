use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::FeatureMap;
use crate::error::{invalid, Result};

/// Largest domain whose Gram matrix is cached and PSD-checked in full.
const GRAM_CACHE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(−‖x − y‖²/(2h²))`.
    Gaussian { bandwidth: f64 },
    /// `exp(−‖x − y‖/h)`.
    Laplacian { bandwidth: f64 },
    /// `xᵀy`.
    Linear,
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Gaussian { bandwidth } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
            Kernel::Laplacian { bandwidth } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2.sqrt() / bandwidth).exp()
            }
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gaussian { bandwidth } | Kernel::Laplacian { bandwidth } if !(bandwidth.is_finite() && bandwidth > 0.0) => {
                invalid(format!("kernel bandwidth {bandwidth} must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// `{f ∈ 𝓗_K : ‖f‖_𝓗 ≤ W}` on a finite domain of embedded pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkhsClass {
    pub(crate) inputs: FeatureMap,
    pub(crate) kernel: Kernel,
    pub(crate) kappa: f64,
    pub(crate) norm_bound: f64,
    gram: Option<Vec<f64>>,
}

impl RkhsClass {
    /// `κ` is the exhaustive `max √K(x,x)` over the domain; the domain Gram
    /// matrix is checked PSD (smallest eigenvalue ≥ −1e-9).
    pub fn new(inputs: FeatureMap, kernel: Kernel, norm_bound: f64) -> Result<Self> {
        kernel.validate()?;
        if !(norm_bound.is_finite() && norm_bound > 0.0) {
            return invalid(format!("RKHS norm bound W = {norm_bound} must be a positive real"));
        }
        let n = inputs.n_pairs();
        let kappa = (0..n).map(|i| kernel.eval(inputs.row(i), inputs.row(i))).fold(0.0, f64::max).sqrt();
        if !(kappa > 0.0) {
            return invalid("kernel vanishes on the diagonal of the domain");
        }
        let gram = if n <= GRAM_CACHE_LIMIT {
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = kernel.eval(inputs.row(i), inputs.row(j));
                    g[i * n + j] = v;
                    g[j * n + i] = v;
                }
            }
            let min_eig = min_eigenvalue(&DMatrix::from_row_slice(n, n, &g));
            if min_eig < -1e-9 {
                return invalid(format!("kernel Gram matrix has eigenvalue {min_eig} < -1e-9 (not PSD)"));
            }
            Some(g)
        } else {
            None
        };
        Ok(Self { inputs, kernel, kappa, norm_bound, gram })
    }

    pub fn inputs(&self) -> &FeatureMap {
        &self.inputs
    }
    pub fn kernel(&self) -> Kernel {
        self.kernel
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// `K(x_i, x_j)` for pair indices.
    pub fn kernel_at(&self, i: usize, j: usize) -> f64 {
        match &self.gram {
            Some(g) => g[i * self.inputs.n_pairs() + j],
            None => self.kernel.eval(self.inputs.row(i), self.inputs.row(j)),
        }
    }

    /// Gram matrix of a list of pair indices.
    pub fn gram_of(&self, points: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(points.len(), points.len(), |i, j| self.kernel_at(points[i], points[j]))
    }

    /// Smallest eigenvalue of the Gram matrix of `points`.
    pub fn min_gram_eigenvalue(&self, points: &[usize]) -> f64 {
        min_eigenvalue(&self.gram_of(points))
    }
}

fn min_eigenvalue(g: &DMatrix<f64>) -> f64 {
    if g.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(g.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
