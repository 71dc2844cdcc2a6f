//! Bayesian ridge regression by evidence approximation.
//!
//! Model: y = Xw + b + noise, noise precision `alpha`, isotropic Gaussian
//! weight prior with precision `lambda`. Both precisions are re-estimated
//! from the data (MacKay fixed-point updates) instead of sweeping a
//! regularization grid.
//!
//! `RidgeBasis` carries the centered design matrix and the eigendecomposition
//! of X^T X; every `fit` against the same design then costs O(p) per
//! update iteration, which is what makes per-delay memory-capacity readouts
//! affordable.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RidgeError {
    #[error("design matrix has {rows} rows but target has {targets}")]
    DimensionMismatch { rows: usize, targets: usize },
    #[error("design matrix must have at least one row and one column")]
    EmptyDesign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeConfig {
    pub max_iter: usize,
    /// Relative change in the two precisions below which iteration stops.
    pub tol: f64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self { max_iter: 3000, tol: 1e-6 }
    }
}

// Small Gamma hyperpriors on both precisions keep the updates finite when
// the residual or the weight norm collapses to zero.
const PRIOR: f64 = 1e-6;

pub struct RidgeBasis {
    xc: DMatrix<f64>,
    x_mean: DVector<f64>,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub weights: DVector<f64>,
    pub intercept: f64,
    /// Noise precision.
    pub alpha: f64,
    /// Weight precision.
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RidgeBasis {
    pub fn new(x: &DMatrix<f64>) -> Result<Self, RidgeError> {
        let (rows, cols) = x.shape();
        if rows == 0 || cols == 0 {
            return Err(RidgeError::EmptyDesign);
        }
        let x_mean = DVector::from_fn(cols, |j, _| x.column(j).sum() / rows as f64);
        let mut xc = x.clone();
        for j in 0..cols {
            let mean = x_mean[j];
            for i in 0..rows {
                xc[(i, j)] -= mean;
            }
        }
        let xtx = xc.tr_mul(&xc);
        let eigen = SymmetricEigen::new(xtx);
        let eigvals = eigen.eigenvalues.map(|s: f64| s.max(0.0));
        Ok(Self { xc, x_mean, eigvals, eigvecs: eigen.eigenvectors })
    }

    pub fn n_samples(&self) -> usize {
        self.xc.nrows()
    }

    pub fn fit(&self, y: &[f64], cfg: &RidgeConfig) -> Result<RidgeFit, RidgeError> {
        let m = self.xc.nrows();
        if y.len() != m {
            return Err(RidgeError::DimensionMismatch { rows: m, targets: y.len() });
        }
        let y_mean = y.iter().sum::<f64>() / m as f64;
        let yc = DVector::from_fn(m, |i, _| y[i] - y_mean);
        let yty = yc.dot(&yc);
        let q = self.eigvecs.tr_mul(&self.xc.tr_mul(&yc));

        let var_y = yty / m as f64;
        let mut alpha = if var_y > f64::MIN_POSITIVE { 1.0 / var_y } else { 1.0 };
        let mut lambda = 1.0f64;
        let p = self.eigvals.len();
        let mut coef_eig = DVector::zeros(p);
        let mut iterations = 0;
        let mut converged = false;

        while iterations < cfg.max_iter {
            iterations += 1;
            let mut gamma = 0.0;
            let mut coef_sq = 0.0;
            let mut fit_term = 0.0;
            let mut quad_term = 0.0;
            for i in 0..p {
                let s = self.eigvals[i];
                let c = alpha * q[i] / (lambda + alpha * s);
                coef_eig[i] = c;
                gamma += alpha * s / (lambda + alpha * s);
                coef_sq += c * c;
                fit_term += c * q[i];
                quad_term += s * c * c;
            }
            let sse = (yty - 2.0 * fit_term + quad_term).max(0.0);
            let lambda_new = (gamma + 2.0 * PRIOR) / (coef_sq + 2.0 * PRIOR);
            let alpha_new = (m as f64 - gamma + 2.0 * PRIOR) / (sse + 2.0 * PRIOR);
            let change = (alpha_new - alpha).abs() / alpha.abs().max(1.0)
                + (lambda_new - lambda).abs() / lambda.abs().max(1.0);
            alpha = alpha_new;
            lambda = lambda_new;
            if change < cfg.tol {
                converged = true;
                break;
            }
        }
        for i in 0..p {
            coef_eig[i] = alpha * q[i] / (lambda + alpha * self.eigvals[i]);
        }
        let weights = &self.eigvecs * &coef_eig;
        let intercept = y_mean - self.x_mean.dot(&weights);
        Ok(RidgeFit { weights, intercept, alpha, lambda, iterations, converged })
    }
}

impl RidgeFit {
    /// Predictions for an uncentered design matrix.
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut out = x * &self.weights;
        out.add_scalar_mut(self.intercept);
        out
    }
}
