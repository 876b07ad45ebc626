//! Covariance conditioning and Cholesky-based Gaussian evaluation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest ridge ever added to a covariance diagonal.
pub const MIN_RIDGE: f64 = 1e-10;

/// Default ridge, relative to the mean variance `trace(sigma)/M`.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-12;

fn check_symmetric(sigma: &DMatrix<f64>) -> Result<()> {
    if !sigma.is_square() {
        return Err(Error::Contract(format!(
            "covariance must be square, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let n = sigma.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (sigma[(i, j)], sigma[(j, i)]);
            let scale = a.abs().max(b.abs()).max(1.0);
            let gap = (a - b).abs();
            if gap.is_nan() || gap > SYMMETRY_TOL * scale {
                return Err(Error::Contract(format!(
                    "covariance is not symmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
        }
    }
    Ok(())
}

/// Adds `eps * I` with `eps = max(ridge_scale * trace(sigma) / M, MIN_RIDGE)`.
///
/// The result is exactly symmetric and is verified to admit a Cholesky
/// factorization.
pub fn regularize_covariance(sigma: &DMatrix<f64>, ridge_scale: f64) -> Result<DMatrix<f64>> {
    check_symmetric(sigma)?;
    if !(ridge_scale.is_finite() && ridge_scale >= 0.0) {
        return Err(Error::config("ridge_scale", "must be finite and non-negative"));
    }
    let m = sigma.nrows();
    if m == 0 {
        return Err(Error::Contract("covariance must be at least 1x1".into()));
    }
    let eps = (ridge_scale * sigma.trace() / m as f64).max(MIN_RIDGE);
    let mut out = (sigma + sigma.transpose()) * 0.5;
    for i in 0..m {
        out[(i, i)] += eps;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    out.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(out)
}

/// Cached factorization of one component's covariance.
#[derive(Debug, Clone)]
pub(crate) struct GaussianFactor {
    lower: DMatrix<f64>,
    /// `-0.5 * (M log 2π + log det Σ)`
    log_norm: f64,
}

impl GaussianFactor {
    pub(crate) fn new(covariance: &DMatrix<f64>) -> Result<Self> {
        let m = covariance.nrows();
        let chol = covariance.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let lower = chol.unpack();
        let log_det: f64 = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let log_norm = -0.5 * (m as f64 * (2.0 * PI).ln() + log_det);
        Ok(Self { lower, log_norm })
    }

    /// `log N(x | mean, Σ)` for every row of `data`.
    pub(crate) fn log_pdf_rows(&self, data: &DMatrix<f64>, mean: &DVector<f64>) -> Vec<f64> {
        // Columns of `centered` are x_i - mean; solve L z_i = x_i - mean.
        let mut centered = data.transpose();
        for mut col in centered.column_iter_mut() {
            col -= mean;
        }
        self.lower.solve_lower_triangular_mut(&mut centered);
        centered
            .column_iter()
            .map(|z| self.log_norm - 0.5 * z.norm_squared())
            .collect()
    }

    pub(crate) fn log_pdf(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let mut z = x - mean;
        self.lower.solve_lower_triangular_mut(&mut z);
        self.log_norm - 0.5 * z.norm_squared()
    }
}
