//! Gaussian mixture models with full covariances, fitted by EM.
//!
//! All density work happens in the log domain; each component keeps a
//! Cholesky factor of its covariance that serves both the determinant and
//! the Mahalanobis solves.

mod em;
pub mod linalg;
pub mod snapshot;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use linalg::GaussianFactor;

pub use em::{e_step, fit, m_step, FitOptions, InitStrategy, MStep};
pub use linalg::{regularize_covariance, DEFAULT_RIDGE_SCALE, MIN_RIDGE};

/// Tolerance on `Σ π_k = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// One weighted Gaussian of a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Diagnostics recorded by [`fit`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitInfo {
    pub iterations: usize,
    pub final_log_likelihood: f64,
    pub converged: bool,
    /// Set when some unregularized covariance was not positive definite.
    pub regularization_applied: bool,
    /// Total log-likelihood before the first M-step and after each one.
    #[serde(default)]
    pub log_likelihood_trace: Vec<f64>,
    /// Number of (re)initializations consumed, including the first.
    #[serde(default)]
    pub attempts: usize,
}

/// A validated mixture. Immutable once built.
#[derive(Debug, Clone)]
pub struct GmmModel {
    components: Vec<GaussianComponent>,
    factors: Vec<GaussianFactor>,
    dim: usize,
    pub fit_info: FitInfo,
}

impl PartialEq for GmmModel {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components && self.fit_info == other.fit_info
    }
}

impl GmmModel {
    pub fn new(components: Vec<GaussianComponent>, fit_info: FitInfo) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Contract("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::Contract("mixture dimension must be positive".into()));
        }
        let mut total = 0.0;
        let mut factors = Vec::with_capacity(components.len());
        for (k, c) in components.iter().enumerate() {
            if c.mean.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: c.mean.len(),
                });
            }
            if c.covariance.nrows() != dim || c.covariance.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: c.covariance.nrows().max(c.covariance.ncols()),
                });
            }
            if !(c.weight.is_finite() && (0.0..=1.0).contains(&c.weight)) {
                return Err(Error::Contract(format!("weight of component {k} is {}", c.weight)));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("mean of component {k} is not finite")));
            }
            if c.covariance != c.covariance.transpose() {
                return Err(Error::Contract(format!("covariance of component {k} is not symmetric")));
            }
            factors.push(GaussianFactor::new(&c.covariance)?);
            total += c.weight;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Contract(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            components,
            factors,
            dim,
            fit_info,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("data point is not finite".into()));
        }
        Ok(())
    }

    /// `log π_k + log N(x | μ_k, Σ_k)` for each component.
    pub fn weighted_log_densities(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(self
            .components
            .iter()
            .zip(&self.factors)
            .map(|(c, f)| c.weight.ln() + f.log_pdf(x, &c.mean))
            .collect())
    }

    /// `log Σ_k π_k N(x | μ_k, Σ_k)`.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(log_sum_exp(&self.weighted_log_densities(x)?))
    }

    /// Posterior component probabilities for a single point.
    pub fn posterior(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        let lw = self.weighted_log_densities(x)?;
        Ok(normalize_log_weights(&lw).0)
    }

    pub(crate) fn factors(&self) -> &[GaussianFactor] {
        &self.factors
    }
}

/// Free-function form of [`GmmModel::log_density`].
pub fn log_density(model: &GmmModel, x: &DVector<f64>) -> Result<f64> {
    model.log_density(x)
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Turns log weights into probabilities summing to one; also returns the
/// log normalizer.
pub(crate) fn normalize_log_weights(values: &[f64]) -> (Vec<f64>, f64) {
    let lse = log_sum_exp(values);
    let mut p: Vec<f64> = values.iter().map(|v| (v - lse).exp()).collect();
    let s: f64 = p.iter().sum();
    for v in &mut p {
        *v /= s;
    }
    (p, lse)
}

/// Posterior probabilities `p_{i,k}`, one row per data point.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities(DMatrix<f64>);

impl Responsibilities {
    /// Validates that every row is a probability vector.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        for (i, row) in matrix.row_iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Contract(format!("row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Contract(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    /// Index of the most probable component for each row, ties to the lower index.
    pub fn hard_assignments(&self) -> Vec<usize> {
        self.0
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Stacks equally sized vectors into an `N x M` data matrix.
pub fn data_matrix<'a, I>(rows: I) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let rows: Vec<&[f64]> = rows.into_iter().collect();
    let m = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]))
}
