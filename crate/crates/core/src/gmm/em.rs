use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{regularize_covariance, DEFAULT_RIDGE_SCALE};
use super::{normalize_log_weights, FitInfo, GaussianComponent, GmmModel, Responsibilities};
use crate::error::{Error, Result};

/// Responsibility mass below which a component counts as empty.
pub const DEGENERATE_MASS: f64 = 1e-8;

/// How EM picks its starting parameters when no warm start is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Means at `k` distinct data points chosen uniformly at random.
    RandomPoints { seed: u64 },
    /// Means given explicitly, one per component.
    Means(Vec<Vec<f64>>),
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::RandomPoints { seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub k: usize,
    pub init: InitStrategy,
    /// Stop once the relative log-likelihood change drops below this.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub ridge_scale: f64,
    /// Re-initializations allowed after a degenerate component.
    pub max_retries: usize,
    /// Independent random starts; the fit with the highest final
    /// log-likelihood wins. Ignored for explicit means and warm starts.
    #[serde(default = "default_n_init")]
    pub n_init: usize,
}

fn default_n_init() -> usize {
    10
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            k: 2,
            init: InitStrategy::default(),
            rel_tol: 1e-6,
            max_iter: 200,
            ridge_scale: DEFAULT_RIDGE_SCALE,
            max_retries: 5,
            n_init: default_n_init(),
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k", "must be positive"));
        }
        if !(self.rel_tol.is_finite() && self.rel_tol >= 0.0) {
            return Err(Error::config("rel_tol", "must be finite and non-negative"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be positive"));
        }
        if !(self.ridge_scale.is_finite() && self.ridge_scale >= 0.0) {
            return Err(Error::config("ridge_scale", "must be finite and non-negative"));
        }
        if self.n_init == 0 {
            return Err(Error::config("n_init", "must be positive"));
        }
        Ok(())
    }
}

fn check_data(data: &DMatrix<f64>, dim: usize) -> Result<()> {
    if data.nrows() == 0 {
        return Err(Error::Contract("data has no rows".into()));
    }
    if data.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: data.ncols(),
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("data contains non-finite values".into()));
    }
    Ok(())
}

/// Posterior responsibilities of every component for every row, and the
/// total log-likelihood `Σ_i log Σ_k π_k N(x_i | μ_k, Σ_k)`.
pub fn e_step(model: &GmmModel, data: &DMatrix<f64>) -> Result<(Responsibilities, f64)> {
    check_data(data, model.dim())?;
    let n = data.nrows();
    let k = model.k();
    let mut log_w = DMatrix::zeros(n, k);
    for (j, (c, f)) in model.components().iter().zip(model.factors()).enumerate() {
        let lw = c.weight.ln();
        for (i, v) in f.log_pdf_rows(data, &c.mean).into_iter().enumerate() {
            log_w[(i, j)] = lw + v;
        }
    }
    let mut resp = DMatrix::zeros(n, k);
    let mut total = 0.0;
    let mut row = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            row[j] = log_w[(i, j)];
        }
        let (p, lse) = normalize_log_weights(&row);
        if !lse.is_finite() {
            return Err(Error::Contract(format!(
                "row {i} has zero density under every component"
            )));
        }
        total += lse;
        for j in 0..k {
            resp[(i, j)] = p[j];
        }
    }
    Ok((Responsibilities(resp), total))
}

/// Output of one maximization step.
#[derive(Debug, Clone)]
pub struct MStep {
    pub components: Vec<GaussianComponent>,
    /// Whether some raw weighted covariance needed the ridge to factor.
    pub regularization_applied: bool,
}

/// Re-estimates weights, means and covariances from responsibilities.
///
/// Covariances are centred on the updated means, symmetrized, and passed
/// through [`regularize_covariance`].
pub fn m_step(data: &DMatrix<f64>, resp: &Responsibilities, ridge_scale: f64) -> Result<MStep> {
    let dim = data.ncols();
    check_data(data, dim)?;
    if resp.n() != data.nrows() {
        return Err(Error::DimensionMismatch {
            expected: data.nrows(),
            actual: resp.n(),
        });
    }
    let n = data.nrows() as f64;
    let p = resp.matrix();
    let mut components = Vec::with_capacity(resp.k());
    let mut regularized = false;
    for k in 0..resp.k() {
        let weights = p.column(k);
        let mass: f64 = weights.iter().sum();
        if mass.is_nan() || mass <= DEGENERATE_MASS {
            return Err(Error::DegenerateComponent { component: k, mass });
        }
        let mean: DVector<f64> = data.tr_mul(&weights) / mass;
        let mut centered = data.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let mut weighted = centered.clone();
        for (mut row, &w) in weighted.row_iter_mut().zip(weights.iter()) {
            row *= w;
        }
        let raw = centered.tr_mul(&weighted) / mass;
        let raw = (&raw + raw.transpose()) * 0.5;
        if raw.clone().cholesky().is_none() {
            regularized = true;
        }
        components.push(GaussianComponent {
            weight: mass / n,
            mean,
            covariance: regularize_covariance(&raw, ridge_scale)?,
        });
    }
    Ok(MStep {
        components,
        regularization_applied: regularized,
    })
}

fn diagonal_variance(data: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.nrows();
    let m = data.ncols();
    let mut out = DMatrix::zeros(m, m);
    if n < 2 {
        return out;
    }
    for (j, col) in data.column_iter().enumerate() {
        let mean = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        out[(j, j)] = ss / (n - 1) as f64;
    }
    out
}

fn initial_components(data: &DMatrix<f64>, opts: &FitOptions, attempt: usize) -> Result<Vec<GaussianComponent>> {
    let n = data.nrows();
    let dim = data.ncols();
    let cov = regularize_covariance(&diagonal_variance(data), opts.ridge_scale)?;
    let weight = 1.0 / opts.k as f64;
    let means: Vec<DVector<f64>> = match &opts.init {
        InitStrategy::RandomPoints { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
            rand::seq::index::sample(&mut rng, n, opts.k)
                .into_iter()
                .map(|i| data.row(i).transpose())
                .collect()
        }
        InitStrategy::Means(means) => {
            if means.len() != opts.k {
                return Err(Error::config(
                    "init",
                    format!("{} means given for k = {}", means.len(), opts.k),
                ));
            }
            if attempt > 0 {
                return Err(Error::FitFailure {
                    attempts: attempt,
                    reason: "explicit initial means led to a degenerate component".into(),
                });
            }
            means
                .iter()
                .map(|m| {
                    if m.len() != dim {
                        Err(Error::DimensionMismatch {
                            expected: dim,
                            actual: m.len(),
                        })
                    } else {
                        Ok(DVector::from_column_slice(m))
                    }
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(means
        .into_iter()
        .map(|mean| GaussianComponent {
            weight,
            mean,
            covariance: cov.clone(),
        })
        .collect())
}

/// Replaces component `k` of a warm start by a fresh one centred on the
/// point the mixture explains worst.
fn reseed_component(
    model: &GmmModel,
    k: usize,
    data: &DMatrix<f64>,
    ridge_scale: f64,
) -> Result<Vec<GaussianComponent>> {
    let mut worst = (0, f64::INFINITY);
    for (i, row) in data.row_iter().enumerate() {
        let v = model.log_density(&row.transpose())?;
        if v < worst.1 {
            worst = (i, v);
        }
    }
    let cov = regularize_covariance(&diagonal_variance(data), ridge_scale)?;
    let fresh = 1.0 / model.k() as f64;
    let mut comps = model.components().to_vec();
    let others: f64 = comps
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, c)| c.weight)
        .sum();
    for (j, c) in comps.iter_mut().enumerate() {
        if j == k {
            c.weight = fresh;
            c.mean = data.row(worst.0).transpose();
            c.covariance = cov.clone();
        } else if others > 0.0 {
            c.weight *= (1.0 - fresh) / others;
        } else {
            c.weight = (1.0 - fresh) / (model.k() - 1) as f64;
        }
    }
    renormalize(&mut comps);
    Ok(comps)
}

fn renormalize(comps: &mut [GaussianComponent]) {
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in comps.iter_mut() {
        c.weight /= total;
    }
}

enum Outcome {
    Done(GmmModel),
    Degenerate {
        last: GmmModel,
        component: usize,
        mass: f64,
    },
}

fn run_em(data: &DMatrix<f64>, start: Vec<GaussianComponent>, opts: &FitOptions, attempts: usize) -> Result<Outcome> {
    let mut model = GmmModel::new(start, FitInfo::default())?;
    let (mut resp, mut ll) = e_step(&model, data)?;
    let mut trace = vec![ll];
    let mut regularized = false;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let step = match m_step(data, &resp, opts.ridge_scale) {
            Ok(s) => s,
            Err(Error::DegenerateComponent { component, mass }) => {
                return Ok(Outcome::Degenerate {
                    last: model,
                    component,
                    mass,
                })
            }
            Err(e) => return Err(e),
        };
        let mut comps = step.components;
        renormalize(&mut comps);
        let candidate = GmmModel::new(comps, FitInfo::default())?;
        let (r, next) = e_step(&candidate, data)?;
        let change = (next - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        if next < ll {
            // the ridge makes the update inexact; keep the better iterate
            converged = change < opts.rel_tol;
            break;
        }
        iterations += 1;
        regularized |= step.regularization_applied;
        model = candidate;
        resp = r;
        trace.push(next);
        ll = next;
        if change < opts.rel_tol {
            converged = true;
            break;
        }
    }
    model.fit_info = FitInfo {
        iterations,
        final_log_likelihood: ll,
        converged,
        regularization_applied: regularized,
        log_likelihood_trace: trace,
        attempts,
    };
    Ok(Outcome::Done(model))
}

/// Fits a `k`-component mixture by alternating [`e_step`] and [`m_step`].
///
/// With `warm_start` the iteration begins from that model's parameters;
/// otherwise from `opts.init`. A component that loses all responsibility
/// mass triggers a re-initialization, up to `opts.max_retries` times.
///
/// The covariance ridge makes each update slightly inexact, which can lower
/// the likelihood when a component holds few points relative to the
/// dimension. Iteration stops at the first such step and the previous
/// iterate is returned, so `fit_info.log_likelihood_trace` never decreases.
pub fn fit(data: &DMatrix<f64>, opts: &FitOptions, warm_start: Option<&GmmModel>) -> Result<GmmModel> {
    opts.validate()?;
    let n = data.nrows();
    if n < opts.k {
        return Err(Error::Contract(format!("need at least k = {} points, got {n}", opts.k)));
    }
    check_data(data, data.ncols())?;
    if data.ncols() == 0 {
        return Err(Error::Contract("data has no columns".into()));
    }
    let restarts = match (&opts.init, warm_start) {
        (InitStrategy::RandomPoints { .. }, None) if opts.k > 1 => opts.n_init,
        _ => 1,
    };
    let mut best: Option<GmmModel> = None;
    for restart in 0..restarts {
        let model = fit_once(data, opts, warm_start, restart * (opts.max_retries + 1))?;
        let better = best
            .as_ref()
            .is_none_or(|b| model.fit_info.final_log_likelihood > b.fit_info.final_log_likelihood);
        if better {
            best = Some(model);
        }
    }
    best.ok_or_else(|| Error::Contract("no restarts".into()))
}

fn fit_once(data: &DMatrix<f64>, opts: &FitOptions, warm_start: Option<&GmmModel>, offset: usize) -> Result<GmmModel> {
    let mut start = match warm_start {
        Some(w) => {
            if w.k() != opts.k {
                return Err(Error::Contract(format!(
                    "warm start has {} components, k = {}",
                    w.k(),
                    opts.k
                )));
            }
            if w.dim() != data.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: w.dim(),
                    actual: data.ncols(),
                });
            }
            w.components().to_vec()
        }
        None => initial_components(data, opts, offset)?,
    };
    let mut last_reason = String::new();
    for attempt in 0..=opts.max_retries {
        match run_em(data, start, opts, attempt + 1)? {
            Outcome::Done(model) => return Ok(model),
            Outcome::Degenerate { last, component, mass } => {
                last_reason = format!("component {component} collapsed (mass {mass:e})");
                start = match warm_start {
                    Some(_) => reseed_component(&last, component, data, opts.ridge_scale)?,
                    None => initial_components(data, opts, offset + attempt + 1)?,
                };
            }
        }
    }
    Err(Error::FitFailure {
        attempts: opts.max_retries + 1,
        reason: last_reason,
    })
}
