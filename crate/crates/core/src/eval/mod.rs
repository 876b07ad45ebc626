//! Experiment harness: labelled Bob/Eve streams, threshold sweeps, ROC
//! curves and operating points.

mod experiment;
mod roc;
mod stream;

use serde::{Deserialize, Serialize};

use crate::auth::{AuthConfig, RefitMode, TrainingMode};
use crate::baseline::UpdateRule;
use crate::channel::{subsample_indices, ChannelProfile, NoiseModel};
use crate::error::{Error, Result};
use crate::gmm::FitOptions;

pub use experiment::{
    detector_scores, m_sweep, m_sweep_on, run_experiment, run_on_stream, sweep_roc, sweep_roc_on, DetectorKind,
    ExperimentSummary, SummaryPoint, M_SWEEP_VALUES, SUMMARY_P_FA_TARGETS,
};
pub use roc::{operating_point, write_roc_csv, ConfusionCounts, OperatingPoint, RocCurve, RocPoint, ROC_CSV_HEADER};
pub use stream::{build_stream, Stream};

/// Default number of uniformly spaced posterior thresholds.
pub const DEFAULT_THRESHOLD_POINTS: usize = 513;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub bob_link: u64,
    pub eve_link: u64,
    pub noise: u64,
    pub attack: u64,
    /// Seeds the mixture initialization.
    #[serde(default)]
    pub fit: u64,
}

impl Seeds {
    /// Seeds derived from one base value.
    pub fn from_base(base: u64) -> Self {
        Self {
            bob_link: base.wrapping_add(1),
            eve_link: base.wrapping_add(2),
            noise: base.wrapping_add(3),
            attack: base.wrapping_add(4),
            fit: base.wrapping_add(5),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Self::from_base(0)
    }
}

/// `n` evenly spaced thresholds covering `[0, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub m_subcarriers: usize,
    pub block_size: usize,
    pub num_test_blocks: usize,
    pub attack_intensity: f64,
    pub snr_db: f64,
    pub profile: ChannelProfile,
    pub seeds: Seeds,
    /// Posterior thresholds for the GMM sweep.
    pub threshold_grid: Vec<f64>,
    /// Per-message Gauss-Markov coefficient of both links; 1 is static.
    pub drift_rho: f64,
    pub training_mode: TrainingMode,
    pub refit_mode: RefitMode,
    pub standardize: bool,
    pub ridge_scale: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub mse_update_rule: UpdateRule,
    /// Quantile count for the MSE threshold grid.
    pub mse_grid_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let fit = FitOptions::default();
        Self {
            m_subcarriers: 48,
            block_size: 1000,
            num_test_blocks: 99,
            attack_intensity: 0.5,
            snr_db: 20.0,
            profile: ChannelProfile::default(),
            seeds: Seeds::default(),
            threshold_grid: uniform_grid(DEFAULT_THRESHOLD_POINTS),
            drift_rho: 1.0,
            training_mode: TrainingMode::default(),
            refit_mode: RefitMode::All,
            standardize: false,
            ridge_scale: fit.ridge_scale,
            rel_tol: fit.rel_tol,
            max_iter: fit.max_iter,
            mse_update_rule: UpdateRule::Frozen,
            mse_grid_points: DEFAULT_THRESHOLD_POINTS,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        NoiseModel::new(self.snr_db)?;
        subsample_indices(self.profile.active_carriers, self.m_subcarriers)?;
        if self.block_size < 2 {
            return Err(Error::config("block_size", "must be at least 2"));
        }
        if self.num_test_blocks == 0 {
            return Err(Error::config("num_test_blocks", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.attack_intensity) {
            return Err(Error::config(
                "attack_intensity",
                format!("{} is outside [0, 1]", self.attack_intensity),
            ));
        }
        if self.threshold_grid.is_empty() {
            return Err(Error::config("threshold_grid", "must not be empty"));
        }
        if self.threshold_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::config("threshold_grid", "values must lie in [0, 1]"));
        }
        if self.threshold_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("threshold_grid", "must be strictly increasing"));
        }
        if !(0.0..=1.0).contains(&self.drift_rho) {
            return Err(Error::config("drift_rho", "must lie in [0, 1]"));
        }
        if self.mse_grid_points == 0 {
            return Err(Error::config("mse_grid_points", "must be positive"));
        }
        self.auth_config(0.5).fit.validate()
    }

    /// Authenticator settings implied by this experiment.
    pub fn auth_config(&self, threshold: f64) -> AuthConfig {
        AuthConfig {
            block_size: self.block_size,
            threshold,
            fit: FitOptions {
                k: crate::auth::NUM_COMPONENTS,
                init: crate::gmm::InitStrategy::RandomPoints { seed: self.seeds.fit },
                rel_tol: self.rel_tol,
                max_iter: self.max_iter,
                ridge_scale: self.ridge_scale,
                ..FitOptions::default()
            },
            training_mode: self.training_mode,
            refit_mode: self.refit_mode,
            standardize: self.standardize,
        }
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel { snr_db: self.snr_db }
    }
}
