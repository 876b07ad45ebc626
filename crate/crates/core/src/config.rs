//! Flat key-value experiment configuration.
//!
//! A config file is a TOML document whose keys mirror the fields of
//! [`ExperimentConfig`], with the nested channel profile and seeds flattened
//! to top-level keys. Every key is optional; missing keys keep their
//! defaults. Layers can be stacked with [`FlatConfig::overlay`], which is how
//! command-line flags override a file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::auth::{RefitMode, TrainingMode};
use crate::baseline::UpdateRule;
use crate::error::{Error, Result};
use crate::eval::{uniform_grid, ExperimentConfig, Seeds};

/// Environment variable supplying the base seed when the config has none.
pub const SEED_ENV_VAR: &str = "PHYAUTH_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingModeName {
    Background,
    Split,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_subcarriers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_test_blocks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_intensity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_taps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fft_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub active_carriers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_seed: Option<u64>,

    /// Base value from which all unset per-stream seeds are derived.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bob_link_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eve_link_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_seed: Option<u64>,

    /// Size of the uniform GMM threshold grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_mode: Option<TrainingModeName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refit_mode: Option<RefitMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardize: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse_update_rule: Option<UpdateRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse_grid_points: Option<usize>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr; $($f:ident),* $(,)?) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl FlatConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            reason: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Keys set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &FlatConfig) -> Self {
        overlay_fields!(self, top;
            m_subcarriers, block_size, num_test_blocks, attack_intensity, snr_db,
            num_taps, delay_decay, fft_size, active_carriers, profile_seed,
            seed, bob_link_seed, eve_link_seed, noise_seed, attack_seed, fit_seed,
            threshold_points, drift_rho, training_mode, background_scale, refit_mode,
            standardize, ridge_scale, rel_tol, max_iter, mse_update_rule, mse_grid_points,
        );
        self
    }

    /// Resolves the document into a validated [`ExperimentConfig`].
    ///
    /// `default_seed` is used as the base seed when the document sets none.
    pub fn resolve(&self, default_seed: Option<u64>) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $( if let Some(v) = self.$src { c.$($dst).+ = v; } )*
            };
        }
        set!(
            m_subcarriers => m_subcarriers,
            block_size => block_size,
            num_test_blocks => num_test_blocks,
            attack_intensity => attack_intensity,
            snr_db => snr_db,
            num_taps => profile.num_taps,
            delay_decay => profile.delay_decay,
            fft_size => profile.fft_size,
            active_carriers => profile.active_carriers,
            profile_seed => profile.seed,
            drift_rho => drift_rho,
            refit_mode => refit_mode,
            standardize => standardize,
            ridge_scale => ridge_scale,
            rel_tol => rel_tol,
            max_iter => max_iter,
            mse_update_rule => mse_update_rule,
            mse_grid_points => mse_grid_points,
        );
        if let Some(base) = self.seed.or(default_seed) {
            c.seeds = Seeds::from_base(base);
        }
        set!(
            bob_link_seed => seeds.bob_link,
            eve_link_seed => seeds.eve_link,
            noise_seed => seeds.noise,
            attack_seed => seeds.attack,
            fit_seed => seeds.fit,
        );
        if let Some(n) = self.threshold_points {
            if n < 2 {
                return Err(Error::config("threshold_points", "must be at least 2"));
            }
            c.threshold_grid = uniform_grid(n);
        }
        c.training_mode = match (self.training_mode, self.background_scale) {
            (Some(TrainingModeName::Split), Some(_)) => {
                return Err(Error::config(
                    "background_scale",
                    "only applies to training_mode = \"background\"",
                ))
            }
            (Some(TrainingModeName::Split), None) => TrainingMode::Split,
            (_, Some(scale)) => {
                if !(scale.is_finite() && scale > 1.0) {
                    return Err(Error::config("background_scale", "must be finite and above 1"));
                }
                TrainingMode::Background { scale }
            }
            (_, None) => TrainingMode::default(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Flat form of an experiment config. The threshold grid is recorded by
    /// its size only.
    pub fn from_experiment(c: &ExperimentConfig) -> Self {
        let (training_mode, background_scale) = match c.training_mode {
            TrainingMode::Background { scale } => (TrainingModeName::Background, Some(scale)),
            TrainingMode::Split => (TrainingModeName::Split, None),
        };
        Self {
            m_subcarriers: Some(c.m_subcarriers),
            block_size: Some(c.block_size),
            num_test_blocks: Some(c.num_test_blocks),
            attack_intensity: Some(c.attack_intensity),
            snr_db: Some(c.snr_db),
            num_taps: Some(c.profile.num_taps),
            delay_decay: Some(c.profile.delay_decay),
            fft_size: Some(c.profile.fft_size),
            active_carriers: Some(c.profile.active_carriers),
            profile_seed: Some(c.profile.seed),
            seed: None,
            bob_link_seed: Some(c.seeds.bob_link),
            eve_link_seed: Some(c.seeds.eve_link),
            noise_seed: Some(c.seeds.noise),
            attack_seed: Some(c.seeds.attack),
            fit_seed: Some(c.seeds.fit),
            threshold_points: Some(c.threshold_grid.len()),
            drift_rho: Some(c.drift_rho),
            training_mode: Some(training_mode),
            background_scale,
            refit_mode: Some(c.refit_mode),
            standardize: Some(c.standardize),
            ridge_scale: Some(c.ridge_scale),
            rel_tol: Some(c.rel_tol),
            max_iter: Some(c.max_iter),
            mse_update_rule: Some(c.mse_update_rule),
            mse_grid_points: Some(c.mse_grid_points),
        }
    }
}

/// Base seed from [`SEED_ENV_VAR`], if set.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::config("PHYAUTH_SEED", format!("`{v}` is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::config("PHYAUTH_SEED", e.to_string())),
    }
}
