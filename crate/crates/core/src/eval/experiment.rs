use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::roc::{operating_point, ConfusionCounts, OperatingPoint, RocCurve, RocPoint};
use super::stream::{build_stream, Stream};
use super::ExperimentConfig;
use crate::auth::{train_initial, AuthenticatorState, RefitMode};
use crate::baseline::{mse_distance, MseDetector, UpdateRule};
use crate::channel::{subsample_indices, Sender};
use crate::error::{Error, Result};

/// Subcarrier counts compared by [`m_sweep`].
pub const M_SWEEP_VALUES: [usize; 5] = [3, 6, 12, 24, 48];

/// False-alarm targets reported in an [`ExperimentSummary`].
pub const SUMMARY_P_FA_TARGETS: [f64; 3] = [0.001, 0.01, 0.0583];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Gmm,
    Mse,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Gmm => "gmm",
            DetectorKind::Mse => "mse",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gmm" => Ok(DetectorKind::Gmm),
            "mse" => Ok(DetectorKind::Mse),
            other => Err(Error::config("detector", format!("unknown detector `{other}`"))),
        }
    }
}

enum Detector {
    Gmm(Box<AuthenticatorState>),
    Mse(MseDetector),
}

impl Detector {
    fn train(stream: &Stream, config: &ExperimentConfig, kind: DetectorKind, threshold: f64) -> Result<Self> {
        Ok(match kind {
            DetectorKind::Gmm => Detector::Gmm(Box::new(train_initial(
                &stream.training,
                &config.auth_config(threshold),
            )?)),
            DetectorKind::Mse => Detector::Mse(MseDetector::from_training(
                &stream.training,
                threshold,
                config.mse_update_rule,
            )?),
        })
    }
}

fn threshold_independent(config: &ExperimentConfig, kind: DetectorKind) -> bool {
    match kind {
        DetectorKind::Gmm => config.refit_mode == RefitMode::All,
        DetectorKind::Mse => config.mse_update_rule == UpdateRule::Frozen,
    }
}

/// Runs one detector over the test part of `stream` at a fixed threshold,
/// with online updates exactly as a deployment would apply them.
pub fn run_on_stream(
    stream: &Stream,
    config: &ExperimentConfig,
    kind: DetectorKind,
    threshold: f64,
) -> Result<ConfusionCounts> {
    let mut det = Detector::train(stream, config, kind, threshold)?;
    let mut counts = ConfusionCounts::default();
    for r in &stream.test {
        let decision = match &mut det {
            Detector::Gmm(s) => s.classify(&r.estimate)?,
            Detector::Mse(d) => d.classify(&r.estimate)?,
        };
        counts.record(r.true_sender == Sender::Eve, !decision.accepted());
    }
    Ok(counts)
}

/// Builds the configured stream and runs one detector over it.
pub fn run_experiment(config: &ExperimentConfig, kind: DetectorKind, threshold: f64) -> Result<ConfusionCounts> {
    let stream = build_stream(config)?;
    run_on_stream(&stream, config, kind, threshold)
}

/// Per-message scores for detectors whose trajectory does not depend on the
/// threshold: the Bob posterior for the GMM, the MSE distance for the
/// baseline.
///
/// Fails with a contract error for update rules that feed decisions back
/// into the detector.
pub fn detector_scores(stream: &Stream, config: &ExperimentConfig, kind: DetectorKind) -> Result<Vec<f64>> {
    if !threshold_independent(config, kind) {
        return Err(Error::Contract(format!(
            "{kind} scores depend on the threshold under this update rule"
        )));
    }
    let mut det = Detector::train(stream, config, kind, 0.5)?;
    let mut scores = Vec::with_capacity(stream.test.len());
    for r in &stream.test {
        let s = match &mut det {
            Detector::Gmm(s) => s.classify(&r.estimate)?.bob_posterior,
            Detector::Mse(d) => mse_distance(d.reference(), &r.estimate)?,
        };
        scores.push(s);
    }
    Ok(scores)
}

/// Thresholds for the MSE sweep: evenly spaced quantiles of the observed
/// test distances, deduplicated.
fn mse_grid(distances: &[f64], points: usize) -> Vec<f64> {
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return Vec::new();
    }
    let last = sorted.len() - 1;
    let mut grid: Vec<f64> = (0..points)
        .map(|i| {
            let pos = if points == 1 { last / 2 } else { i * last / (points - 1) };
            sorted[pos]
        })
        .collect();
    grid.dedup();
    grid
}

fn mse_grid_for(stream: &Stream, config: &ExperimentConfig) -> Result<Vec<f64>> {
    let frozen = MseDetector::from_training(&stream.training, 0.0, UpdateRule::Frozen)?;
    let distances = stream
        .test
        .iter()
        .map(|r| mse_distance(frozen.reference(), &r.estimate))
        .collect::<Result<Vec<_>>>()?;
    Ok(mse_grid(&distances, config.mse_grid_points))
}

fn counts_from_scores(stream: &Stream, scores: &[f64], flagged: impl Fn(f64) -> bool) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for (r, &s) in stream.test.iter().zip(scores) {
        counts.record(r.true_sender == Sender::Eve, flagged(s));
    }
    counts
}

/// ROC curve of one detector over an existing stream.
///
/// The GMM sweeps `config.threshold_grid` over the Bob posterior; the MSE
/// baseline sweeps quantiles of its distance distribution.
pub fn sweep_roc_on(stream: &Stream, config: &ExperimentConfig, kind: DetectorKind) -> Result<RocCurve> {
    if stream.test.is_empty() {
        return Err(Error::Contract("stream has no test messages".into()));
    }
    let grid = match kind {
        DetectorKind::Gmm => config.threshold_grid.clone(),
        DetectorKind::Mse => mse_grid_for(stream, config)?,
    };
    let points = if threshold_independent(config, kind) {
        let scores = detector_scores(stream, config, kind)?;
        grid.iter()
            .map(|&t| {
                let counts = match kind {
                    DetectorKind::Gmm => counts_from_scores(stream, &scores, |s| s < t),
                    DetectorKind::Mse => counts_from_scores(stream, &scores, |s| s > t),
                };
                RocPoint::from_counts(t, counts)
            })
            .collect()
    } else {
        grid.iter()
            .map(|&t| Ok(RocPoint::from_counts(t, run_on_stream(stream, config, kind, t)?)))
            .collect::<Result<Vec<_>>>()?
    };
    let eve = stream.eve_count() as u64;
    let bob = stream.test.len() as u64 - eve;
    let (accept_all, flag_all) = match kind {
        DetectorKind::Gmm => (0.0, f64::INFINITY),
        DetectorKind::Mse => (f64::INFINITY, f64::NEG_INFINITY),
    };
    Ok(RocCurve::from_sweep(points, bob, eve, accept_all, flag_all))
}

/// Builds the configured stream and sweeps one detector over it.
pub fn sweep_roc(config: &ExperimentConfig, kind: DetectorKind) -> Result<RocCurve> {
    let stream = build_stream(config)?;
    sweep_roc_on(&stream, config, kind)
}

/// ROC curves for every value in [`M_SWEEP_VALUES`] on paired data: one
/// full-band stream is generated and each `M` keeps a subset of its
/// carriers, so all curves see the same channels, noise and attack pattern.
pub fn m_sweep(config: &ExperimentConfig, kind: DetectorKind) -> Result<Vec<(usize, RocCurve)>> {
    let full = ExperimentConfig {
        m_subcarriers: config.profile.active_carriers,
        ..config.clone()
    };
    m_sweep_on(&build_stream(&full)?, config, kind)
}

/// [`m_sweep`] over an existing full-band stream. Values of `M` that do not
/// divide the stream dimension are skipped.
pub fn m_sweep_on(full: &Stream, config: &ExperimentConfig, kind: DetectorKind) -> Result<Vec<(usize, RocCurve)>> {
    let dim = full.dim().ok_or_else(|| Error::Contract("stream is empty".into()))?;
    M_SWEEP_VALUES
        .iter()
        .filter(|&&m| m <= dim && dim.is_multiple_of(m))
        .map(|&m| {
            let sub = full.select(&subsample_indices(dim, m)?)?;
            let cfg = ExperimentConfig {
                m_subcarriers: m,
                ..config.clone()
            };
            Ok((m, sweep_roc_on(&sub, &cfg, kind)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub target_p_fa: f64,
    pub threshold: f64,
    pub p_fa: f64,
    pub p_d: f64,
}

/// Headline numbers of one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub detector: DetectorKind,
    pub m_subcarriers: usize,
    pub snr_db: f64,
    pub attack_intensity: f64,
    pub block_size: usize,
    pub num_test_blocks: usize,
    pub auc: f64,
    pub operating_points: Vec<SummaryPoint>,
}

impl ExperimentSummary {
    pub fn new(config: &ExperimentConfig, kind: DetectorKind, curve: &RocCurve) -> Result<Self> {
        let operating_points = SUMMARY_P_FA_TARGETS
            .iter()
            .map(|&target| {
                let OperatingPoint { threshold, p_fa, p_d } = operating_point(curve, target)?;
                Ok(SummaryPoint {
                    target_p_fa: target,
                    threshold,
                    p_fa,
                    p_d,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            detector: kind,
            m_subcarriers: config.m_subcarriers,
            snr_db: config.snr_db,
            attack_intensity: config.attack_intensity,
            block_size: config.block_size,
            num_test_blocks: config.num_test_blocks,
            auc: curve.auc,
            operating_points,
        })
    }
}
