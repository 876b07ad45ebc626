//! Mean-square-error reference detector.
//!
//! A message is accepted as Bob's when the MSE between its gains and a
//! reference vector stays within a threshold. The reference is the
//! element-wise mean of the training block, optionally refreshed with every
//! accepted estimate.

use serde::{Deserialize, Serialize};

use crate::auth::AuthDecision;
use crate::channel::ChannelEstimate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    #[default]
    Frozen,
    /// Accepted estimates are folded into the reference as an incremental mean.
    RunningMeanAccepted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MseDetector {
    reference: Vec<f64>,
    threshold: f64,
    update_rule: UpdateRule,
    /// Number of estimates averaged into `reference`.
    #[serde(default = "one")]
    samples: u64,
}

fn one() -> u64 {
    1
}

/// `(1/M) Σ_l (reference_l - gain_l)^2`.
pub fn mse_distance(reference: &[f64], estimate: &ChannelEstimate) -> Result<f64> {
    let gains = estimate.gains();
    if reference.len() != gains.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            actual: gains.len(),
        });
    }
    let ss: f64 = reference.iter().zip(gains).map(|(r, g)| (r - g).powi(2)).sum();
    Ok(ss / gains.len() as f64)
}

impl MseDetector {
    pub fn new(reference: Vec<f64>, threshold: f64, update_rule: UpdateRule) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::Contract("reference must have at least one entry".into()));
        }
        if reference.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("reference must be finite".into()));
        }
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::config("threshold", "must be non-negative"));
        }
        Ok(Self {
            reference,
            threshold,
            update_rule,
            samples: 1,
        })
    }

    /// Reference = element-wise mean of the training estimates.
    pub fn from_training(training: &[ChannelEstimate], threshold: f64, update_rule: UpdateRule) -> Result<Self> {
        let first = training
            .first()
            .ok_or_else(|| Error::Contract("training block is empty".into()))?;
        let mut sum = vec![0.0; first.dim()];
        for e in training {
            if e.dim() != sum.len() {
                return Err(Error::DimensionMismatch {
                    expected: sum.len(),
                    actual: e.dim(),
                });
            }
            for (s, g) in sum.iter_mut().zip(e.gains()) {
                *s += g;
            }
        }
        let n = training.len() as f64;
        let mut det = Self::new(sum.into_iter().map(|s| s / n).collect(), threshold, update_rule)?;
        det.samples = training.len() as u64;
        Ok(det)
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::config("threshold", "must be non-negative"));
        }
        self.threshold = threshold;
        Ok(())
    }

    pub fn update_rule(&self) -> UpdateRule {
        self.update_rule
    }

    /// Decision without updating the reference.
    pub fn score(&self, estimate: &ChannelEstimate) -> Result<AuthDecision> {
        let mse = mse_distance(&self.reference, estimate)?;
        let verdict = if mse <= self.threshold {
            crate::auth::Verdict::AcceptBob
        } else {
            crate::auth::Verdict::FlagEve
        };
        Ok(AuthDecision {
            verdict,
            bob_posterior: 1.0 / (1.0 + mse),
            threshold_used: self.threshold,
        })
    }

    /// Decides on one message; under [`UpdateRule::RunningMeanAccepted`] an
    /// accepted estimate is folded into the reference.
    pub fn classify(&mut self, estimate: &ChannelEstimate) -> Result<AuthDecision> {
        let decision = self.score(estimate)?;
        if decision.accepted() && self.update_rule == UpdateRule::RunningMeanAccepted {
            self.samples += 1;
            let n = self.samples as f64;
            for (r, g) in self.reference.iter_mut().zip(estimate.gains()) {
                *r += (g - *r) / n;
            }
        }
        Ok(decision)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let det: Self = crate::gmm::snapshot::from_json_str(text)?;
        let mut checked =
            Self::new(det.reference, det.threshold, det.update_rule).map_err(|e| Error::Snapshot(e.to_string()))?;
        checked.samples = det.samples.max(1);
        Ok(checked)
    }
}

/// Free-function form of [`MseDetector::classify`].
pub fn mse_classify(detector: &mut MseDetector, estimate: &ChannelEstimate) -> Result<AuthDecision> {
    detector.classify(estimate)
}
