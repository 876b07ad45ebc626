//! Channel estimates for the Bob and Eve links.
//!
//! A [`ChannelEstimate`] is the magnitude vector `[|h_1|, ..., |h_M|]` Alice
//! obtains for one received message. The [`sim`] submodule produces them from
//! a tapped-delay-line Rayleigh channel; [`trace`] reads and writes recorded
//! estimate streams.

pub mod sim;
pub mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use sim::{generate_true_channel, observe_estimate, subsample_indices, Link};
pub use trace::{load_trace, read_trace, save_trace, write_trace, TraceFormat};

/// Multipath and OFDM layout of a simulated link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    /// Length of the time-domain impulse response, in samples.
    pub num_taps: usize,
    /// Per-tap power ratio of the exponential power-delay profile.
    pub delay_decay: f64,
    pub fft_size: usize,
    /// Number of data subcarriers carrying an estimate.
    pub active_carriers: usize,
    pub seed: u64,
}

impl Default for ChannelProfile {
    fn default() -> Self {
        Self {
            num_taps: 8,
            delay_decay: 0.5,
            fft_size: 64,
            active_carriers: 48,
            seed: 0,
        }
    }
}

impl ChannelProfile {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 {
            return Err(Error::config("fft_size", "must be positive"));
        }
        if self.num_taps == 0 {
            return Err(Error::config("num_taps", "must be positive"));
        }
        if self.num_taps > self.fft_size {
            return Err(Error::config(
                "num_taps",
                format!("{} exceeds fft_size {}", self.num_taps, self.fft_size),
            ));
        }
        if !(self.delay_decay.is_finite() && self.delay_decay > 0.0) {
            return Err(Error::config("delay_decay", "must be a positive finite number"));
        }
        if self.active_carriers == 0 || self.active_carriers > self.fft_size {
            return Err(Error::config(
                "active_carriers",
                format!("must be in 1..={}", self.fft_size),
            ));
        }
        Ok(())
    }

    /// Normalized tap powers `p_t ∝ delay_decay^t`, summing to one.
    pub fn power_delay_profile(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.num_taps).map(|t| self.delay_decay.powi(t as i32)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }

    /// FFT bin of each active carrier, ordered by frequency.
    ///
    /// Active carriers sit symmetrically around DC with the DC bin skipped,
    /// unless every bin is active.
    pub fn active_bins(&self) -> Vec<usize> {
        let n = self.fft_size as i64;
        let a = self.active_carriers as i64;
        let freqs: Vec<i64> = if a == n {
            (-(n / 2)..n - n / 2).collect()
        } else {
            let neg = (a + 1) / 2;
            (-neg..0).chain(1..=a - neg).collect()
        };
        freqs.into_iter().map(|f| f.rem_euclid(n) as usize).collect()
    }
}

/// Estimation noise expressed as a signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub snr_db: f64,
}

impl NoiseModel {
    pub fn new(snr_db: f64) -> Result<Self> {
        let model = Self { snr_db };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::config("snr_db", "must be a number above -inf"));
        }
        let var = self.variance(1.0);
        if !var.is_finite() || (self.snr_db.is_finite() && var <= 0.0) {
            return Err(Error::config("snr_db", "noise variance must be positive and finite"));
        }
        Ok(())
    }

    /// Complex noise variance `mean_power / 10^(snr_db/10)`. Zero when the
    /// SNR is `+inf`, which disables noise.
    pub fn variance(&self, mean_power: f64) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            mean_power / 10f64.powf(self.snr_db / 10.0)
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { snr_db: 20.0 }
    }
}

/// Subcarrier gain magnitudes observed for one message.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    gains: Vec<f64>,
    carrier_indices: Vec<usize>,
}

impl ChannelEstimate {
    pub fn new(gains: Vec<f64>, carrier_indices: Vec<usize>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::Contract("channel estimate must have at least one gain".into()));
        }
        if gains.len() != carrier_indices.len() {
            return Err(Error::DimensionMismatch {
                expected: gains.len(),
                actual: carrier_indices.len(),
            });
        }
        if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::Contract(format!(
                "gains must be finite and non-negative, found {g}"
            )));
        }
        if carrier_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Contract("carrier indices must be strictly increasing".into()));
        }
        Ok(Self { gains, carrier_indices })
    }

    /// Estimate whose gains sit on carriers `0..M`.
    pub fn from_gains(gains: Vec<f64>) -> Result<Self> {
        let indices = (0..gains.len()).collect();
        Self::new(gains, indices)
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn carrier_indices(&self) -> &[usize] {
        &self.carrier_indices
    }

    pub fn dim(&self) -> usize {
        self.gains.len()
    }

    /// Keeps only the entries at the given positions.
    pub fn select(&self, positions: &[usize]) -> Result<Self> {
        let mut gains = Vec::with_capacity(positions.len());
        let mut idx = Vec::with_capacity(positions.len());
        for &p in positions {
            if p >= self.dim() {
                return Err(Error::Contract(format!(
                    "position {p} out of range for dimension {}",
                    self.dim()
                )));
            }
            gains.push(self.gains[p]);
            idx.push(self.carrier_indices[p]);
        }
        Self::new(gains, idx)
    }
}

/// Originator of a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sender {
    #[serde(rename = "B")]
    Bob,
    #[serde(rename = "E")]
    Eve,
}

impl Sender {
    pub fn code(self) -> &'static str {
        match self {
            Sender::Bob => "B",
            Sender::Eve => "E",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "B" => Some(Sender::Bob),
            "E" => Some(Sender::Eve),
            _ => None,
        }
    }
}

/// A ground-truth-labeled channel estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageRecord {
    pub estimate: ChannelEstimate,
    pub true_sender: Sender,
    pub block_index: usize,
    pub msg_index: usize,
}
