use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ExperimentConfig;
use crate::channel::{observe_estimate, ChannelEstimate, Link, MessageRecord, Sender};
use crate::error::Result;

/// A labelled message stream: one Bob-only training block followed by the
/// test blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub training: Vec<ChannelEstimate>,
    /// Test records; `block_index` starts at 1 since block 0 is training.
    pub test: Vec<MessageRecord>,
}

impl Stream {
    /// All records in time order, training block first as block 0.
    pub fn to_records(&self) -> Vec<MessageRecord> {
        let mut out: Vec<MessageRecord> = self
            .training
            .iter()
            .enumerate()
            .map(|(i, e)| MessageRecord {
                estimate: e.clone(),
                true_sender: Sender::Bob,
                block_index: 0,
                msg_index: i,
            })
            .collect();
        out.extend(self.test.iter().cloned());
        out
    }

    /// Splits a trace back into training (block 0) and test records.
    pub fn from_records(records: Vec<MessageRecord>) -> Self {
        let (train, test): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.block_index == 0);
        Self {
            training: train.into_iter().map(|r| r.estimate).collect(),
            test,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.training
            .first()
            .or_else(|| self.test.first().map(|r| &r.estimate))
            .map(|e| e.dim())
    }

    pub fn eve_count(&self) -> usize {
        self.test.iter().filter(|r| r.true_sender == Sender::Eve).count()
    }

    /// Same stream restricted to the given estimate positions.
    pub fn select(&self, positions: &[usize]) -> Result<Self> {
        Ok(Self {
            training: self
                .training
                .iter()
                .map(|e| e.select(positions))
                .collect::<Result<_>>()?,
            test: self
                .test
                .iter()
                .map(|r| {
                    Ok(MessageRecord {
                        estimate: r.estimate.select(positions)?,
                        ..r.clone()
                    })
                })
                .collect::<Result<_>>()?,
        })
    }
}

/// Generates the training block and `num_test_blocks` test blocks.
///
/// Each test message comes from Eve with probability `attack_intensity`.
/// Both links advance one slot per message so drift, when enabled, is shared
/// by the time axis rather than by who transmits.
pub fn build_stream(config: &ExperimentConfig) -> Result<Stream> {
    config.validate()?;
    let profile = config.profile;
    let noise = config.noise();
    let mut bob = Link::new(profile, config.seeds.bob_link)?.with_drift(config.drift_rho)?;
    let mut eve = Link::new(profile, config.seeds.eve_link)?.with_drift(config.drift_rho)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seeds.noise);
    let mut attack_rng = ChaCha8Rng::seed_from_u64(config.seeds.attack);
    let drifting = config.drift_rho < 1.0;
    let mut bob_h = bob.response();
    let mut eve_h = eve.response();

    let n = config.block_size;
    let mut training = Vec::with_capacity(n);
    for _ in 0..n {
        training.push(observe_estimate(
            &bob_h,
            &noise,
            &profile,
            config.m_subcarriers,
            &mut noise_rng,
        )?);
        if drifting {
            bob.advance();
            eve.advance();
            bob_h = bob.response();
            eve_h = eve.response();
        }
    }

    let mut test = Vec::with_capacity(n * config.num_test_blocks);
    for block in 1..=config.num_test_blocks {
        for msg in 0..n {
            let sender = if attack_rng.random_bool(config.attack_intensity) {
                Sender::Eve
            } else {
                Sender::Bob
            };
            let h = match sender {
                Sender::Bob => &bob_h,
                Sender::Eve => &eve_h,
            };
            let estimate = observe_estimate(h, &noise, &profile, config.m_subcarriers, &mut noise_rng)?;
            test.push(MessageRecord {
                estimate,
                true_sender: sender,
                block_index: block,
                msg_index: msg,
            });
            if drifting {
                bob.advance();
                eve.advance();
                bob_h = bob.response();
                eve_h = eve.response();
            }
        }
    }
    Ok(Stream { training, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(ai: f64) -> ExperimentConfig {
        ExperimentConfig {
            block_size: 100,
            num_test_blocks: 3,
            attack_intensity: ai,
            ..Default::default()
        }
    }

    #[test]
    fn no_attack_means_no_eve() {
        let s = build_stream(&small(0.0)).unwrap();
        assert_eq!(s.eve_count(), 0);
        assert_eq!(s.training.len(), 100);
        assert_eq!(s.test.len(), 300);
    }

    #[test]
    fn full_attack_means_all_eve() {
        let s = build_stream(&small(1.0)).unwrap();
        assert_eq!(s.eve_count(), 300);
    }

    #[test]
    fn default_sizes() {
        let s = build_stream(&ExperimentConfig::default()).unwrap();
        assert_eq!(s.training.len(), 1000);
        assert_eq!(s.test.len(), 99_000);
        let frac = s.eve_count() as f64 / s.test.len() as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
        assert_eq!(s.test.first().unwrap().block_index, 1);
        assert_eq!(s.test.last().unwrap().block_index, 99);
        assert_eq!(s.test.last().unwrap().msg_index, 999);
    }

    #[test]
    fn stream_is_deterministic() {
        assert_eq!(build_stream(&small(0.5)).unwrap(), build_stream(&small(0.5)).unwrap());
    }

    #[test]
    fn smaller_m_is_a_subsample_of_full_stream() {
        let full = build_stream(&small(0.5)).unwrap();
        let three = build_stream(&ExperimentConfig {
            m_subcarriers: 3,
            ..small(0.5)
        })
        .unwrap();
        assert_eq!(three, full.select(&[0, 16, 32]).unwrap());
    }

    #[test]
    fn drifting_stream_differs_but_is_reproducible() {
        let cfg = ExperimentConfig {
            drift_rho: 0.99,
            ..small(0.5)
        };
        let a = build_stream(&cfg).unwrap();
        assert_eq!(a, build_stream(&cfg).unwrap());
        assert_ne!(a, build_stream(&small(0.5)).unwrap());
    }

    #[test]
    fn records_round_trip_through_blocks() {
        let s = build_stream(&small(0.5)).unwrap();
        assert_eq!(Stream::from_records(s.to_records()), s);
    }
}
