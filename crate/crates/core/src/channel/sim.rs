//! Tapped-delay-line Rayleigh channel simulator.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ChannelEstimate, ChannelProfile, NoiseModel};
use crate::error::{Error, Result};

/// Nominal mean per-bin channel power; the power-delay profile is normalized
/// so every link has this expected power.
pub const MEAN_CHANNEL_POWER: f64 = 1.0;

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// One transmitter-to-Alice radio link.
///
/// The taps are drawn once from `(profile.seed, link_seed)`. With a drift
/// coefficient below one, [`Link::advance`] evolves every tap as a
/// first-order Gauss-Markov process that preserves the tap powers.
#[derive(Debug, Clone)]
pub struct Link {
    profile: ChannelProfile,
    pdp: Vec<f64>,
    taps: Vec<Complex64>,
    rho: f64,
    rng: ChaCha8Rng,
}

impl Link {
    pub fn new(profile: ChannelProfile, link_seed: u64) -> Result<Self> {
        profile.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(link_seed);
        rng.set_stream(profile.seed);
        let pdp = profile.power_delay_profile();
        let taps = pdp.iter().map(|&p| complex_normal(&mut rng, p)).collect();
        Ok(Self {
            profile,
            pdp,
            taps,
            rho: 1.0,
            rng,
        })
    }

    /// Sets the per-message correlation coefficient; `1.0` keeps the link static.
    pub fn with_drift(mut self, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::config("drift_rho", "must lie in [0, 1]"));
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn profile(&self) -> &ChannelProfile {
        &self.profile
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    /// Frequency response over all `fft_size` bins.
    pub fn response(&self) -> Vec<Complex64> {
        let n = self.profile.fft_size as f64;
        (0..self.profile.fft_size)
            .map(|k| {
                self.taps
                    .iter()
                    .enumerate()
                    .map(|(t, h)| h * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n))
                    .sum()
            })
            .collect()
    }

    /// Moves the link forward by one message slot.
    pub fn advance(&mut self) {
        if self.rho >= 1.0 {
            return;
        }
        let innov = (1.0 - self.rho * self.rho).sqrt();
        for (tap, &p) in self.taps.iter_mut().zip(&self.pdp) {
            let w = complex_normal(&mut self.rng, p);
            *tap = *tap * self.rho + w * innov;
        }
    }
}

/// Frequency response of the static link identified by `link_seed`.
///
/// Links with different seeds are independent, which is how Bob and Eve end
/// up with decorrelated channels.
pub fn generate_true_channel(profile: &ChannelProfile, link_seed: u64) -> Result<Vec<Complex64>> {
    Ok(Link::new(*profile, link_seed)?.response())
}

/// Positions of `m` equally spaced carriers among `active` ones, starting at 0.
pub fn subsample_indices(active: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::config("m_subcarriers", "must be positive"));
    }
    if m > active {
        return Err(Error::config(
            "m_subcarriers",
            format!("{m} exceeds the {active} active carriers"),
        ));
    }
    if !active.is_multiple_of(m) {
        return Err(Error::config(
            "m_subcarriers",
            format!("{m} does not divide the {active} active carriers"),
        ));
    }
    let step = active / m;
    Ok((0..m).map(|i| i * step).collect())
}

/// Noisy complex estimates on every active carrier.
pub(crate) fn perturb_active<R: Rng + ?Sized>(
    true_channel: &[Complex64],
    variance: f64,
    profile: &ChannelProfile,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if true_channel.len() != profile.fft_size {
        return Err(Error::DimensionMismatch {
            expected: profile.fft_size,
            actual: true_channel.len(),
        });
    }
    Ok(profile
        .active_bins()
        .into_iter()
        .map(|bin| {
            let h = true_channel[bin];
            if variance > 0.0 {
                h + complex_normal(rng, variance)
            } else {
                h
            }
        })
        .collect())
}

/// Alice's estimate of `true_channel` for one message.
///
/// Complex Gaussian noise is added on every active carrier before taking
/// magnitudes and keeping `m_subcarriers` equally spaced carriers, so the
/// RNG consumption does not depend on `m_subcarriers`.
pub fn observe_estimate<R: Rng + ?Sized>(
    true_channel: &[Complex64],
    noise: &NoiseModel,
    profile: &ChannelProfile,
    m_subcarriers: usize,
    rng: &mut R,
) -> Result<ChannelEstimate> {
    profile.validate()?;
    noise.validate()?;
    let positions = subsample_indices(profile.active_carriers, m_subcarriers)?;
    let noisy = perturb_active(true_channel, noise.variance(MEAN_CHANNEL_POWER), profile, rng)?;
    let gains = positions.iter().map(|&p| noisy[p].norm()).collect();
    ChannelEstimate::new(gains, positions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_tap_is_flat() {
        let p = ChannelProfile {
            num_taps: 1,
            delay_decay: 3.7,
            ..Default::default()
        };
        let h = generate_true_channel(&p, 11).unwrap();
        let m0 = h[0].norm();
        assert!(h.iter().all(|x| (x.norm() - m0).abs() < 1e-12));
    }

    #[test]
    fn generation_is_deterministic() {
        let p = ChannelProfile::default();
        assert_eq!(
            generate_true_channel(&p, 5).unwrap(),
            generate_true_channel(&p, 5).unwrap()
        );
        assert_ne!(
            generate_true_channel(&p, 5).unwrap(),
            generate_true_channel(&p, 6).unwrap()
        );
    }

    #[test]
    fn invalid_profile_is_configuration_error() {
        let p = ChannelProfile {
            num_taps: 100,
            ..Default::default()
        };
        assert!(matches!(generate_true_channel(&p, 0), Err(Error::Config { .. })));
    }

    #[test]
    fn per_bin_power_is_unit_in_expectation() {
        let p = ChannelProfile {
            num_taps: 4,
            ..Default::default()
        };
        let trials = 100_000;
        let mut power = vec![0.0; p.fft_size];
        for seed in 0..trials {
            for (acc, h) in power.iter_mut().zip(generate_true_channel(&p, seed).unwrap()) {
                *acc += h.norm_sqr();
            }
        }
        for (bin, acc) in power.iter().enumerate() {
            let mean = acc / trials as f64;
            assert!((mean - 1.0).abs() < 0.02, "bin {bin}: {mean}");
        }
    }

    #[test]
    fn noiseless_estimate_is_exact_magnitude() {
        let p = ChannelProfile::default();
        let h = generate_true_channel(&p, 3).unwrap();
        let est = observe_estimate(&h, &NoiseModel::new(f64::INFINITY).unwrap(), &p, 48, &mut rng(1)).unwrap();
        for (g, bin) in est.gains().iter().zip(p.active_bins()) {
            assert_eq!(*g, h[bin].norm());
        }
        assert_eq!(est.carrier_indices(), (0..48).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn three_carriers_take_every_sixteenth() {
        let p = ChannelProfile::default();
        let h = generate_true_channel(&p, 3).unwrap();
        let est = observe_estimate(&h, &NoiseModel::default(), &p, 3, &mut rng(1)).unwrap();
        assert_eq!(est.carrier_indices(), &[0, 16, 32]);
    }

    #[test]
    fn subsample_validation() {
        assert!(subsample_indices(48, 49).is_err());
        assert!(subsample_indices(48, 0).is_err());
        assert!(subsample_indices(48, 5).is_err());
        assert_eq!(subsample_indices(48, 6).unwrap(), vec![0, 8, 16, 24, 32, 40]);
    }

    fn perturbation_variance(snr_db: f64, samples: usize) -> f64 {
        let p = ChannelProfile::default();
        let h = vec![Complex64::new(1.0, 0.0); p.fft_size];
        let var = NoiseModel::new(snr_db).unwrap().variance(MEAN_CHANNEL_POWER);
        let mut r = rng(42);
        let acc: f64 = (0..samples)
            .map(|_| {
                let noisy = perturb_active(&h, var, &p, &mut r).unwrap();
                (noisy[7] - h[0]).norm_sqr()
            })
            .sum();
        acc / samples as f64
    }

    #[test]
    fn snr_maps_to_noise_variance() {
        let v = perturbation_variance(20.0, 100_000);
        assert!((v - 0.01).abs() / 0.01 < 0.03, "{v}");
    }

    #[test]
    fn three_db_doubles_noise() {
        let hi = perturbation_variance(20.0, 100_000);
        let lo = perturbation_variance(20.0 - 3.0, 100_000);
        let ratio = lo / hi;
        // 3 dB is a factor 10^0.3 = 1.995
        assert!((ratio - 2.0).abs() / 2.0 < 0.05, "{ratio}");
    }

    #[test]
    fn subsampling_is_consistent_with_full_estimate() {
        let p = ChannelProfile::default();
        let h = generate_true_channel(&p, 9).unwrap();
        let noise = NoiseModel::default();
        let full = observe_estimate(&h, &noise, &p, 48, &mut rng(77)).unwrap();
        let sub = observe_estimate(&h, &noise, &p, 3, &mut rng(77)).unwrap();
        assert_eq!(sub, full.select(&[0, 16, 32]).unwrap());
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn independent_links_are_decorrelated() {
        let p = ChannelProfile::default();
        let noise = NoiseModel::default();
        let pairs = 1000;
        let mut r = rng(5);
        let mut total = 0.0;
        for i in 0..pairs {
            let bob = generate_true_channel(&p, 2 * i).unwrap();
            let eve = generate_true_channel(&p, 2 * i + 1).unwrap();
            let gb = observe_estimate(&bob, &noise, &p, 48, &mut r).unwrap();
            let ge = observe_estimate(&eve, &noise, &p, 48, &mut r).unwrap();
            total += pearson(gb.gains(), ge.gains());
        }
        let mean = total / pairs as f64;
        assert!(mean.abs() < 0.05, "{mean}");
    }

    #[test]
    fn drift_preserves_power_and_static_link_is_frozen() {
        let p = ChannelProfile::default();
        let mut frozen = Link::new(p, 1).unwrap();
        let before = frozen.taps().to_vec();
        frozen.advance();
        assert_eq!(frozen.taps(), before.as_slice());

        let mut total = 0.0;
        let links = 400;
        for seed in 0..links {
            let mut link = Link::new(p, seed).unwrap().with_drift(0.9).unwrap();
            for _ in 0..50 {
                link.advance();
            }
            total += link.taps().iter().map(|t| t.norm_sqr()).sum::<f64>();
        }
        let mean = total / links as f64;
        assert!((mean - 1.0).abs() < 0.1, "{mean}");
        assert!(Link::new(p, 0).unwrap().with_drift(1.5).is_err());
    }
}
