//! Rayleigh block fading and the imperfect-CSI transform.
//!
//! The power gain of user `i` in round `k` is exponential with mean
//! `mean_gains[i]`, drawn by inverse-CDF sampling from a counter-based
//! uniform keyed by `(seed, trial, user, round)`. Gains are therefore
//! reproducible per trial and independent of how trials are scheduled, and
//! extending `K` only appends rounds without disturbing earlier ones.

use crate::model::SystemConfig;
use crate::rng::{CounterRng, Stream};
use crate::{Error, Result};

/// Channel gains `alpha[i][k]` for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    users: usize,
    rounds: usize,
    gains: Vec<f64>,
}

impl GainMatrix {
    pub fn num_users(&self) -> usize {
        self.users
    }

    pub fn num_rounds(&self) -> usize {
        self.rounds
    }

    /// Gain of `user` in `round`, both 1-based.
    pub fn get(&self, user: usize, round: usize) -> f64 {
        self.gains[(user - 1) * self.rounds + round - 1]
    }

    /// All rounds of one user.
    pub fn user(&self, user: usize) -> &[f64] {
        let start = (user - 1) * self.rounds;
        &self.gains[start..start + self.rounds]
    }
}

/// Source of exponential gains for one seed.
#[derive(Debug, Clone, Copy)]
pub struct GainSampler {
    rng: CounterRng,
}

impl GainSampler {
    pub fn new(seed: u64) -> Self {
        GainSampler {
            rng: CounterRng::new(seed, Stream::ChannelGain),
        }
    }

    /// The uniform behind gain `(trial, user, round)`, on `(0, 1]`.
    #[inline]
    pub fn uniform(&self, trial: u64, user: usize, round: usize) -> f64 {
        self.rng.unit_open_closed(trial, user as u64, round as u64)
    }

    /// `-mean * ln(u)`: an exponential draw with the given mean.
    #[inline]
    pub fn gain(&self, mean: f64, trial: u64, user: usize, round: usize) -> f64 {
        -mean * self.uniform(trial, user, round).ln()
    }
}

/// Draws the full gain matrix of trial `trial_index` under `seed`.
pub fn sample_gains(config: &SystemConfig, seed: u64, trial_index: u64) -> GainMatrix {
    let sampler = GainSampler::new(seed);
    let users = config.num_users();
    let rounds = config.max_rounds();
    let mut gains = Vec::with_capacity(users * rounds);
    for user in 1..=users {
        let mean = config.mean_gain(user);
        for round in 1..=rounds {
            gains.push(sampler.gain(mean, trial_index, user, round));
        }
    }
    GainMatrix {
        users,
        rounds,
        gains,
    }
}

/// A configuration seen through MMSE channel estimation.
///
/// The receiver works with the estimate `h_hat`, whose power gain has mean
/// `mean_gain - error_var`; the estimation error leaks every layer's power
/// into the noise, raising its variance to `1 + error_var * sum(P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveConfig {
    config: SystemConfig,
    mean_gains: Vec<f64>,
    noise_vars: Vec<f64>,
}

impl EffectiveConfig {
    /// The configuration this was derived from.
    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn mean_gains(&self) -> &[f64] {
        &self.mean_gains
    }

    /// Estimated-channel mean gain of `user` (1-based).
    pub fn mean_gain(&self, user: usize) -> f64 {
        self.mean_gains[user - 1]
    }

    pub fn noise_vars(&self) -> &[f64] {
        &self.noise_vars
    }

    pub fn noise_var(&self, user: usize) -> f64 {
        self.noise_vars[user - 1]
    }

    /// Mean gain over noise variance: the mean of an exponential gain that
    /// sees unit noise. All SINR statistics of `user` depend on this alone.
    pub fn normalized_mean_gain(&self, user: usize) -> f64 {
        self.mean_gain(user) / self.noise_var(user)
    }
}

pub fn apply_imperfect_csi(config: &SystemConfig) -> Result<EffectiveConfig> {
    let total = config.total_power();
    let mut mean_gains = Vec::with_capacity(config.num_users());
    let mut noise_vars = Vec::with_capacity(config.num_users());
    for (i, (&g, &var)) in config
        .mean_gains()
        .iter()
        .zip(config.csi_error_vars())
        .enumerate()
    {
        if var >= g {
            return Err(Error::config(
                "csi_error_vars",
                format!("error variance of user {} ({var}) must be below its mean gain ({g})", i + 1),
            ));
        }
        mean_gains.push(g - var);
        noise_vars.push(1.0 + var * total);
    }
    Ok(EffectiveConfig {
        config: config.clone(),
        mean_gains,
        noise_vars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(gains: [f64; 2]) -> SystemConfig {
        SystemConfig::two_user(4, [1.0, 1.0], gains, 10.0, 1.2).unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = cfg([2.0, 1.0]);
        assert_eq!(sample_gains(&c, 42, 0), sample_gains(&c, 42, 0));
        assert_ne!(sample_gains(&c, 42, 0), sample_gains(&c, 42, 1));
        assert_ne!(sample_gains(&c, 42, 0), sample_gains(&c, 43, 0));
    }

    #[test]
    fn extra_rounds_keep_earlier_gains() {
        let c4 = cfg([2.0, 1.0]);
        let c6 = c4.with_max_rounds(6).unwrap();
        let a = sample_gains(&c4, 9, 17);
        let b = sample_gains(&c6, 9, 17);
        for user in 1..=2 {
            assert_eq!(a.user(user), &b.user(user)[..4]);
        }
    }

    #[test]
    fn unit_mean_sample_mean() {
        let s = GainSampler::new(2024);
        let n = 1_000_000u64;
        let mean: f64 = (0..n).map(|t| s.gain(1.0, t, 1, 1)).sum::<f64>() / n as f64;
        assert!((0.997..=1.003).contains(&mean), "{mean}");
    }

    #[test]
    fn median_of_mean_two() {
        let s = GainSampler::new(5);
        let n = 1_000_000u64;
        let median = 2.0 * std::f64::consts::LN_2;
        let below = (0..n).filter(|&t| s.gain(2.0, t, 2, 3) < median).count();
        let frac = below as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.0015, "{frac}");
    }

    #[test]
    fn kolmogorov_smirnov_against_exponential_cdf() {
        let s = GainSampler::new(77);
        let n = 1_000_000usize;
        let mean = 1.5;
        let mut x: Vec<f64> = (0..n as u64).map(|t| s.gain(mean, t, 1, 2)).collect();
        x.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        for (i, &v) in x.iter().enumerate() {
            let f = 1.0 - (-v / mean).exp();
            d = d
                .max((i + 1) as f64 / n as f64 - f)
                .max(f - i as f64 / n as f64);
        }
        assert!(d < 0.002, "KS statistic {d}");
    }

    #[test]
    fn perfect_csi_is_identity() {
        let c = cfg([2.0, 1.0]);
        let e = apply_imperfect_csi(&c).unwrap();
        assert_eq!(e.mean_gains(), c.mean_gains());
        assert_eq!(e.noise_vars(), &[1.0, 1.0]);
        // idempotent: the effective view of a perfect-CSI config is itself
        let again = apply_imperfect_csi(e.config()).unwrap();
        assert_eq!(again, e);
    }

    #[test]
    fn imperfect_csi_substitution() {
        let c = SystemConfig::two_user(4, [1.0, 1.0], [1.0, 1.0], 10.0, 1.2)
            .unwrap()
            .with_csi_error_vars(vec![0.1, 0.1])
            .unwrap();
        let e = apply_imperfect_csi(&c).unwrap();
        assert!((e.mean_gain(1) - 0.9).abs() < 1e-12);
        assert!((e.noise_var(2) - 3.2).abs() < 1e-12);
        assert!((e.normalized_mean_gain(2) - 0.9 / 3.2).abs() < 1e-12);
    }
}
