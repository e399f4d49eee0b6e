//! Monte Carlo outage estimation.
//!
//! Each trial draws the gains of the observing user for `K` rounds and
//! checks every message it must decode. Trials are processed in fixed-size
//! chunks on the rayon pool and reduced by integer summation, so the failure
//! count is identical for any number of worker threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{apply_imperfect_csi, EffectiveConfig, GainSampler};
use crate::model::{HarqScheme, Strategy, SystemConfig};
use crate::mutual_info::{sinr, InfoAccumulator};
use crate::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Trials per parallel work item. Part of the reduction order, not of the
/// random stream, so changing it never changes results.
const CHUNK: u64 = 1 << 14;

/// Default trial count for figure reproductions.
pub const DEFAULT_TRIALS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutageEstimate {
    pub p_hat: f64,
    pub trials: u64,
    pub failures: u64,
    /// 95% Wilson score interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl OutageEstimate {
    pub fn from_counts(failures: u64, trials: u64, seed: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(failures, trials);
        OutageEstimate {
            p_hat: failures as f64 / trials as f64,
            trials,
            failures,
            ci_low,
            ci_high,
            seed,
        }
    }

    /// Plug-in binomial standard error `sqrt(p(1-p)/N)`.
    pub fn standard_error(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }

    /// Wilson score interval at an arbitrary normal quantile `z`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        wilson_interval_z(self.failures, self.trials, z)
    }
}

/// 95% Wilson score interval for `failures` out of `trials`.
pub fn wilson_interval(failures: u64, trials: u64) -> (f64, f64) {
    wilson_interval_z(failures, trials, Z_95)
}

pub fn wilson_interval_z(failures: u64, trials: u64, z: f64) -> (f64, f64) {
    debug_assert!(trials >= 1 && failures <= trials);
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if failures == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if failures == trials { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

/// One message an observer must decode: its power, the power of the layers
/// still undecoded below it, and its rate.
#[derive(Debug, Clone, Copy)]
struct Target {
    power: f64,
    interference: f64,
    rate: f64,
}

/// Everything needed to evaluate one user's outage indicator per trial.
#[derive(Debug, Clone)]
struct UserModel {
    scheme: HarqScheme,
    user: usize,
    rounds: usize,
    mean_gain: f64,
    noise_var: f64,
    targets: Vec<Target>,
}

impl UserModel {
    fn new(eff: &EffectiveConfig, user: usize, scheme: HarqScheme) -> Self {
        let cfg = eff.config();
        let targets = (user..=cfg.num_users())
            .map(|j| Target {
                power: cfg.power(j),
                interference: cfg.interference_power(j),
                rate: cfg.rate(j),
            })
            .collect();
        UserModel {
            scheme,
            user,
            rounds: cfg.max_rounds(),
            mean_gain: eff.mean_gain(user),
            noise_var: eff.noise_var(user),
            targets,
        }
    }

    fn fill_gains(&self, sampler: &GainSampler, trial: u64, gains: &mut Vec<f64>) {
        gains.clear();
        gains.extend((1..=self.rounds).map(|k| sampler.gain(self.mean_gain, trial, self.user, k)));
    }

    fn outage(&self, gains: &[f64]) -> bool {
        self.targets.iter().any(|t| {
            let mut acc = InfoAccumulator::new(self.scheme);
            for &a in gains {
                acc.push(sinr(a, t.power, t.interference, self.noise_var));
            }
            acc.bits() < t.rate
        })
    }
}

/// Far-user (user 2) outage under the power-efficient strategy.
#[derive(Debug, Clone)]
struct PowerEfficientModel {
    scheme: HarqScheme,
    rounds: usize,
    near_mean: f64,
    near_noise: f64,
    far_mean: f64,
    far_noise: f64,
    p1: f64,
    p2: f64,
    r1: f64,
    r2: f64,
}

impl PowerEfficientModel {
    fn new(eff: &EffectiveConfig, scheme: HarqScheme) -> Self {
        let cfg = eff.config();
        PowerEfficientModel {
            scheme,
            rounds: cfg.max_rounds(),
            near_mean: eff.mean_gain(1),
            near_noise: eff.noise_var(1),
            far_mean: eff.mean_gain(2),
            far_noise: eff.noise_var(2),
            p1: cfg.power(1),
            p2: cfg.power(2),
            r1: cfg.rate(1),
            r2: cfg.rate(2),
        }
    }

    /// First round after which user 1 holds both messages, if any.
    fn near_user_done(&self, sampler: &GainSampler, trial: u64) -> Option<usize> {
        let mut far_msg = InfoAccumulator::new(self.scheme);
        let mut own_msg = InfoAccumulator::new(self.scheme);
        for k in 1..=self.rounds {
            let a = sampler.gain(self.near_mean, trial, 1, k);
            far_msg.push(sinr(a, self.p2, self.p1, self.near_noise));
            own_msg.push(sinr(a, self.p1, 0.0, self.near_noise));
            if far_msg.bits() >= self.r2 && own_msg.bits() >= self.r1 {
                return Some(k);
            }
        }
        None
    }

    fn outage(&self, sampler: &GainSampler, trial: u64) -> bool {
        // Finishing in the last round (or never) leaves nothing to save.
        let ell = self
            .near_user_done(sampler, trial)
            .filter(|&l| l < self.rounds)
            .unwrap_or(self.rounds);
        let mut acc = InfoAccumulator::new(self.scheme);
        for k in 1..=self.rounds {
            let a = sampler.gain(self.far_mean, trial, 2, k);
            let interference = if k <= ell { self.p1 } else { 0.0 };
            acc.push(sinr(a, self.p2, interference, self.far_noise));
        }
        acc.bits() < self.r2
    }
}

fn count_failures<F>(trials: u64, failed: F) -> u64
where
    F: Fn(u64, &mut Vec<f64>) -> bool + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = Vec::new();
            let start = c * CHUNK;
            let end = (start + CHUNK).min(trials);
            (start..end).filter(|&t| failed(t, &mut scratch)).count() as u64
        })
        .sum()
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::arg("trials", "at least one trial is required"));
    }
    Ok(())
}

fn check_power_efficient(config: &SystemConfig) -> Result<()> {
    if config.num_users() != 2 {
        return Err(Error::arg(
            "config",
            "power-efficient strategy supported for M=2 only",
        ));
    }
    Ok(())
}

/// Outage probability of `user` (1-based) under `scheme`.
///
/// Follows the configured strategy: with [`Strategy::PowerEfficient`] the
/// far user (user 2) is simulated with interference-free rounds once user 1
/// has finished; user 1's outage is the same under both strategies.
pub fn estimate_outage(
    config: &SystemConfig,
    user: usize,
    scheme: HarqScheme,
    trials: u64,
    seed: u64,
) -> Result<OutageEstimate> {
    config.check_user(user)?;
    check_trials(trials)?;
    if config.strategy() == Strategy::PowerEfficient && user == 2 {
        return estimate_outage_power_efficient(config, scheme, trials, seed);
    }
    let eff = apply_imperfect_csi(config)?;
    let model = UserModel::new(&eff, user, scheme);
    let sampler = GainSampler::new(seed);
    let failures = count_failures(trials, |t, gains| {
        model.fill_gains(&sampler, t, gains);
        model.outage(gains)
    });
    Ok(OutageEstimate::from_counts(failures, trials, seed))
}

/// Far-user outage under the power-efficient strategy, whatever the
/// `strategy` field of `config` says. Uses the same gain draws as
/// [`estimate_outage`] for the same seed, so the two are paired.
pub fn estimate_outage_power_efficient(
    config: &SystemConfig,
    scheme: HarqScheme,
    trials: u64,
    seed: u64,
) -> Result<OutageEstimate> {
    check_power_efficient(config)?;
    check_trials(trials)?;
    let eff = apply_imperfect_csi(config)?;
    let model = PowerEfficientModel::new(&eff, scheme);
    let sampler = GainSampler::new(seed);
    let failures = count_failures(trials, |t, _| model.outage(&sampler, t));
    Ok(OutageEstimate::from_counts(failures, trials, seed))
}

/// Outage indicator of a single trial under the simple strategy.
pub fn trial_outage(
    config: &SystemConfig,
    user: usize,
    scheme: HarqScheme,
    seed: u64,
    trial: u64,
) -> Result<bool> {
    config.check_user(user)?;
    let eff = apply_imperfect_csi(config)?;
    let model = UserModel::new(&eff, user, scheme);
    let mut gains = Vec::new();
    model.fill_gains(&GainSampler::new(seed), trial, &mut gains);
    Ok(model.outage(&gains))
}

/// Per-trial outage indicators of trials `0..trials` under the simple strategy.
pub fn outage_indicators(
    config: &SystemConfig,
    user: usize,
    scheme: HarqScheme,
    trials: u64,
    seed: u64,
) -> Result<Vec<bool>> {
    config.check_user(user)?;
    let eff = apply_imperfect_csi(config)?;
    let model = UserModel::new(&eff, user, scheme);
    let sampler = GainSampler::new(seed);
    Ok((0..trials)
        .into_par_iter()
        .map_init(Vec::new, |gains, t| {
            model.fill_gains(&sampler, t, gains);
            model.outage(gains)
        })
        .collect())
}

/// Per-trial far-user outage indicators under the power-efficient strategy.
pub fn power_efficient_indicators(
    config: &SystemConfig,
    scheme: HarqScheme,
    trials: u64,
    seed: u64,
) -> Result<Vec<bool>> {
    check_power_efficient(config)?;
    let eff = apply_imperfect_csi(config)?;
    let model = PowerEfficientModel::new(&eff, scheme);
    let sampler = GainSampler::new(seed);
    Ok((0..trials)
        .into_par_iter()
        .map(|t| model.outage(&sampler, t))
        .collect())
}
