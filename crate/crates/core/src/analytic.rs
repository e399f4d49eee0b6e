//! Type I closed form, recursive bounds on the chase-combining and
//! incremental-redundancy kernels, and a brute-force integration oracle.
//!
//! The kernels `phi_K` (CC) and `psi_K` (IR) are `K`-dimensional integrals
//! over `[0, c]^K`. The outage probability of a layer is
//! `(c/s)^K e^{K/s} * kernel`, where `s = mean_gain * P1` is the mean
//! received interference-to-noise ratio. The prefactor grows like `s^{-K}`
//! and the kernel like `s^K`, so both overflow or underflow at the ends of
//! an SNR sweep. The recursion therefore runs on the normalized kernel
//! `p_K = (c/s)^K e^{K/s} kernel`, which is itself a probability bound, and
//! kernel values are recovered through logarithms only when asked for.

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::apply_imperfect_csi;
use crate::model::{Ratio, SystemConfig};
use crate::montecarlo::wilson_interval_z;
use crate::rng::{CounterRng, Stream};
use crate::{Error, Result};

/// Type I outage of one layer.
///
/// `p_ref` is the interference power `sum_{l<j} P_l` for a finite ratio and
/// the layer power `P_1` when `c` is infinite. Returns 1 when the SINR can
/// never reach `2^R - 1`.
pub fn typei_outage(k: usize, rate: f64, c: Ratio, mean_gain: f64, p_ref: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::arg("k", "at least one round is required"));
    }
    check_positive("mean_gain", mean_gain)?;
    check_positive("p_ref", p_ref)?;
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::arg("rate", format!("rate must be finite and non-negative, got {rate}")));
    }
    let gamma = rate.exp2() - 1.0;
    let t = match c {
        Ratio::Infinite => gamma / (mean_gain * p_ref),
        Ratio::Finite(c) => {
            check_positive("c", c)?;
            if gamma >= c {
                return Ok(1.0);
            }
            gamma / (mean_gain * p_ref * (c - gamma))
        }
    };
    Ok((-(-t).exp_m1()).powi(k as i32))
}

/// Exact Type I outage of `user` (1-based), imperfect CSI included.
///
/// Message `j` is decodable in a round exactly when the gain exceeds a
/// per-layer threshold, so user `i` is in outage iff every round's gain is
/// below the largest threshold over layers `i..=M`.
pub fn typei_user_outage(config: &SystemConfig, user: usize) -> Result<f64> {
    config.check_user(user)?;
    let eff = apply_imperfect_csi(config)?;
    let noise = eff.noise_var(user);
    let mut threshold: f64 = 0.0;
    for j in user..=config.num_users() {
        let gamma = config.rate(j).exp2() - 1.0;
        let margin = config.power(j) - gamma * config.interference_power(j);
        if margin <= 0.0 {
            return Ok(1.0);
        }
        threshold = threshold.max(gamma * noise / margin);
    }
    let miss = -(-threshold / eff.mean_gain(user)).exp_m1();
    Ok(miss.powi(config.max_rounds() as i32))
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::arg(name, format!("must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Parameters of `phi_K(gamma)` or `psi_K(gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelParams {
    pub k: usize,
    /// `2^R - 1` for CC, `2^R` for IR.
    pub gamma: f64,
    pub c: f64,
    pub mean_gain: f64,
    /// Interference power seen by the layer (`P_1` for two users), already
    /// divided by the noise variance.
    pub p1: f64,
}

/// Kept for readability at call sites that deal with CC only.
pub type PhiParams = KernelParams;

impl KernelParams {
    pub fn new(k: usize, gamma: f64, c: f64, mean_gain: f64, p1: f64) -> Result<Self> {
        let p = KernelParams { k, gamma, c, mean_gain, p1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::arg("k", "at least one round is required"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::arg("gamma", format!("must be finite and non-negative, got {}", self.gamma)));
        }
        check_positive("c", self.c)?;
        check_positive("mean_gain", self.mean_gain)?;
        check_positive("p1", self.p1)
    }

    /// Mean interference-to-noise ratio `mean_gain * p1`.
    pub fn snr(&self) -> f64 {
        self.mean_gain * self.p1
    }

    /// `ln` of the factor that turns a normalized kernel into the kernel:
    /// `K ln(s/c) - K/s`.
    fn ln_scale(&self) -> f64 {
        let s = self.snr();
        let k = self.k as f64;
        k * (s.ln() - self.c.ln()) - k / s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Phi,
    Psi,
    OutageCc,
    OutageIr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInterval {
    pub lower: f64,
    pub upper: f64,
    pub quantity: Quantity,
    /// Kernel parameters of the layer with the largest upper bound; `None`
    /// when that layer is the interference-free one.
    pub params: Option<KernelParams>,
}

impl BoundInterval {
    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Chooses the partition parameter `Delta` at each recursion level.
pub trait DeltaPolicy: Sync {
    /// `k` is the number of rounds at the current level.
    fn delta(&self, k: usize, gamma: f64, c: f64) -> f64;
}

/// `Delta = (c - (gamma mod c)) / 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CcDelta;

impl DeltaPolicy for CcDelta {
    fn delta(&self, _k: usize, gamma: f64, c: f64) -> f64 {
        (c - gamma.rem_euclid(c)) / 2.0
    }
}

/// `Delta = (1 + c - exp(ln(gamma) mod ln(1 + c))) / 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IrDelta;

impl DeltaPolicy for IrDelta {
    fn delta(&self, _k: usize, gamma: f64, c: f64) -> f64 {
        (1.0 + c - gamma.ln().rem_euclid(c.ln_1p()).exp()) / 2.0
    }
}

/// The same `Delta` at every level.
#[derive(Debug, Clone, Copy)]
pub struct FixedDelta(pub f64);

impl DeltaPolicy for FixedDelta {
    fn delta(&self, _k: usize, _gamma: f64, _c: f64) -> f64 {
        self.0
    }
}

fn checked_delta(policy: &dyn DeltaPolicy, k: usize, gamma: f64, c: f64) -> Result<f64> {
    let d = policy.delta(k, gamma, c);
    if !(d > 0.0 && d <= c) {
        return Err(Error::arg("delta", format!("Delta = {d} outside (0, {c}]")));
    }
    Ok(d)
}

/// `1 - e^{-t}` without cancellation for small `t`.
fn one_minus_exp(t: f64) -> f64 {
    -(-t).exp_m1()
}

/// `(x e^{-x})^k`.
fn lower_closed(x: f64, k: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (k as f64 * (x.ln() - x)).exp()
}

enum Exact {
    Value(f64),
    No,
}

fn cc_exact(k: usize, g: f64, c: f64, s: f64) -> Exact {
    if g <= 0.0 {
        Exact::Value(0.0)
    } else if g >= k as f64 * c {
        Exact::Value(1.0)
    } else if k == 1 {
        Exact::Value(one_minus_exp(g / (s * (c - g))))
    } else {
        Exact::No
    }
}

/// Normalized CC kernel bounds.
fn cc_norm(k: usize, g: f64, c: f64, s: f64, policy: &dyn DeltaPolicy) -> Result<(f64, f64)> {
    if let Exact::Value(v) = cc_exact(k, g, c, s) {
        return Ok((v, v));
    }
    if g < c {
        let gk = g / k as f64;
        let x = gk / (s * (c - gk));
        let y = g / (s * (c - g));
        return Ok((lower_closed(x, k), y.powi(k as i32)));
    }
    let delta = checked_delta(policy, k, g, c)?;
    let lower = cc_norm(k - 1, g - c, c, s, policy)?.0;
    let upper = (c - delta) / (s * delta) * cc_norm(k - 1, g, c, s, policy)?.1
        + cc_norm(k - 1, g - c + delta, c, s, policy)?.1;
    Ok((lower, upper))
}

fn ir_exact(k: usize, g: f64, c: f64, s: f64) -> Exact {
    if g <= 1.0 {
        Exact::Value(0.0)
    } else if g.ln() >= k as f64 * c.ln_1p() {
        Exact::Value(1.0)
    } else if k == 1 {
        Exact::Value(one_minus_exp((g - 1.0) / (s * (1.0 + c - g))))
    } else {
        Exact::No
    }
}

/// Normalized IR kernel bounds.
fn ir_norm(k: usize, g: f64, c: f64, s: f64, policy: &dyn DeltaPolicy) -> Result<(f64, f64)> {
    if let Exact::Value(v) = ir_exact(k, g, c, s) {
        return Ok((v, v));
    }
    if g < 1.0 + c {
        let r = (g.ln() / k as f64).exp();
        let x = (r - 1.0) / (s * (1.0 + c - r));
        let y = (g - 1.0) / (s * (1.0 + c - g));
        return Ok((lower_closed(x, k), y.powi(k as i32)));
    }
    let delta = checked_delta(policy, k, g, c)?;
    let lower = ir_norm(k - 1, g / (1.0 + c), c, s, policy)?.0;
    let upper = (c - delta) / (s * delta) * ir_norm(k - 1, g, c, s, policy)?.1
        + ir_norm(k - 1, g / (1.0 + c - delta), c, s, policy)?.1;
    Ok((lower, upper))
}

fn denormalize(params: &KernelParams, v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        (v.ln() + params.ln_scale()).exp()
    }
}

fn kernel_interval(params: &KernelParams, quantity: Quantity, (lo, hi): (f64, f64)) -> BoundInterval {
    BoundInterval {
        lower: denormalize(params, lo),
        upper: denormalize(params, hi),
        quantity,
        params: Some(*params),
    }
}

/// `phi_K` in one of its exact regimes: `gamma <= 0`, `gamma >= K c`, or
/// `K = 1`.
pub fn phi_exact_base(params: &KernelParams) -> Result<f64> {
    params.validate()?;
    match cc_exact(params.k, params.gamma, params.c, params.snr()) {
        Exact::Value(v) => Ok(denormalize(params, v)),
        Exact::No => Err(Error::arg(
            "params",
            format!("phi_{} at gamma = {} is not in an exact regime", params.k, params.gamma),
        )),
    }
}

pub fn phi_bounds(params: &KernelParams) -> Result<BoundInterval> {
    phi_bounds_with(params, &CcDelta)
}

pub fn phi_bounds_with(params: &KernelParams, policy: &dyn DeltaPolicy) -> Result<BoundInterval> {
    params.validate()?;
    let norm = cc_norm(params.k, params.gamma, params.c, params.snr(), policy)?;
    Ok(kernel_interval(params, Quantity::Phi, norm))
}

/// `psi_K` in one of its exact regimes: `gamma <= 1`,
/// `gamma >= (1 + c)^K`, or `K = 1`.
pub fn psi_exact_base(params: &KernelParams) -> Result<f64> {
    params.validate()?;
    match ir_exact(params.k, params.gamma, params.c, params.snr()) {
        Exact::Value(v) => Ok(denormalize(params, v)),
        Exact::No => Err(Error::arg(
            "params",
            format!("psi_{} at gamma = {} is not in an exact regime", params.k, params.gamma),
        )),
    }
}

pub fn psi_bounds(params: &KernelParams) -> Result<BoundInterval> {
    psi_bounds_with(params, &IrDelta)
}

pub fn psi_bounds_with(params: &KernelParams, policy: &dyn DeltaPolicy) -> Result<BoundInterval> {
    params.validate()?;
    let norm = ir_norm(params.k, params.gamma, params.c, params.snr(), policy)?;
    Ok(kernel_interval(params, Quantity::Psi, norm))
}

/// Normalized bounds for one layer of a user's union.
struct LayerBound {
    lower: f64,
    upper: f64,
    params: Option<KernelParams>,
}

fn outage_bounds(
    config: &SystemConfig,
    user: usize,
    quantity: Quantity,
    policy: &dyn DeltaPolicy,
) -> Result<BoundInterval> {
    config.check_user(user)?;
    let eff = apply_imperfect_csi(config)?;
    let k = config.max_rounds();
    let mean = eff.mean_gain(user);
    let noise = eff.noise_var(user);
    let ratios = config.power_ratios();
    let mut layers = Vec::new();
    for j in user..=config.num_users() {
        let rate = config.rate(j);
        let layer = match ratios.get(j) {
            Ratio::Infinite => {
                // No interference: the SINR is the gain times P_1/N.
                let s = mean * config.power(j) / noise;
                let (lower, upper) = match quantity {
                    Quantity::OutageCc => {
                        let v = erlang_cdf(k, (rate.exp2() - 1.0) / s);
                        (v, v)
                    }
                    _ => {
                        let per_round = |t: f64| one_minus_exp(t / s).powi(k as i32);
                        (per_round((rate / k as f64).exp2() - 1.0), per_round(rate.exp2() - 1.0))
                    }
                };
                LayerBound { lower, upper, params: None }
            }
            Ratio::Finite(c) => {
                let params = KernelParams::new(
                    k,
                    if quantity == Quantity::OutageCc { rate.exp2() - 1.0 } else { rate.exp2() },
                    c,
                    mean,
                    config.interference_power(j) / noise,
                )?;
                let (lower, upper) = if quantity == Quantity::OutageCc {
                    cc_norm(k, params.gamma, c, params.snr(), policy)?
                } else {
                    ir_norm(k, params.gamma, c, params.snr(), policy)?
                };
                LayerBound { lower, upper, params: Some(params) }
            }
        };
        layers.push(layer);
    }
    let lower = layers.iter().map(|l| l.lower).fold(0.0, f64::max);
    let upper: f64 = layers.iter().map(|l| l.upper).sum();
    let binding = layers
        .iter()
        .max_by(|a, b| a.upper.total_cmp(&b.upper))
        .and_then(|l| l.params);
    Ok(BoundInterval {
        lower: lower.min(1.0),
        upper: upper.min(1.0),
        quantity,
        params: binding,
    })
}

/// `P(sum of k unit exponentials < x)`.
fn erlang_cdf(k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    // The series form cancels badly for small x; sum the complementary
    // tail directly there.
    if x < 1.0 {
        let mut term = (-x).exp() * x.powi(k as i32) / factorial(k);
        let mut sum = 0.0;
        let mut n = k;
        while term > sum * 1e-17 && n < k + 200 {
            sum += term;
            n += 1;
            term *= x / n as f64;
        }
        return sum;
    }
    let mut term = 1.0;
    let mut tail = 0.0;
    for n in 0..k {
        if n > 0 {
            term *= x / n as f64;
        }
        tail += term;
    }
    (1.0 - (-x).exp() * tail).max(0.0)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|n| n as f64).product()
}

/// CC outage bounds of `user` (1-based): the union over layers `user..=M`,
/// with the largest per-layer lower bound and the clamped sum of upper
/// bounds.
pub fn cc_outage_bounds(config: &SystemConfig, user: usize) -> Result<BoundInterval> {
    outage_bounds(config, user, Quantity::OutageCc, &CcDelta)
}

pub fn cc_outage_bounds_with(config: &SystemConfig, user: usize, policy: &dyn DeltaPolicy) -> Result<BoundInterval> {
    outage_bounds(config, user, Quantity::OutageCc, policy)
}

/// IR counterpart of [`cc_outage_bounds`].
pub fn ir_outage_bounds(config: &SystemConfig, user: usize) -> Result<BoundInterval> {
    outage_bounds(config, user, Quantity::OutageIr, &IrDelta)
}

pub fn ir_outage_bounds_with(config: &SystemConfig, user: usize, policy: &dyn DeltaPolicy) -> Result<BoundInterval> {
    outage_bounds(config, user, Quantity::OutageIr, policy)
}

/// Monte Carlo estimate of a kernel integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    /// Samples that satisfied the step condition.
    pub hits: u64,
    pub seed: u64,
    pub sampling: Sampling,
    /// Factor mapping the hit fraction to the estimate (1 for uniform).
    pub scale: f64,
}

impl OracleEstimate {
    /// Confidence interval at `z` standard deviations.
    ///
    /// An importance-sampled estimate is a fixed multiple of the hit
    /// fraction, so it gets a Wilson interval, which stays informative when
    /// few or no samples hit. A uniform estimate gets `estimate +- z * SE`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        match self.sampling {
            Sampling::Uniform => (
                (self.estimate - z * self.std_error).max(0.0),
                self.estimate + z * self.std_error,
            ),
            Sampling::Importance => {
                let (lo, hi) = wilson_interval_z(self.hits, self.samples, z);
                (lo * self.scale, hi * self.scale)
            }
        }
    }

    /// Whether `[lower, upper]` meets the `z`-sigma interval, with a small
    /// relative allowance for rounding.
    pub fn consistent_with(&self, lower: f64, upper: f64, z: f64) -> bool {
        let (lo, hi) = self.interval(z);
        lower <= hi * (1.0 + 1e-9) && lo * (1.0 - 1e-9) <= upper
    }
}

/// How the oracle draws points in `[0, c]^K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Uniform points, integrand weighted by its value.
    #[default]
    Uniform,
    /// Points drawn from the normalized integrand without the step factor,
    /// so only the step is averaged. Much lower variance at high SNR.
    Importance,
}

const ORACLE_BLOCK: u64 = 1 << 12;

#[derive(Clone, Copy)]
enum Step {
    Phi,
    Psi,
}

impl Step {
    fn holds(self, z: &[f64], p: &KernelParams) -> bool {
        match self {
            Step::Phi => p.gamma + z.iter().sum::<f64>() - p.k as f64 * p.c >= 0.0,
            Step::Psi => {
                let ln_prod: f64 = z.iter().map(|&zk| (1.0 + p.c - zk).ln()).sum();
                p.gamma.ln() - ln_prod >= 0.0
            }
        }
    }
}

fn oracle(params: &KernelParams, samples: u64, seed: u64, sampling: Sampling, step: Step) -> Result<OracleEstimate> {
    params.validate()?;
    if samples == 0 {
        return Err(Error::arg("samples", "at least one sample is required"));
    }
    let rng = CounterRng::new(seed, Stream::KernelOracle);
    let k = params.k;
    let c = params.c;
    let s = params.snr();
    let ln_c = c.ln();
    // ln of the per-dimension integral of the integrand without the step.
    let ln_g = s.ln() - ln_c - 1.0 / s;
    let blocks = samples.div_ceil(ORACLE_BLOCK);
    let partial: Vec<(f64, f64, u64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut z = vec![0.0; k];
            let (mut sum, mut sum_sq, mut hits) = (0.0, 0.0, 0u64);
            let start = b * ORACLE_BLOCK;
            for n in start..(start + ORACLE_BLOCK).min(samples) {
                let f = match sampling {
                    Sampling::Uniform => {
                        let mut ln_f = k as f64 * ln_c;
                        for (d, zd) in z.iter_mut().enumerate() {
                            *zd = c * rng.unit_open_closed(n, d as u64, 0);
                            ln_f -= c / (s * *zd) + 2.0 * zd.ln();
                        }
                        if step.holds(&z, params) {
                            ln_f.exp()
                        } else {
                            0.0
                        }
                    }
                    Sampling::Importance => {
                        for (d, zd) in z.iter_mut().enumerate() {
                            let u = rng.unit_open_closed(n, d as u64, 0);
                            *zd = 1.0 / (1.0 / c - (s / c) * u.ln());
                        }
                        if step.holds(&z, params) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                sum += f;
                sum_sq += f * f;
                hits += u64::from(f > 0.0);
            }
            (sum, sum_sq, hits)
        })
        .collect();
    let (sum, sum_sq, hits) = partial
        .iter()
        .fold((0.0, 0.0, 0), |(a, b, h), &(x, y, g)| (a + x, b + y, h + g));
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let mut se = (var / n).sqrt();
    let scale = match sampling {
        Sampling::Uniform => 1.0,
        Sampling::Importance => (k as f64 * ln_g).exp(),
    };
    se *= scale;
    Ok(OracleEstimate {
        estimate: mean * scale,
        std_error: se,
        samples,
        hits,
        seed,
        sampling,
        scale,
    })
}

/// Brute-force estimate of `phi_K(gamma)` from uniform points in `[0, c]^K`.
pub fn phi_oracle(params: &KernelParams, samples: u64, seed: u64) -> Result<OracleEstimate> {
    oracle(params, samples, seed, Sampling::Uniform, Step::Phi)
}

pub fn phi_oracle_with(params: &KernelParams, samples: u64, seed: u64, sampling: Sampling) -> Result<OracleEstimate> {
    oracle(params, samples, seed, sampling, Step::Phi)
}

/// Brute-force estimate of `psi_K(gamma)` from uniform points in `[0, c]^K`.
pub fn psi_oracle(params: &KernelParams, samples: u64, seed: u64) -> Result<OracleEstimate> {
    oracle(params, samples, seed, Sampling::Uniform, Step::Psi)
}

pub fn psi_oracle_with(params: &KernelParams, samples: u64, seed: u64, sampling: Sampling) -> Result<OracleEstimate> {
    oracle(params, samples, seed, sampling, Step::Psi)
}

/// Normalizing factor `(c/s)^K e^{K/s}` that turns a kernel into an
/// outage probability.
pub fn outage_prefactor(params: &KernelParams) -> f64 {
    (-params.ln_scale()).exp()
}
