//! Scenario description shared by every other module.
//!
//! A [`RawConfig`] is what a JSON file deserializes into; [`validate_config`]
//! checks it and produces a [`SystemConfig`], which is immutable afterwards
//! and always carries absolute transmit powers in linear watts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Converts a power in dBW to linear watts.
pub fn dbw_to_watts(dbw: f64) -> f64 {
    10f64.powf(dbw / 10.0)
}

/// Converts a linear power in watts to dBW.
pub fn watts_to_dbw(watts: f64) -> f64 {
    10.0 * watts.log10()
}

/// Retransmission combining scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HarqScheme {
    /// Each round is decoded on its own (selection combining).
    #[serde(rename = "I")]
    TypeI,
    /// Identical retransmissions combined by maximal-ratio combining.
    #[serde(rename = "CC")]
    ChaseCombining,
    /// Fresh parity per round; mutual information adds up.
    #[serde(rename = "IR")]
    IncrementalRedundancy,
}

impl HarqScheme {
    pub const ALL: [HarqScheme; 3] = [
        HarqScheme::TypeI,
        HarqScheme::ChaseCombining,
        HarqScheme::IncrementalRedundancy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HarqScheme::TypeI => "I",
            HarqScheme::ChaseCombining => "CC",
            HarqScheme::IncrementalRedundancy => "IR",
        }
    }
}

impl fmt::Display for HarqScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HarqScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "TYPEI" | "TYPE-I" | "TYPE_I" => Ok(HarqScheme::TypeI),
            "CC" | "CHASECOMBINING" | "CHASE" => Ok(HarqScheme::ChaseCombining),
            "IR" | "INCREMENTALREDUNDANCY" => Ok(HarqScheme::IncrementalRedundancy),
            _ => Err(Error::arg(
                "scheme",
                format!("unknown HARQ scheme {s:?} (expected I, CC or IR)"),
            )),
        }
    }
}

/// Transmission strategy across HARQ rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// The superposed signal is resent in every round.
    #[default]
    #[serde(alias = "Simple")]
    Simple,
    /// Once user 1 has decoded everything, only the far user's message is resent.
    #[serde(alias = "PowerEfficient")]
    PowerEfficient,
}

/// Extended-real power ratio `c_j`. Layer 1 has no interferers, so its ratio
/// is the distinguished [`Ratio::Infinite`] value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Infinite,
    Finite(f64),
}

impl Ratio {
    pub fn finite(self) -> Option<f64> {
        match self {
            Ratio::Infinite => None,
            Ratio::Finite(c) => Some(c),
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Ratio::Infinite)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Infinite => f.write_str("inf"),
            Ratio::Finite(c) => write!(f, "{c}"),
        }
    }
}

/// `c_j = P_j / sum_{l<j} P_l`, with `c_1 = inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRatios(Vec<Ratio>);

impl PowerRatios {
    pub fn from_powers(powers: &[f64]) -> Result<Self> {
        if powers.is_empty() {
            return Err(Error::arg("powers", "at least one power is required"));
        }
        if let Some(p) = powers.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::arg("powers", format!("powers must be positive, got {p}")));
        }
        let mut ratios = Vec::with_capacity(powers.len());
        ratios.push(Ratio::Infinite);
        let mut below = powers[0];
        for &p in &powers[1..] {
            ratios.push(Ratio::Finite(p / below));
            below += p;
        }
        Ok(PowerRatios(ratios))
    }

    /// Rebuilds absolute powers from a reference power `p1` for layer 1.
    pub fn materialize(&self, p1: f64) -> Vec<f64> {
        materialize_powers(p1, self.0.iter().skip(1).filter_map(|r| r.finite()))
    }

    /// Ratio of layer `layer` (1-based).
    pub fn get(&self, layer: usize) -> Ratio {
        self.0[layer - 1]
    }

    pub fn as_slice(&self) -> &[Ratio] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn materialize_powers(p1: f64, ratios: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut powers = vec![p1];
    let mut below = p1;
    for c in ratios {
        let p = c * below;
        powers.push(p);
        below += p;
    }
    powers
}

/// Configuration as written in a JSON file, before validation.
///
/// Powers are given either as `powers` (absolute, watts) or as a reference
/// power for user 1 (`p1_watts` or `p1_dbw`) plus `ratios` `c_2..c_M`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub num_users: usize,
    pub max_rounds: usize,
    pub rates: Vec<f64>,
    pub mean_gains: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1_watts: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1_dbw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csi_error_vars: Option<Vec<f64>>,
    #[serde(default)]
    pub strategy: Strategy,
}

impl RawConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// A validated scenario. Immutable; the `with_*` methods return new,
/// revalidated copies.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    num_users: usize,
    max_rounds: usize,
    rates: Vec<f64>,
    mean_gains: Vec<f64>,
    powers: Vec<f64>,
    csi_error_vars: Vec<f64>,
    strategy: Strategy,
}

/// Checks every invariant of `raw` and materializes absolute powers.
pub fn validate_config(raw: &RawConfig) -> Result<SystemConfig> {
    let m = raw.num_users;
    if m == 0 {
        return Err(Error::config("num_users", "at least one user is required"));
    }
    if raw.max_rounds == 0 {
        return Err(Error::config("max_rounds", "at least one HARQ round is required"));
    }
    check_len("rates", &raw.rates, m)?;
    if let Some(r) = raw.rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::config("rates", format!("rates must be finite and non-negative, got {r}")));
    }
    check_len("mean_gains", &raw.mean_gains, m)?;
    if let Some(g) = raw.mean_gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(Error::config("mean_gains", format!("mean gains must be positive, got {g}")));
    }
    if raw.mean_gains.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::config("mean_gains", "mean gains must be non-increasing"));
    }

    let powers = match (&raw.powers, raw.p1_watts, raw.p1_dbw, &raw.ratios) {
        (Some(p), None, None, None) => {
            check_len("powers", p, m)?;
            p.clone()
        }
        (None, p1w, p1d, ratios) => {
            let p1 = match (p1w, p1d) {
                (Some(w), None) => w,
                (None, Some(d)) => dbw_to_watts(d),
                (Some(_), Some(_)) => {
                    return Err(Error::config("p1_watts", "give either p1_watts or p1_dbw, not both"))
                }
                (None, None) => {
                    return Err(Error::config(
                        "powers",
                        "missing power specification: give `powers` or `p1_watts`/`p1_dbw` plus `ratios`",
                    ))
                }
            };
            let empty = Vec::new();
            let ratios = ratios.as_ref().unwrap_or(&empty);
            if ratios.len() + 1 != m {
                return Err(Error::config(
                    "ratios",
                    format!("expected {} ratios (c_2..c_M), got {}", m - 1, ratios.len()),
                ));
            }
            if let Some(c) = ratios.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
                return Err(Error::config("ratios", format!("ratios must be positive, got {c}")));
            }
            materialize_powers(p1, ratios.iter().copied())
        }
        _ => {
            return Err(Error::config(
                "powers",
                "give either absolute `powers` or a reference power plus `ratios`, not both",
            ))
        }
    };
    if let Some(p) = powers.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::config("powers", format!("powers must be positive, got {p}")));
    }

    let csi_error_vars = match &raw.csi_error_vars {
        Some(v) => {
            check_len("csi_error_vars", v, m)?;
            v.clone()
        }
        None => vec![0.0; m],
    };
    for (i, (&var, &g)) in csi_error_vars.iter().zip(&raw.mean_gains).enumerate() {
        if !(var.is_finite() && var >= 0.0) {
            return Err(Error::config(
                "csi_error_vars",
                format!("error variance of user {} must be non-negative, got {var}", i + 1),
            ));
        }
        if var >= g {
            return Err(Error::config(
                "csi_error_vars",
                format!(
                    "error variance of user {} ({var}) must be below its mean gain ({g})",
                    i + 1
                ),
            ));
        }
    }

    if raw.strategy == Strategy::PowerEfficient && m != 2 {
        return Err(Error::config(
            "strategy",
            "power-efficient strategy supported for M=2 only",
        ));
    }

    Ok(SystemConfig {
        num_users: m,
        max_rounds: raw.max_rounds,
        rates: raw.rates.clone(),
        mean_gains: raw.mean_gains.clone(),
        powers,
        csi_error_vars,
        strategy: raw.strategy,
    })
}

fn check_len(field: &'static str, v: &[f64], m: usize) -> Result<()> {
    if v.len() != m {
        return Err(Error::config(
            field,
            format!("expected {m} entries (one per user), got {}", v.len()),
        ));
    }
    Ok(())
}

impl SystemConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        validate_config(&RawConfig::from_json_str(s)?)
    }

    /// Two-user scenario with `P_2 = c * P_1`.
    pub fn two_user(
        max_rounds: usize,
        rates: [f64; 2],
        mean_gains: [f64; 2],
        p1_watts: f64,
        c: f64,
    ) -> Result<Self> {
        validate_config(&RawConfig {
            num_users: 2,
            max_rounds,
            rates: rates.to_vec(),
            mean_gains: mean_gains.to_vec(),
            p1_watts: Some(p1_watts),
            ratios: Some(vec![c]),
            ..RawConfig::default()
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn max_rounds(&self) -> usize {
        self.max_rounds
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Target rate of `user` (1-based).
    pub fn rate(&self, user: usize) -> f64 {
        self.rates[user - 1]
    }

    pub fn mean_gains(&self) -> &[f64] {
        &self.mean_gains
    }

    pub fn mean_gain(&self, user: usize) -> f64 {
        self.mean_gains[user - 1]
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn power(&self, layer: usize) -> f64 {
        self.powers[layer - 1]
    }

    /// Reference power of user 1.
    pub fn p1(&self) -> f64 {
        self.powers[0]
    }

    /// Power of the layers still undecoded while decoding `layer`: `sum_{l<j} P_l`.
    pub fn interference_power(&self, layer: usize) -> f64 {
        self.powers[..layer - 1].iter().sum()
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    pub fn csi_error_vars(&self) -> &[f64] {
        &self.csi_error_vars
    }

    pub fn has_perfect_csi(&self) -> bool {
        self.csi_error_vars.iter().all(|&v| v == 0.0)
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn power_ratios(&self) -> PowerRatios {
        power_ratios(self)
    }

    /// Round-trips through [`RawConfig`] with absolute powers.
    pub fn to_raw(&self) -> RawConfig {
        RawConfig {
            num_users: self.num_users,
            max_rounds: self.max_rounds,
            rates: self.rates.clone(),
            mean_gains: self.mean_gains.clone(),
            powers: Some(self.powers.clone()),
            csi_error_vars: Some(self.csi_error_vars.clone()),
            strategy: self.strategy,
            ..RawConfig::default()
        }
    }

    /// Short hex digest of the resolved configuration.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(&self.to_raw()).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Rescales every power so that user 1 transmits `p1` watts, keeping the ratios.
    pub fn with_p1(&self, p1: f64) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.powers = None;
        raw.p1_watts = Some(p1);
        raw.ratios = Some(
            self.power_ratios()
                .as_slice()
                .iter()
                .filter_map(|r| r.finite())
                .collect(),
        );
        validate_config(&raw)
    }

    pub fn with_p1_dbw(&self, dbw: f64) -> Result<Self> {
        self.with_p1(dbw_to_watts(dbw))
    }

    pub fn with_rates(&self, rates: Vec<f64>) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.rates = rates;
        validate_config(&raw)
    }

    pub fn with_rate(&self, user: usize, rate: f64) -> Result<Self> {
        if user == 0 || user > self.num_users {
            return Err(Error::arg("user", format!("user {user} out of range 1..={}", self.num_users)));
        }
        let mut rates = self.rates.clone();
        rates[user - 1] = rate;
        self.with_rates(rates)
    }

    pub fn with_max_rounds(&self, max_rounds: usize) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.max_rounds = max_rounds;
        validate_config(&raw)
    }

    pub fn with_csi_error_vars(&self, vars: Vec<f64>) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.csi_error_vars = Some(vars);
        validate_config(&raw)
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.strategy = strategy;
        validate_config(&raw)
    }

    pub(crate) fn check_user(&self, user: usize) -> Result<()> {
        if user == 0 || user > self.num_users {
            return Err(Error::arg(
                "user",
                format!("user {user} out of range 1..={}", self.num_users),
            ));
        }
        Ok(())
    }
}

/// `c_1 = inf`, `c_j = P_j / sum_{l<j} P_l` for `j >= 2`.
pub fn power_ratios(config: &SystemConfig) -> PowerRatios {
    PowerRatios::from_powers(&config.powers).expect("validated powers are positive")
}
