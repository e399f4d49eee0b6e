//! Experiment specs, sweeps and result tables.
//!
//! A spec file is a configuration object (the fields of [`RawConfig`]) with
//! extra experiment keys:
//!
//! ```json
//! {
//!   "num_users": 2, "max_rounds": 4, "rates": [1, 1], "mean_gains": [2, 1],
//!   "ratios": [1.2],
//!   "sweep_p1_dbw": {"start": 0, "stop": 30, "step": 2},
//!   "schemes": ["I", "CC", "IR"], "users": [2],
//!   "trials": 1000000, "seed": 1, "outputs": ["mc", "bounds"]
//! }
//! ```
//!
//! `sweep_rate` (`{"user": 2, "values": [...]}` or with `start`/`stop`/`step`)
//! sweeps one user's rate instead. Without a sweep, the single configured
//! operating point is evaluated.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::{cc_outage_bounds, ir_outage_bounds, typei_user_outage, BoundInterval};
use crate::diversity::{empirical_diversity, power_efficient_diversity, user_diversity, DiversityReport};
use crate::model::{validate_config, watts_to_dbw, HarqScheme, RawConfig, Strategy, SystemConfig};
use crate::montecarlo::{estimate_outage, wilson_interval_z, OutageEstimate, DEFAULT_TRIALS};
use crate::{Error, Result};

/// Fewest trials accepted when Monte Carlo output is requested.
pub const MIN_MC_TRIALS: u64 = 1_000;

/// Normal quantile of the slack used when checking a Monte Carlo estimate
/// against bounds or a closed form.
pub const SANDWICH_Z: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    /// `start, start + step, ...` up to and including `stop` (within a
    /// rounding allowance).
    pub fn points(&self, field: &'static str) -> Result<Vec<f64>> {
        let Grid { start, stop, step } = *self;
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(Error::config(field, "grid bounds must be finite"));
        }
        if step <= 0.0 {
            return Err(Error::config(field, format!("step must be positive, got {step}")));
        }
        if stop < start {
            return Err(Error::config(field, format!("stop {stop} is below start {start}")));
        }
        let n = ((stop - start) / step + 1e-9).floor();
        if n > 1e6 {
            return Err(Error::config(field, "grid has more than a million points"));
        }
        // Rounded so that e.g. 0.1 + 2 * 0.1 prints as 0.3.
        Ok((0..=n as usize)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RateSweepSpec {
    /// Defaults to the last user.
    #[serde(default)]
    pub user: Option<usize>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Mc,
    Bounds,
    ClosedForm,
    Diversity,
    All,
}

/// Spec file as written, before validation.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawExperiment {
    #[serde(default)]
    pub label: Option<String>,
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
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_p1_dbw: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_rate: Option<RateSweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schemes: Option<Vec<HarqScheme>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<OutputKind>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// User 1's power in dBW; ratios stay fixed.
    P1Dbw(Vec<f64>),
    Rate { user: usize, values: Vec<f64> },
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::P1Dbw(v) => v.len(),
            Sweep::Rate { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Outputs {
    pub mc: bool,
    pub bounds: bool,
    pub closed_form: bool,
    pub diversity: bool,
}

impl Outputs {
    pub const ALL: Outputs = Outputs {
        mc: true,
        bounds: true,
        closed_form: true,
        diversity: true,
    };

    fn from_kinds(kinds: &[OutputKind]) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::config("outputs", "at least one output is required"));
        }
        let mut o = Outputs::default();
        for k in kinds {
            match k {
                OutputKind::Mc => o.mc = true,
                OutputKind::Bounds => o.bounds = true,
                OutputKind::ClosedForm => o.closed_form = true,
                OutputKind::Diversity => o.diversity = true,
                OutputKind::All => o = Outputs::ALL,
            }
        }
        Ok(o)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub label: String,
    pub base: SystemConfig,
    pub sweep: Sweep,
    pub schemes: Vec<HarqScheme>,
    pub users: Vec<usize>,
    pub trials: u64,
    pub seed: u64,
    pub outputs: Outputs,
}

impl ExperimentSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawExperiment = serde_json::from_str(s)?;
        Self::from_raw(raw)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_raw(raw: RawExperiment) -> Result<Self> {
        let mut config = RawConfig {
            num_users: raw.num_users,
            max_rounds: raw.max_rounds,
            rates: raw.rates,
            mean_gains: raw.mean_gains,
            powers: raw.powers,
            p1_watts: raw.p1_watts,
            p1_dbw: raw.p1_dbw,
            ratios: raw.ratios,
            csi_error_vars: raw.csi_error_vars,
            strategy: raw.strategy,
        };
        if raw.sweep_p1_dbw.is_some() && raw.sweep_rate.is_some() {
            return Err(Error::config("sweep_rate", "only one of sweep_p1_dbw and sweep_rate may be given"));
        }
        // A power sweep supplies P1 itself; the base power is optional then.
        if let Some(grid) = &raw.sweep_p1_dbw {
            if config.powers.is_none() && config.p1_watts.is_none() && config.p1_dbw.is_none() {
                config.p1_dbw = Some(grid.start);
            }
        }
        let base = validate_config(&config)?;
        let m = base.num_users();

        let sweep = match (raw.sweep_p1_dbw, raw.sweep_rate) {
            (Some(grid), _) => Sweep::P1Dbw(grid.points("sweep_p1_dbw")?),
            (None, Some(rs)) => {
                let user = rs.user.unwrap_or(m);
                if user == 0 || user > m {
                    return Err(Error::config("sweep_rate", format!("user {user} out of range 1..={m}")));
                }
                let values = match (rs.values, rs.start, rs.stop, rs.step) {
                    (Some(v), None, None, None) => v,
                    (None, Some(start), Some(stop), Some(step)) => Grid { start, stop, step }.points("sweep_rate")?,
                    _ => {
                        return Err(Error::config(
                            "sweep_rate",
                            "give either `values` or all of `start`, `stop` and `step`",
                        ))
                    }
                };
                if values.is_empty() {
                    return Err(Error::config("sweep_rate", "sweep must not be empty"));
                }
                for &r in &values {
                    base.with_rate(user, r)?;
                }
                Sweep::Rate { user, values }
            }
            (None, None) => Sweep::P1Dbw(vec![watts_to_dbw(base.p1())]),
        };

        let schemes = raw.schemes.unwrap_or_else(|| HarqScheme::ALL.to_vec());
        if schemes.is_empty() {
            return Err(Error::config("schemes", "at least one scheme is required"));
        }
        let schemes: Vec<HarqScheme> = schemes.into_iter().collect::<BTreeSet<_>>().into_iter().collect();

        let users = raw.users.unwrap_or_else(|| (1..=m).collect());
        if users.is_empty() {
            return Err(Error::config("users", "at least one user is required"));
        }
        if let Some(u) = users.iter().find(|&&u| u == 0 || u > m) {
            return Err(Error::config("users", format!("user {u} out of range 1..={m}")));
        }
        let users: Vec<usize> = users.into_iter().collect::<BTreeSet<_>>().into_iter().collect();

        let outputs = match raw.outputs {
            Some(kinds) => Outputs::from_kinds(&kinds)?,
            None => Outputs::ALL,
        };
        let trials = raw.trials.unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(Error::config("trials", "must be positive"));
        }
        if outputs.mc && trials < MIN_MC_TRIALS {
            return Err(Error::config(
                "trials",
                format!("Monte Carlo output needs at least {MIN_MC_TRIALS} trials, got {trials}"),
            ));
        }
        Ok(ExperimentSpec {
            label: raw.label.unwrap_or_default(),
            base,
            sweep,
            schemes,
            users,
            trials,
            seed: raw.seed.unwrap_or(0),
            outputs,
        })
    }

    /// Same spec with a different trial count, revalidated.
    pub fn with_trials(&self, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::config("trials", "must be positive"));
        }
        if self.outputs.mc && trials < MIN_MC_TRIALS {
            return Err(Error::config(
                "trials",
                format!("Monte Carlo output needs at least {MIN_MC_TRIALS} trials, got {trials}"),
            ));
        }
        Ok(ExperimentSpec { trials, ..self.clone() })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ExperimentSpec { seed, ..self.clone() }
    }

    /// Configuration at sweep point `index`.
    pub fn point(&self, index: usize) -> Result<SystemConfig> {
        match &self.sweep {
            Sweep::P1Dbw(v) => self.base.with_p1_dbw(v[index]),
            Sweep::Rate { user, values } => self.base.with_rate(*user, values[index]),
        }
    }
}

/// One line of a result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub config_hash: String,
    pub label: String,
    pub scheme: HarqScheme,
    pub user: usize,
    pub sweep_index: usize,
    pub p1_dbw: f64,
    /// Rate of `user`.
    pub rate: f64,
    pub trials: Option<u64>,
    pub p_mc: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p_lower_bound: Option<f64>,
    pub p_upper_bound: Option<f64>,
    pub p_closed_form: Option<f64>,
    pub d_closed_form: Option<usize>,
    pub d_tilde: Option<f64>,
    /// Whether the Monte Carlo estimate is consistent with the bounds (or
    /// the closed form); empty when either side is missing.
    pub sandwich_ok: Option<bool>,
}

/// Column names of the CSV table, in order.
pub const CSV_COLUMNS: [&str; 17] = [
    "config_hash",
    "label",
    "scheme",
    "user",
    "sweep_index",
    "p1_dbw",
    "rate",
    "trials",
    "p_mc",
    "ci_low",
    "ci_high",
    "p_lower_bound",
    "p_upper_bound",
    "p_closed_form",
    "d_closed_form",
    "d_tilde",
    "sandwich_ok",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn sandwich_failures(&self) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.sandwich_ok == Some(false)).collect()
    }
}

/// Whether a `z`-sigma Wilson interval around `est` meets `[lower, upper]`.
pub fn sandwich_holds(est: &OutageEstimate, lower: f64, upper: f64, z: f64) -> bool {
    let (lo, hi) = wilson_interval_z(est.failures, est.trials, z);
    lo <= upper * (1.0 + 1e-12) && lower * (1.0 - 1e-12) <= hi
}

fn analytic_interval(config: &SystemConfig, user: usize, scheme: HarqScheme) -> Result<Option<BoundInterval>> {
    Ok(match scheme {
        HarqScheme::TypeI => None,
        HarqScheme::ChaseCombining => Some(cc_outage_bounds(config, user)?),
        HarqScheme::IncrementalRedundancy => Some(ir_outage_bounds(config, user)?),
    })
}

fn diversity_report(config: &SystemConfig, scheme: HarqScheme) -> Result<DiversityReport> {
    match config.strategy() {
        Strategy::Simple => user_diversity(config, scheme),
        Strategy::PowerEfficient => power_efficient_diversity(config, scheme),
    }
}

/// Evaluates every (scheme, user, sweep point) of `spec`. Rows are ordered
/// by scheme, then user, then sweep index. Every Monte Carlo run uses the
/// spec's seed, so estimates are paired across schemes and sweep points.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let configs: Vec<SystemConfig> = (0..spec.sweep.len()).map(|i| spec.point(i)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &scheme in &spec.schemes {
        let reports: Vec<Option<DiversityReport>> = configs
            .iter()
            .map(|cfg| spec.outputs.diversity.then(|| diversity_report(cfg, scheme)).transpose())
            .collect::<Result<_>>()?;
        for &user in &spec.users {
            let first = rows.len();
            for (index, cfg) in configs.iter().enumerate() {
                // The analytic results describe the simple strategy; under the
                // power-efficient one they no longer apply to user 2.
                let analytic_applies = cfg.strategy() == Strategy::Simple || user == 1;
                let mc = if spec.outputs.mc {
                    Some(estimate_outage(cfg, user, scheme, spec.trials, spec.seed)?)
                } else {
                    None
                };
                let bounds = if spec.outputs.bounds && analytic_applies {
                    analytic_interval(cfg, user, scheme)?
                } else {
                    None
                };
                let closed = if spec.outputs.closed_form && analytic_applies && scheme == HarqScheme::TypeI {
                    Some(typei_user_outage(cfg, user)?)
                } else {
                    None
                };
                let reference = bounds.map(|b| (b.lower, b.upper)).or(closed.map(|p| (p, p)));
                let sandwich_ok = match (mc.as_ref(), reference) {
                    (Some(est), Some((lo, hi))) => Some(sandwich_holds(est, lo, hi, SANDWICH_Z)),
                    _ => None,
                };
                rows.push(ResultRow {
                    config_hash: cfg.config_hash(),
                    label: spec.label.clone(),
                    scheme,
                    user,
                    sweep_index: index,
                    p1_dbw: match &spec.sweep {
                        Sweep::P1Dbw(v) => v[index],
                        Sweep::Rate { .. } => watts_to_dbw(cfg.p1()),
                    },
                    rate: cfg.rate(user),
                    trials: mc.map(|e| e.trials),
                    p_mc: mc.map(|e| e.p_hat),
                    ci_low: mc.map(|e| e.ci_low),
                    ci_high: mc.map(|e| e.ci_high),
                    p_lower_bound: bounds.map(|b| b.lower),
                    p_upper_bound: bounds.map(|b| b.upper),
                    p_closed_form: closed,
                    d_closed_form: reports[index].as_ref().map(|r| r.user(user)),
                    d_tilde: None,
                    sandwich_ok,
                });
            }
            if let Sweep::P1Dbw(_) = spec.sweep {
                fill_secant_slopes(&mut rows[first..]);
            }
        }
    }
    Ok(ExperimentResult { rows })
}

/// `d_tilde` of each row from the estimate at the previous sweep point.
fn fill_secant_slopes(rows: &mut [ResultRow]) {
    for i in 1..rows.len() {
        let (prev, cur) = (&rows[i - 1], &rows[i]);
        let delta = cur.p1_dbw - prev.p1_dbw;
        if let (Some(a), Some(b)) = (prev.p_mc, cur.p_mc) {
            rows[i].d_tilde = empirical_diversity(a, b, delta).ok();
        }
    }
}

/// Least-squares slope of `-10 log10 p` against `P1` in dB over the rows
/// with a positive estimate. A multi-point counterpart of the secant.
pub fn fitted_diversity(rows: &[ResultRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.p_mc.filter(|&p| p > 0.0).map(|p| (r.p1_dbw, -10.0 * p.log10())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::arg("format", format!("unknown format `{s}`, expected csv or json"))),
        }
    }
}

/// Writes `rows` with a header row, even when empty.
pub fn write_rows<T: Serialize>(rows: &[T], header: &[&str], format: Format, mut out: impl Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            w.write_record(header)?;
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_results(result: &ExperimentResult, format: Format, out: impl Write) -> Result<()> {
    write_rows(&result.rows, &CSV_COLUMNS, format, out)
}

/// One line of a diversity table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityRow {
    pub config_hash: String,
    pub label: String,
    pub scheme: HarqScheme,
    pub strategy: Strategy,
    pub sweep_index: usize,
    pub rate: f64,
    pub user: usize,
    pub d: usize,
    /// `d_{i->j}` for `j = i..=M`, separated by `;`.
    pub d_pairwise: String,
    /// `d_{2,l}` for `l = 1..=K`, separated by `;` (power-efficient only).
    pub d_conditional: String,
}

pub const DIVERSITY_COLUMNS: [&str; 10] = [
    "config_hash",
    "label",
    "scheme",
    "strategy",
    "sweep_index",
    "rate",
    "user",
    "d",
    "d_pairwise",
    "d_conditional",
];

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

/// Closed-form diversity of every selected user. Orders do not depend on
/// the power level, so a power sweep contributes only its first point.
pub fn diversity_table(spec: &ExperimentSpec) -> Result<Vec<DiversityRow>> {
    let points = match spec.sweep {
        Sweep::P1Dbw(_) => 1,
        Sweep::Rate { .. } => spec.sweep.len(),
    };
    let mut rows = Vec::new();
    for &scheme in &spec.schemes {
        for index in 0..points {
            let cfg = spec.point(index)?;
            let report = diversity_report(&cfg, scheme)?;
            for &user in &spec.users {
                rows.push(DiversityRow {
                    config_hash: cfg.config_hash(),
                    label: spec.label.clone(),
                    scheme,
                    strategy: report.strategy,
                    sweep_index: index,
                    rate: cfg.rate(user),
                    user,
                    d: report.user(user),
                    d_pairwise: join(&report.pairwise[user - 1]),
                    d_conditional: report.conditional.as_deref().map(join).unwrap_or_default(),
                });
            }
        }
    }
    Ok(rows)
}

/// Built-in reproductions of the reference figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl FigureId {
    pub const ALL: [FigureId; 5] = [FigureId::Fig1, FigureId::Fig2, FigureId::Fig3, FigureId::Fig4, FigureId::Fig5];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let valid: Vec<&str> = FigureId::ALL.iter().map(|id| id.as_str()).collect();
                Error::arg("figure", format!("unknown figure `{s}`, valid ids: {}", valid.join(", ")))
            })
    }
}

/// Ratios of the two-user power sweeps.
pub const FIG1_RATIOS: [f64; 3] = [0.8, 1.0, 1.2];
pub const FIG23_RATIOS: [f64; 3] = [0.4, 0.8, 1.2];
/// Ratios of the diversity staircases.
pub const FIG4_RATIOS: [f64; 3] = [0.5, 1.0, 2.0];

fn two_user_base(c: f64) -> RawExperiment {
    RawExperiment {
        num_users: 2,
        max_rounds: 4,
        rates: vec![1.0, 1.0],
        mean_gains: vec![2.0, 1.0],
        ratios: Some(vec![c]),
        ..RawExperiment::default()
    }
}

/// Spec files of a built-in figure, one per ratio, without trial count or
/// seed.
/// Power grid of the built-in figures, in dBW.
pub const DEFAULT_P1_GRID: Grid = Grid {
    start: -10.0,
    stop: 40.0,
    step: 2.0,
};

pub fn figure_raw_specs(id: FigureId) -> Vec<RawExperiment> {
    let p1_sweep = || Some(DEFAULT_P1_GRID);
    match id {
        FigureId::Fig1 | FigureId::Fig2 | FigureId::Fig3 => {
            let (ratios, scheme, outputs) = match id {
                FigureId::Fig1 => (FIG1_RATIOS, HarqScheme::TypeI, vec![OutputKind::Mc, OutputKind::ClosedForm]),
                FigureId::Fig2 => (FIG23_RATIOS, HarqScheme::ChaseCombining, vec![OutputKind::Mc, OutputKind::Bounds]),
                _ => (FIG23_RATIOS, HarqScheme::IncrementalRedundancy, vec![OutputKind::Mc, OutputKind::Bounds]),
            };
            ratios
                .iter()
                .map(|&c| RawExperiment {
                    label: Some(format!("{id} c={c}")),
                    sweep_p1_dbw: p1_sweep(),
                    schemes: Some(vec![scheme]),
                    users: Some(vec![2]),
                    outputs: Some([outputs.clone(), vec![OutputKind::Diversity]].concat()),
                    ..two_user_base(c)
                })
                .collect()
        }
        FigureId::Fig4 => FIG4_RATIOS
            .iter()
            .map(|&c| RawExperiment {
                label: Some(format!("{id} c={c}")),
                p1_watts: Some(1.0),
                sweep_rate: Some(RateSweepSpec {
                    user: Some(2),
                    values: None,
                    start: Some(0.1),
                    stop: Some(4.0),
                    step: Some(0.1),
                }),
                users: Some(vec![2]),
                outputs: Some(vec![OutputKind::Diversity]),
                ..two_user_base(c)
            })
            .collect(),
        FigureId::Fig5 => vec![RawExperiment {
            label: Some(format!("{id}")),
            num_users: 4,
            max_rounds: 3,
            rates: vec![2.0; 4],
            mean_gains: vec![2.0, 1.0, 0.5, 1.0 / 3.0],
            ratios: Some(vec![2.0, 1.4, 4.0]),
            sweep_p1_dbw: p1_sweep(),
            outputs: Some(vec![OutputKind::Mc, OutputKind::Diversity]),
            ..RawExperiment::default()
        }],
    }
}

/// Validated specs of a built-in figure.
pub fn figure_specs(id: FigureId, trials: u64, seed: u64) -> Result<Vec<ExperimentSpec>> {
    figure_raw_specs(id)
        .into_iter()
        .map(|raw| {
            ExperimentSpec::from_raw(RawExperiment {
                trials: Some(trials),
                seed: Some(seed),
                ..raw
            })
        })
        .collect()
}

/// Runs every spec of a built-in figure and concatenates the rows.
pub fn emit_figure(id: FigureId, trials: u64, seed: u64) -> Result<ExperimentResult> {
    let mut rows = Vec::new();
    for spec in figure_specs(id, trials, seed)? {
        rows.extend(run_experiment(&spec)?.rows);
    }
    Ok(ExperimentResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"{
        "label": "t",
        "num_users": 2, "max_rounds": 4, "rates": [1, 1], "mean_gains": [2, 1],
        "ratios": [1.2],
        "sweep_p1_dbw": {"start": 0, "stop": 10, "step": 5},
        "schemes": ["CC", "I"], "trials": 20000, "seed": 7
    }"#;

    #[test]
    fn parses_and_defaults() {
        let spec = ExperimentSpec::from_json_str(SPEC).unwrap();
        assert_eq!(spec.sweep, Sweep::P1Dbw(vec![0.0, 5.0, 10.0]));
        assert_eq!(spec.schemes, [HarqScheme::TypeI, HarqScheme::ChaseCombining]);
        assert_eq!(spec.users, [1, 2]);
        assert_eq!(spec.outputs, Outputs::ALL);
        assert!((spec.point(2).unwrap().power(2) - 12.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_specs() {
        let with = |extra: &str| SPEC.replacen("\"label\": \"t\",", extra, 1);
        assert!(ExperimentSpec::from_json_str(&SPEC.replace("20000", "0")).is_err());
        assert!(ExperimentSpec::from_json_str(&SPEC.replace("20000", "999")).is_err());
        assert!(ExperimentSpec::from_json_str(&with("\"bogus\": 1,")).is_err());
        assert!(ExperimentSpec::from_json_str(&with("\"users\": [3],")).is_err());
        assert!(ExperimentSpec::from_json_str(&with("\"schemes\": [],")).is_err());
        assert!(ExperimentSpec::from_json_str(&SPEC.replace("\"step\": 5", "\"step\": 0")).is_err());
        assert!(ExperimentSpec::from_json_str(&with("\"sweep_rate\": {\"values\": [1]},")).is_err());
        let err = ExperimentSpec::from_json_str("{\n\"num_users\": 2,\n\"max_rounds\": \"x\"}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        // few trials are fine when no simulation is requested
        assert!(ExperimentSpec::from_json_str(&with("\"outputs\": [\"bounds\"],").replace("20000", "5")).is_ok());
    }

    #[test]
    fn rows_ordered_and_checked() {
        let spec = ExperimentSpec::from_json_str(SPEC).unwrap();
        let res = run_experiment(&spec).unwrap();
        assert_eq!(res.rows.len(), 2 * 2 * 3);
        let keys: Vec<_> = res.rows.iter().map(|r| (r.scheme, r.user, r.sweep_index)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for r in &res.rows {
            assert!(r.sandwich_ok.is_some());
            assert_eq!(r.config_hash.len(), 16);
        }
        assert!(res.sandwich_failures().is_empty(), "{:?}", res.sandwich_failures());
        assert!(res.rows[1].d_tilde.is_some() && res.rows[0].d_tilde.is_none());
    }

    #[test]
    fn csv_is_deterministic_with_header() {
        let spec = ExperimentSpec::from_json_str(SPEC).unwrap();
        let render = || {
            let mut buf = Vec::new();
            write_results(&run_experiment(&spec).unwrap(), Format::Csv, &mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = render();
        assert_eq!(a, render());
        assert_eq!(a.lines().next().unwrap(), CSV_COLUMNS.join(","));
        let mut empty = Vec::new();
        write_results(&ExperimentResult { rows: vec![] }, Format::Csv, &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim(), CSV_COLUMNS.join(","));
    }

    #[test]
    fn rate_sweep_and_diversity_table() {
        let spec = ExperimentSpec::from_json_str(
            r#"{"num_users": 2, "max_rounds": 4, "rates": [1, 1], "mean_gains": [2, 1],
                "p1_watts": 1, "ratios": [1.0], "users": [2],
                "sweep_rate": {"start": 0.5, "stop": 3.0, "step": 0.5},
                "outputs": ["diversity"], "trials": 1}"#,
        )
        .unwrap();
        let rows = diversity_table(&spec).unwrap();
        assert_eq!(rows.len(), 3 * 6);
        for s in HarqScheme::ALL {
            let d: Vec<usize> = rows.iter().filter(|r| r.scheme == s).map(|r| r.d).collect();
            assert!(d.windows(2).all(|w| w[1] <= w[0]), "{s}: {d:?}");
        }
        let res = run_experiment(&spec).unwrap();
        assert!(res.rows.iter().all(|r| r.p_mc.is_none() && r.d_closed_form.is_some()));
    }

    #[test]
    fn figure_ids() {
        assert_eq!("fig3".parse::<FigureId>().unwrap(), FigureId::Fig3);
        let err = "fig9".parse::<FigureId>().unwrap_err().to_string();
        assert!(err.contains("fig1, fig2, fig3, fig4, fig5"), "{err}");
        for id in FigureId::ALL {
            assert!(!figure_specs(id, 1000, 0).unwrap().is_empty());
        }
    }

    #[test]
    fn fig1_contains_saturated_curve() {
        let specs = figure_specs(FigureId::Fig1, 1000, 0).unwrap();
        let mut spec = specs[1].clone();
        spec.outputs = Outputs { closed_form: true, ..Outputs::default() };
        let res = run_experiment(&spec).unwrap();
        assert!(res.rows.iter().all(|r| r.p_closed_form == Some(1.0)));
    }

    #[test]
    fn fitted_slope_of_power_law() {
        let rows: Vec<ResultRow> = (0..5)
            .map(|i| {
                let db = 10.0 + 5.0 * i as f64;
                ResultRow {
                    config_hash: String::new(),
                    label: String::new(),
                    scheme: HarqScheme::ChaseCombining,
                    user: 2,
                    sweep_index: i,
                    p1_dbw: db,
                    rate: 1.0,
                    trials: None,
                    p_mc: Some(0.5 * 10f64.powf(-3.0 * db / 10.0)),
                    ci_low: None,
                    ci_high: None,
                    p_lower_bound: None,
                    p_upper_bound: None,
                    p_closed_form: None,
                    d_closed_form: None,
                    d_tilde: None,
                    sandwich_ok: None,
                }
            })
            .collect();
        assert!((fitted_diversity(&rows).unwrap() - 3.0).abs() < 1e-9);
    }
}
