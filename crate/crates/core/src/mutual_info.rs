//! Per-round SINRs and accumulated mutual information.
//!
//! SINRs stay linear until accumulation; all information is in bits
//! (natural log divided by `ln 2`).

use std::f64::consts::LN_2;

use crate::model::HarqScheme;
use crate::{Error, Result};

/// SINR of message `target` (1-based layer) at a receiver with power gain
/// `gain`. Layers `1..target` are still undecoded and count as noise.
pub fn per_round_sinr(gain: f64, target: usize, powers: &[f64], noise_var: f64) -> Result<f64> {
    if target == 0 || target > powers.len() {
        return Err(Error::arg(
            "target",
            format!("layer {target} out of range 1..={}", powers.len()),
        ));
    }
    if !(gain >= 0.0) {
        return Err(Error::arg("gain", format!("gain must be non-negative, got {gain}")));
    }
    if !(noise_var > 0.0) {
        return Err(Error::arg("noise_var", format!("noise variance must be positive, got {noise_var}")));
    }
    let interference: f64 = powers[..target - 1].iter().sum();
    Ok(sinr(gain, powers[target - 1], interference, noise_var))
}

#[inline]
pub(crate) fn sinr(gain: f64, power: f64, interference: f64, noise_var: f64) -> f64 {
    gain * power / (gain * interference + noise_var)
}

/// SINRs seen by `observer` for message `target` over consecutive rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrSequence {
    pub observer: usize,
    pub target: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccumulatedInfo {
    pub bits: f64,
    pub scheme: HarqScheme,
    pub rounds_used: usize,
}

/// Running accumulator; push one SINR per round.
///
/// * Type I: `log2(1 + max_k g_k)`
/// * CC: `log2(1 + sum_k g_k)`
/// * IR: `sum_k log2(1 + g_k)`
#[derive(Debug, Clone, Copy)]
pub struct InfoAccumulator {
    scheme: HarqScheme,
    acc: f64,
    rounds: usize,
}

impl InfoAccumulator {
    pub fn new(scheme: HarqScheme) -> Self {
        InfoAccumulator {
            scheme,
            acc: 0.0,
            rounds: 0,
        }
    }

    #[inline]
    pub fn push(&mut self, sinr: f64) {
        match self.scheme {
            HarqScheme::TypeI => self.acc = self.acc.max(sinr),
            HarqScheme::ChaseCombining => self.acc += sinr,
            HarqScheme::IncrementalRedundancy => self.acc += sinr.ln_1p(),
        }
        self.rounds += 1;
    }

    #[inline]
    pub fn bits(&self) -> f64 {
        match self.scheme {
            HarqScheme::TypeI | HarqScheme::ChaseCombining => self.acc.ln_1p() / LN_2,
            HarqScheme::IncrementalRedundancy => self.acc / LN_2,
        }
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn finish(&self) -> AccumulatedInfo {
        AccumulatedInfo {
            bits: self.bits(),
            scheme: self.scheme,
            rounds_used: self.rounds,
        }
    }
}

fn check_sinrs(name: &'static str, sinrs: &[f64]) -> Result<()> {
    if let Some(g) = sinrs.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::arg(name, format!("SINRs must be finite and non-negative, got {g}")));
    }
    Ok(())
}

pub fn accumulate(scheme: HarqScheme, sinrs: &[f64]) -> Result<AccumulatedInfo> {
    if sinrs.is_empty() {
        return Err(Error::arg("sinrs", "at least one round is required"));
    }
    check_sinrs("sinrs", sinrs)?;
    let mut acc = InfoAccumulator::new(scheme);
    sinrs.iter().for_each(|&g| acc.push(g));
    Ok(acc.finish())
}

/// Accumulation for the far user under the power-efficient strategy, given
/// that the near user finished after `ell` rounds: `interfered` holds rounds
/// `1..=ell` (superposed signal), `clean` rounds `ell+1..=rounds` (only the
/// far user's message is sent).
pub fn accumulate_power_efficient(
    scheme: HarqScheme,
    interfered: &[f64],
    clean: &[f64],
    ell: usize,
    rounds: usize,
) -> Result<AccumulatedInfo> {
    if rounds == 0 {
        return Err(Error::arg("rounds", "at least one round is required"));
    }
    if ell > rounds {
        return Err(Error::arg("ell", format!("ell = {ell} exceeds K = {rounds}")));
    }
    if interfered.len() != ell || clean.len() != rounds - ell {
        return Err(Error::arg(
            "sinrs",
            format!(
                "expected {ell} interfered and {} clean rounds, got {} and {}",
                rounds - ell,
                interfered.len(),
                clean.len()
            ),
        ));
    }
    check_sinrs("interfered", interfered)?;
    check_sinrs("clean", clean)?;
    let mut acc = InfoAccumulator::new(scheme);
    interfered.iter().chain(clean).for_each(|&g| acc.push(g));
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use HarqScheme::*;

    fn bits(s: HarqScheme, g: &[f64]) -> f64 {
        accumulate(s, g).unwrap().bits
    }

    #[test]
    fn sinr_examples() {
        assert!((per_round_sinr(0.5, 2, &[10.0, 12.0], 1.0).unwrap() - 1.0).abs() < 1e-12);
        let a = 0.37;
        assert!((per_round_sinr(a, 1, &[10.0], 1.0).unwrap() - 10.0 * a).abs() < 1e-12);
        for j in 1..=3 {
            assert_eq!(per_round_sinr(0.0, j, &[1.0, 2.0, 3.0], 1.0).unwrap(), 0.0);
        }
        assert!(per_round_sinr(1.0, 0, &[1.0], 1.0).is_err());
        assert!(per_round_sinr(1.0, 3, &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn scheme_formulas() {
        let g = [1.0, 3.0];
        assert!((bits(TypeI, &g) - 2.0).abs() < 1e-12);
        assert!((bits(ChaseCombining, &g) - 5f64.log2()).abs() < 1e-12);
        assert!((bits(IncrementalRedundancy, &g) - 3.0).abs() < 1e-12);
        for s in HarqScheme::ALL {
            assert!((bits(s, &[2.5]) - 3.5f64.log2()).abs() < 1e-12);
            assert_eq!(bits(s, &[0.0, 0.0, 0.0]), 0.0);
            assert_eq!(accumulate(s, &[1.0, 2.0]).unwrap().rounds_used, 2);
        }
        assert!(accumulate(TypeI, &[]).is_err());
        assert!(accumulate(TypeI, &[-1.0]).is_err());
    }

    #[test]
    fn power_efficient_examples() {
        let g = [0.3, 1.7, 0.2];
        for s in HarqScheme::ALL {
            let pe = accumulate_power_efficient(s, &g, &[], 3, 3).unwrap();
            assert_eq!(pe, accumulate(s, &g).unwrap());
        }
        let cc = accumulate_power_efficient(ChaseCombining, &[], &[1.0, 3.0], 0, 2).unwrap();
        assert!((cc.bits - 5f64.log2()).abs() < 1e-12);
        let ir = accumulate_power_efficient(IncrementalRedundancy, &[1.0], &[3.0], 1, 2).unwrap();
        assert!((ir.bits - 3.0).abs() < 1e-12);
        assert!(accumulate_power_efficient(ChaseCombining, &[1.0], &[3.0], 2, 2).is_err());
        assert!(accumulate_power_efficient(ChaseCombining, &[1.0], &[3.0], 1, 3).is_err());
        assert!(accumulate_power_efficient(ChaseCombining, &[1.0], &[3.0], 3, 2).is_err());
    }

    proptest! {
        #[test]
        fn scheme_ordering(g in prop::collection::vec(0.0f64..50.0, 1..8)) {
            let i = bits(TypeI, &g);
            let cc = bits(ChaseCombining, &g);
            let ir = bits(IncrementalRedundancy, &g);
            prop_assert!(i <= cc && cc <= ir, "{i} {cc} {ir}");
        }

        #[test]
        fn appending_never_decreases(g in prop::collection::vec(0.0f64..50.0, 1..8), extra in 0.0f64..50.0) {
            for s in HarqScheme::ALL {
                let mut longer = g.clone();
                longer.push(extra);
                prop_assert!(bits(s, &longer) >= bits(s, &g));
            }
        }

        #[test]
        fn clean_rounds_help(
            gains in prop::collection::vec(0.0f64..20.0, 1..6),
            p1 in 0.1f64..100.0,
            c in 0.05f64..5.0,
            ell_frac in 0.0f64..1.0,
        ) {
            let k = gains.len();
            let ell = ((k as f64) * ell_frac) as usize;
            let p2 = c * p1;
            let interfered: Vec<f64> = gains.iter().map(|&a| sinr(a, p2, p1, 1.0)).collect();
            let clean: Vec<f64> = gains[ell..].iter().map(|&a| sinr(a, p2, 0.0, 1.0)).collect();
            for s in HarqScheme::ALL {
                let pe = accumulate_power_efficient(s, &interfered[..ell], &clean, ell, k).unwrap();
                prop_assert!(pe.bits >= bits(s, &interfered));
            }
        }
    }
}
