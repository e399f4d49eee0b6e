//! Closed-form diversity orders and the two-point empirical slope.

use serde::Serialize;

use crate::model::{HarqScheme, Ratio, Strategy, SystemConfig};
use crate::{Error, Result};

/// Relative tolerance for snapping a quotient onto an integer before
/// flooring, so that e.g. `(2^1 - 1)/0.2` floors to 5 rather than 4.
const FLOOR_SNAP: f64 = 1e-9;

fn snapped_floor(q: f64) -> f64 {
    let r = q.round();
    if (q - r).abs() <= FLOOR_SNAP * r.abs().max(1.0) {
        r
    } else {
        q.floor()
    }
}

/// The integer `floor(q)` that enters every diversity formula:
/// `q = (2^R - 1)/c` for Type I and CC, `q = R / log2(1 + c)` for IR.
fn rate_steps(scheme: HarqScheme, rate: f64, c: f64) -> f64 {
    let q = match scheme {
        HarqScheme::TypeI | HarqScheme::ChaseCombining => (rate.exp2() - 1.0) / c,
        HarqScheme::IncrementalRedundancy => rate / log2_1p(c),
    };
    snapped_floor(q)
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

fn positive_part(x: f64) -> usize {
    if x > 0.0 {
        x as usize
    } else {
        0
    }
}

fn check_inputs(k: usize, rate: f64, c: Ratio) -> Result<()> {
    if k == 0 {
        return Err(Error::arg("k", "at least one round is required"));
    }
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::arg("rate", format!("must be finite and non-negative, got {rate}")));
    }
    if let Ratio::Finite(c) = c {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::arg("c", format!("must be positive, got {c}")));
        }
    }
    Ok(())
}

/// Diversity order `d_{i->j}` of decoding a layer with rate `rate` and
/// power ratio `c` in `k` rounds. An infinite ratio (the interference-free
/// layer) always gives `k`.
pub fn pairwise_diversity(scheme: HarqScheme, k: usize, rate: f64, c: Ratio) -> Result<usize> {
    check_inputs(k, rate, c)?;
    let Ratio::Finite(c) = c else {
        return Ok(k);
    };
    let steps = rate_steps(scheme, rate, c);
    let kf = k as f64;
    Ok(match scheme {
        HarqScheme::TypeI => k * positive_part(1.0 - steps),
        HarqScheme::ChaseCombining | HarqScheme::IncrementalRedundancy => positive_part(kf - steps),
    })
}

/// `d_{2,l}`: diversity of user 2's outage conditioned on user 1 finishing
/// after `ell` rounds under the power-efficient strategy.
pub fn conditional_diversity_d2ell(scheme: HarqScheme, k: usize, ell: usize, rate: f64, c: f64) -> Result<usize> {
    check_inputs(k, rate, Ratio::Finite(c))?;
    if ell == 0 || ell > k {
        return Err(Error::arg("ell", format!("must lie in 1..={k}, got {ell}")));
    }
    let steps = rate_steps(scheme, rate, c);
    let interfered = match scheme {
        HarqScheme::TypeI => ell * positive_part(1.0 - steps),
        _ => positive_part(ell as f64 - steps),
    };
    Ok(interfered + k - ell)
}

/// Minimum of a non-empty list of diversity orders: the order of a union
/// of events.
pub fn union_diversity(orders: &[usize]) -> Result<usize> {
    orders
        .iter()
        .copied()
        .min()
        .ok_or_else(|| Error::arg("orders", "at least one order is required"))
}

/// `10 (log10 p_low - log10 p_high) / delta_db`, where `p_high` is read
/// `delta_db` above `p_low`.
pub fn empirical_diversity(p_low: f64, p_high: f64, delta_db: f64) -> Result<f64> {
    for (name, p) in [("p_low", p_low), ("p_high", p_high)] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::arg(name, format!("probability must be in (0, 1], got {p}")));
        }
    }
    if !(delta_db > 0.0 && delta_db.is_finite()) {
        return Err(Error::arg("delta_db", format!("must be positive, got {delta_db}")));
    }
    Ok(10.0 * (p_low.log10() - p_high.log10()) / delta_db)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityReport {
    pub scheme: HarqScheme,
    pub strategy: Strategy,
    /// `d_i` for users `1..=M`.
    pub per_user: Vec<usize>,
    /// Row `i - 1` holds `d_{i->j}` for `j = i..=M`.
    pub pairwise: Vec<Vec<usize>>,
    /// `d_{2,l}` for `l = 1..=K` (power-efficient strategy only).
    pub conditional: Option<Vec<usize>>,
    /// Empirical slope per user, when measured.
    pub empirical: Option<Vec<Option<f64>>>,
}

impl DiversityReport {
    /// `d_i` of a 1-based user.
    pub fn user(&self, user: usize) -> usize {
        self.per_user[user - 1]
    }
}

/// Diversity orders of every user under the simple strategy. They depend
/// on rates and power ratios only, so imperfect CSI leaves them unchanged.
pub fn user_diversity(config: &SystemConfig, scheme: HarqScheme) -> Result<DiversityReport> {
    let m = config.num_users();
    let k = config.max_rounds();
    let ratios = config.power_ratios();
    // d_{i->j} does not depend on the observer i.
    let layer: Vec<usize> = (1..=m)
        .map(|j| pairwise_diversity(scheme, k, config.rate(j), ratios.get(j)))
        .collect::<Result<_>>()?;
    let mut per_user = vec![0; m];
    per_user[m - 1] = layer[m - 1];
    for i in (0..m - 1).rev() {
        per_user[i] = layer[i].min(per_user[i + 1]);
    }
    let pairwise = (0..m).map(|i| layer[i..].to_vec()).collect();
    Ok(DiversityReport {
        scheme,
        strategy: Strategy::Simple,
        per_user,
        pairwise,
        conditional: None,
        empirical: None,
    })
}

/// Diversity orders under the power-efficient strategy (two users).
///
/// Equal to the simple-strategy orders; the conditional orders `d_{2,l}`
/// are attached, and `min_l (d_{1,l-1} + d_{2,l}) = d_2` is verified, where
/// `d_{1,m}` is user 1's order after `m` rounds.
pub fn power_efficient_diversity(config: &SystemConfig, scheme: HarqScheme) -> Result<DiversityReport> {
    if config.num_users() != 2 {
        return Err(Error::arg("config", "power-efficient strategy supported for M=2 only"));
    }
    let mut report = user_diversity(config, scheme)?;
    let k = config.max_rounds();
    let rate = config.rate(2);
    let c = config
        .power_ratios()
        .get(2)
        .finite()
        .expect("layer 2 has a finite ratio");
    let conditional: Vec<usize> = (1..=k)
        .map(|ell| conditional_diversity_d2ell(scheme, k, ell, rate, c))
        .collect::<Result<_>>()?;
    let near_after = |m: usize| -> Result<usize> {
        if m == 0 {
            Ok(0)
        } else {
            pairwise_diversity(scheme, m, rate, Ratio::Finite(c))
        }
    };
    let mut combined = usize::MAX;
    for (ell, &d2) in (1..=k).zip(&conditional) {
        combined = combined.min(near_after(ell - 1)? + d2);
    }
    if combined != report.user(2) {
        return Err(Error::Inconsistent(format!(
            "power-efficient order {combined} differs from simple-strategy order {}",
            report.user(2)
        )));
    }
    report.strategy = Strategy::PowerEfficient;
    report.conditional = Some(conditional);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_config, RawConfig};
    use proptest::prelude::*;
    use HarqScheme::*;

    fn fig5() -> SystemConfig {
        validate_config(&RawConfig {
            num_users: 4,
            max_rounds: 3,
            rates: vec![2.0; 4],
            mean_gains: vec![2.0, 1.0, 0.5, 1.0 / 3.0],
            powers: Some(vec![1.0, 2.0, 4.2, 28.8]),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn pairwise_examples() {
        let cc: Vec<usize> = [0.4, 0.8, 1.2]
            .iter()
            .map(|&c| pairwise_diversity(ChaseCombining, 4, 1.0, Ratio::Finite(c)).unwrap())
            .collect();
        assert_eq!(cc, [2, 3, 4]);
        assert_eq!(pairwise_diversity(TypeI, 4, 1.0, Ratio::Finite(1.0)).unwrap(), 0);
        assert_eq!(pairwise_diversity(IncrementalRedundancy, 4, 1.0, Ratio::Finite(0.4)).unwrap(), 2);
        for s in HarqScheme::ALL {
            assert_eq!(pairwise_diversity(s, 3, 5.0, Ratio::Infinite).unwrap(), 3);
        }
        assert!(pairwise_diversity(TypeI, 0, 1.0, Ratio::Finite(1.0)).is_err());
        assert!(pairwise_diversity(TypeI, 2, -1.0, Ratio::Finite(1.0)).is_err());
        assert!(pairwise_diversity(TypeI, 2, 1.0, Ratio::Finite(0.0)).is_err());
    }

    #[test]
    fn boundary_floors_to_the_lower_order() {
        // (2^1 - 1)/0.2 = 5 in exact arithmetic, 4.999... or 5.000...1 in f64.
        assert_eq!(pairwise_diversity(ChaseCombining, 6, 1.0, Ratio::Finite(0.2)).unwrap(), 1);
        assert_eq!(pairwise_diversity(ChaseCombining, 6, 1.0, Ratio::Finite(0.1)).unwrap(), 0);
        // R / log2(1 + 1) = 3
        assert_eq!(pairwise_diversity(IncrementalRedundancy, 4, 3.0, Ratio::Finite(1.0)).unwrap(), 1);
    }

    #[test]
    fn fig5_table() {
        let cfg = fig5();
        let d = |s| user_diversity(&cfg, s).unwrap().per_user;
        assert_eq!(d(TypeI), [0, 0, 0, 3]);
        assert_eq!(d(ChaseCombining), [1, 1, 1, 3]);
        assert_eq!(d(IncrementalRedundancy), [2, 2, 2, 3]);
        let r = user_diversity(&cfg, ChaseCombining).unwrap();
        assert_eq!(r.pairwise[0], [3, 2, 1, 3]);
        assert_eq!(r.pairwise[3], [3]);
    }

    #[test]
    fn conditional_examples() {
        assert_eq!(conditional_diversity_d2ell(ChaseCombining, 4, 2, 1.0, 0.4).unwrap(), 2);
        assert_eq!(conditional_diversity_d2ell(TypeI, 3, 1, 1.0, 1.5).unwrap(), 3);
        for s in HarqScheme::ALL {
            for &c in &[0.3, 0.9, 1.7] {
                assert_eq!(
                    conditional_diversity_d2ell(s, 4, 4, 1.0, c).unwrap(),
                    pairwise_diversity(s, 4, 1.0, Ratio::Finite(c)).unwrap()
                );
            }
        }
        assert!(conditional_diversity_d2ell(TypeI, 3, 0, 1.0, 1.0).is_err());
        assert!(conditional_diversity_d2ell(TypeI, 3, 4, 1.0, 1.0).is_err());
    }

    #[test]
    fn power_efficient_examples() {
        let cfg = SystemConfig::two_user(4, [1.0, 1.0], [2.0, 1.0], 10.0, 0.4).unwrap();
        let r = power_efficient_diversity(&cfg, ChaseCombining).unwrap();
        assert_eq!(r.user(2), 2);
        assert_eq!(r.conditional.as_deref(), Some(&[3, 2, 2, 2][..]));
        assert!(power_efficient_diversity(&fig5(), ChaseCombining).is_err());
    }

    #[test]
    fn empirical_examples() {
        assert!((empirical_diversity(2e-2, 2e-5, 10.0).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(empirical_diversity(0.1, 0.1, 5.0).unwrap(), 0.0);
        let p = |dbw: f64| 0.3 * 10f64.powf(-dbw / 10.0).powi(2);
        assert!((empirical_diversity(p(3.0), p(17.0), 14.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(empirical_diversity(0.0, 0.1, 10.0).is_err());
        assert!(empirical_diversity(0.1, 0.1, 0.0).is_err());
    }

    #[test]
    fn union_examples() {
        assert_eq!(union_diversity(&[4, 2, 3]).unwrap(), 2);
        assert_eq!(union_diversity(&[4]).unwrap(), 4);
        assert_eq!(union_diversity(&[2, 4]).unwrap(), 2);
        assert!(union_diversity(&[]).is_err());
    }

    #[test]
    fn scheme_ordering_on_grid() {
        for k in 1..=6 {
            for ri in 1..=40 {
                for ci in 1..=40 {
                    let (r, c) = (ri as f64 * 0.1, Ratio::Finite(ci as f64 * 0.1));
                    let i = pairwise_diversity(TypeI, k, r, c).unwrap();
                    let cc = pairwise_diversity(ChaseCombining, k, r, c).unwrap();
                    let ir = pairwise_diversity(IncrementalRedundancy, k, r, c).unwrap();
                    assert!(i <= cc && cc <= ir, "k={k} r={r} {c}: {i} {cc} {ir}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn staircase_in_rate(k in 1usize..7, c in 0.05f64..4.0, r in 0.01f64..4.0, dr in 0.0f64..1.0) {
            for s in HarqScheme::ALL {
                let a = pairwise_diversity(s, k, r, Ratio::Finite(c)).unwrap();
                let b = pairwise_diversity(s, k, r + dr, Ratio::Finite(c)).unwrap();
                prop_assert!(b <= a);
                prop_assert!(a <= k);
            }
        }

        #[test]
        fn full_diversity_condition(k in 1usize..7, c in 0.05f64..4.0, r in 0.01f64..4.0) {
            let below = r < log2_1p(c);
            prop_assume!((r - log2_1p(c)).abs() > 1e-6);
            for s in HarqScheme::ALL {
                prop_assert_eq!(pairwise_diversity(s, k, r, Ratio::Finite(c)).unwrap() == k, below, "{:?}", s);
            }
        }

        #[test]
        fn m_user_ordering(
            m in 2usize..6,
            k in 1usize..6,
            seed_rates in prop::collection::vec(0.1f64..3.0, 6),
            ratios in prop::collection::vec(0.1f64..4.0, 5),
            scale in 0.01f64..100.0,
        ) {
            let raw = RawConfig {
                num_users: m,
                max_rounds: k,
                rates: seed_rates[..m].to_vec(),
                mean_gains: (0..m).map(|i| (m - i) as f64).collect(),
                p1_watts: Some(scale),
                ratios: Some(ratios[..m - 1].to_vec()),
                ..Default::default()
            };
            let cfg = validate_config(&raw).unwrap();
            for s in HarqScheme::ALL {
                let d = user_diversity(&cfg, s).unwrap().per_user;
                prop_assert_eq!(d[0], d[1]);
                prop_assert!(d.windows(2).all(|w| w[0] <= w[1]), "{:?}", d);
                let scaled = user_diversity(&cfg.with_p1(scale * 7.3).unwrap(), s).unwrap().per_user;
                prop_assert_eq!(&d, &scaled);
            }
        }

        #[test]
        fn power_efficient_matches_simple(k in 1usize..7, r in 0.05f64..3.0, c in 0.05f64..3.0) {
            let cfg = SystemConfig::two_user(k, [r, r], [2.0, 1.0], 10.0, c).unwrap();
            for s in HarqScheme::ALL {
                let pe = power_efficient_diversity(&cfg, s).unwrap();
                prop_assert_eq!(&pe.per_user, &user_diversity(&cfg, s).unwrap().per_user);
            }
        }
    }
}
