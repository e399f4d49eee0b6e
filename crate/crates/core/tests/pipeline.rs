//! Cross-module checks on randomly drawn multi-user configurations.

use harq_noma::analytic::{cc_outage_bounds, ir_outage_bounds, typei_user_outage};
use harq_noma::experiment::sandwich_holds;
use harq_noma::model::validate_config;
use harq_noma::montecarlo::estimate_outage;
use harq_noma::rng::{CounterRng, Stream};
use harq_noma::{HarqScheme, RawConfig, Strategy, SystemConfig};

const SEED: u64 = 424_242;
const TRIALS: u64 = 200_000;
/// Each test makes on the order of 100 interval checks, so z = 3 per check
/// would reject a correct model by chance. 4.5 keeps the family-wise false
/// rejection rate near that of a single 3-sigma check.
const FAMILY_Z: f64 = 4.5;

/// Deterministic random configuration with 2 to 4 users.
fn random_config(i: u64, csi: bool) -> SystemConfig {
    let rng = CounterRng::new(SEED, Stream::KernelOracle);
    let u = |d: u64| rng.unit_open_closed(1 << 41 | i, d, 3);
    let m = 2 + (u(0) * 3.0).floor().min(2.0) as usize;
    let k = 1 + (u(1) * 3.0).floor().min(2.0) as usize;
    let rates: Vec<f64> = (0..m).map(|j| 0.25 + 1.25 * u(10 + j as u64)).collect();
    let mut mean_gains: Vec<f64> = (0..m).map(|j| 0.3 + 2.0 * u(20 + j as u64)).collect();
    mean_gains.sort_by(|a, b| b.total_cmp(a));
    let ratios: Vec<f64> = (1..m).map(|j| 0.4 + 3.0 * u(30 + j as u64)).collect();
    let p1_dbw = -5.0 + 25.0 * u(2);
    let csi_error_vars = csi.then(|| mean_gains.iter().map(|g| 0.2 * g * u(40)).collect());
    validate_config(&RawConfig {
        num_users: m,
        max_rounds: k,
        rates,
        mean_gains,
        powers: None,
        p1_watts: None,
        p1_dbw: Some(p1_dbw),
        ratios: Some(ratios),
        csi_error_vars,
        strategy: Strategy::Simple,
    })
    .unwrap()
}

fn check_sandwich(csi: bool) {
    let mut checked = 0;
    for i in 0..24 {
        let cfg = random_config(i, csi);
        for user in 1..=cfg.num_users() {
            for (scheme, bounds) in [
                (HarqScheme::ChaseCombining, cc_outage_bounds(&cfg, user).unwrap()),
                (HarqScheme::IncrementalRedundancy, ir_outage_bounds(&cfg, user).unwrap()),
            ] {
                assert!(bounds.lower <= bounds.upper, "{bounds:?}");
                let est = estimate_outage(&cfg, user, scheme, TRIALS, SEED + i).unwrap();
                assert!(
                    sandwich_holds(&est, bounds.lower, bounds.upper, FAMILY_Z),
                    "config {i} {scheme} user {user}: {est:?} vs {bounds:?} ({cfg:?})"
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 48);
}

#[test]
fn bounds_sandwich_monte_carlo_on_random_configs() {
    check_sandwich(false);
}

#[test]
fn bounds_sandwich_monte_carlo_with_imperfect_csi() {
    check_sandwich(true);
}

#[test]
fn type_i_closed_form_matches_monte_carlo_for_every_user() {
    for i in 0..12 {
        for csi in [false, true] {
            let cfg = random_config(i, csi);
            for user in 1..=cfg.num_users() {
                let exact = typei_user_outage(&cfg, user).unwrap();
                let est = estimate_outage(&cfg, user, HarqScheme::TypeI, TRIALS, SEED).unwrap();
                assert!(
                    sandwich_holds(&est, exact, exact, FAMILY_Z),
                    "config {i} csi {csi} user {user}: {est:?} vs {exact}"
                );
            }
        }
    }
}

#[test]
fn csi_error_never_helps() {
    for i in 0..12 {
        let perfect = random_config(i, false);
        let imperfect = random_config(i, true);
        for user in 1..=perfect.num_users() {
            for scheme in HarqScheme::ALL {
                let a = estimate_outage(&perfect, user, scheme, 50_000, SEED).unwrap();
                let b = estimate_outage(&imperfect, user, scheme, 50_000, SEED).unwrap();
                assert!(a.failures <= b.failures, "config {i} {scheme} user {user}");
            }
        }
    }
}

#[test]
fn json_config_round_trips_through_validation() {
    let text = r#"{
        "num_users": 3,
        "max_rounds": 2,
        "rates": [1.0, 0.5, 0.75],
        "mean_gains": [2.0, 1.0, 0.5],
        "p1_dbw": 10.0,
        "ratios": [1.5, 2.0],
        "strategy": "simple"
    }"#;
    let cfg = SystemConfig::from_json_str(text).unwrap();
    assert_eq!(cfg.num_users(), 3);
    assert!((cfg.p1() - 10.0).abs() < 1e-12);
    let expected = [10.0, 15.0, 50.0];
    for (p, want) in cfg.powers().iter().zip(expected) {
        assert!((p - want).abs() < 1e-9, "{p} vs {want}");
    }
    let again = validate_config(&cfg.to_raw()).unwrap();
    assert_eq!(again.config_hash(), cfg.config_hash());
    let json = serde_json::to_string(&cfg.to_raw()).unwrap();
    assert_eq!(SystemConfig::from_json_str(&json).unwrap().config_hash(), cfg.config_hash());
}

#[test]
fn malformed_json_configs_are_errors() {
    for text in [
        "",
        "[]",
        r#"{"num_users": 2}"#,
        r#"{"num_users": 2, "max_rounds": 1, "rates": [1], "mean_gains": [1, 1]}"#,
        r#"{"num_users": 2, "max_rounds": 1, "rates": [1, 1], "mean_gains": [1, 2], "p1_dbw": 0, "ratios": [1]}"#,
        r#"{"num_users": 1, "max_rounds": 1, "rates": [-1], "mean_gains": [1]}"#,
        r#"{"num_users": 1, "max_rounds": 1, "rates": [1], "mean_gains": [1], "csi_error_vars": [1.5]}"#,
    ] {
        assert!(SystemConfig::from_json_str(text).is_err(), "accepted {text:?}");
    }
}

