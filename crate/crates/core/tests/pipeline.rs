//! Cross-module flows: forms feeding the sieve, reports round-tripping
//! through JSON, and the exponent table feeding parameter choice.

use std::sync::Arc;

use bfree_lab::bfree::{hecke_nonvanishing_interval, sieve_interval, SieveMode};
use bfree_lab::exponents::{rho_grid, theta_csv, theta_table};
use bfree_lab::rational::{int, rat};
use bfree_lab::sieveweights::{choose_parameters, decomposition_a, window_sums};
use bfree_lab::{BSet, ExponentPair, HeckeForm, IntervalReport, TauTable, Variant, WeightSystem};

#[test]
fn delta_is_nonvanishing_on_short_intervals() {
    let table = Arc::new(TauTable::compute(20_000).unwrap());
    let form = HeckeForm::delta(table);
    for mode in [SieveMode::Thm1, SieveMode::Thm2] {
        let r = hecke_nonvanishing_interval(&form, 10_000, 2_000, mode, 12_000, 4).unwrap();
        assert_eq!(r.direct_count, 2_000);
        assert!(r.agreement, "{:?}", r.mismatches);
        assert!(r.bfree_count <= r.direct_count);
    }
}

#[test]
fn elliptic_curve_zeros_match_the_sieve() {
    // y^2 = x^3 + 1 has a_p = 0 for every p = 2 mod 3 beyond the bad primes
    let form = HeckeForm::elliptic(0, 1).unwrap();
    let r = hecke_nonvanishing_interval(&form, 500, 500, SieveMode::Thm2, 1_000, 8).unwrap();
    assert!(r.agreement, "{:?}", r.mismatches);
    assert!(r.direct_count < 500);
    assert!(r.bfree_count <= r.direct_count);
}

#[test]
fn interval_report_survives_json() {
    let b = BSet::generated([2, 5]).unwrap();
    let rep = sieve_interval(123_456, 789, &b).unwrap();
    let back = IntervalReport::from_json(&rep.to_json()).unwrap();
    assert_eq!(back, rep);
    let mut v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
    v["bfree_count"] = serde_json::Value::String("1".into());
    assert!(IntervalReport::from_json(&v.to_string()).is_err());
}

#[test]
fn theta_table_drives_parameter_choice() {
    let grid = rho_grid(&rat(1, 20)).unwrap();
    let rows = theta_table(&grid, &ExponentPair::literature()).unwrap();
    let csv = theta_csv(&rows, true);
    assert_eq!(csv.lines().count(), grid.len() + 1);
    let last = rows.last().unwrap();
    assert_eq!(last.rho, int(1));
    assert_eq!(last.winner_value, rat(7, 17));
    // the winning exponent plus a margin is admissible for the two-factor weight
    let p = choose_parameters(&last.rho, &rat(1, 100), Variant::TwoFactor).unwrap();
    assert_eq!(p.theta, &last.winner_value + rat(1, 100));
}

#[test]
fn weight_system_end_to_end() {
    let p = choose_parameters(&rat(1, 2), &rat(1, 20), Variant::PrimeOnly).unwrap();
    let w = WeightSystem::build(p, 1_000_000, 4, 2).unwrap();
    assert!(!w.prime_window.is_empty());
    let d = decomposition_a(1_000_000, 1_000, &BSet::squarefree(), &w).unwrap();
    assert!(d.lower_bound_holds());
    assert!(d.identity_defect == int(0));
    let sums = window_sums(&w);
    assert!(sums.prime_relative_error.unwrap() < 0.5);
    let json = serde_json::to_value(&d).unwrap();
    assert!(json["main_term"].as_str().unwrap().contains('/') || json["main_term"].as_str().unwrap().parse::<i64>().is_ok());
}
