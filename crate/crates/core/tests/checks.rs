use driftlab::report::{EstimateReport, Real, Verdict};
use driftlab::verify::*;
use proptest::prelude::*;

fn small_harnack() -> HarnackOptions {
    HarnackOptions {
        coefficients: Coefficients::fixed(2, None),
        trials: 3,
        ladder: vec![1.0 / 8.0, 1.0 / 16.0],
        ..Default::default()
    }
}

#[test]
fn same_seed_gives_identical_json() {
    let a = serde_json::to_string(&check_harnack(&small_harnack(), 4).unwrap()).unwrap();
    let b = serde_json::to_string(&check_harnack(&small_harnack(), 4).unwrap()).unwrap();
    let c = serde_json::to_string(&check_harnack(&small_harnack(), 5).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn harmonic_harnack_quotient_stays_below_the_poisson_bound_in_2d() {
    // For positive harmonic functions in B_2R the Poisson kernel gives
    // sup/inf over B_R at most ((2R + R)/(2R − R))² = 9.
    let r = check_harnack(&small_harnack(), 9).unwrap();
    for (_, v) in r.values("constant") {
        assert!((1.0..=9.0 * 1.1).contains(&v), "{v}");
    }
}

#[test]
fn reports_round_trip_with_infinite_values() {
    let mut r = check_harnack(&small_harnack(), 1).unwrap();
    r.measurements[0].value = Real(f64::INFINITY);
    let text = serde_json::to_string(&r).unwrap();
    assert!(text.contains("\"+inf\""));
    let back: EstimateReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back.measurements[0].value, Real(f64::INFINITY));
    assert_eq!(back.verdict, r.verdict);
}

#[test]
fn hypothesis_gate_is_acceptable_but_not_a_pass() {
    let opts = GrowthOptions {
        data: DataKind::Constant,
        trials: 2,
        ladder: vec![1.0 / 8.0],
        ..Default::default()
    };
    let r = check_growth_lemma(&opts, 0).unwrap();
    if r.verdict == Verdict::HypothesisUnmet {
        assert!(r.acceptable() && !r.passed());
    }
}

#[test]
fn inadmissible_exponent_is_rejected_before_any_solve() {
    let opts = OscillationOptions {
        q: Some(4.0),
        ..Default::default()
    };
    assert!(matches!(
        opts.validate(),
        Err(driftlab::Error::InadmissibleExponents(_))
    ));
    assert!(check_oscillation_decay(&opts, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // Options survive a JSON round trip unchanged, so reports record exactly
    // what was run.
    #[test]
    fn options_round_trip(trials in 1usize..500, radius in 0.1..2.0f64, slack in 0.0..0.5f64) {
        let o = HarnackOptions { trials, radius, slack, ..Default::default() };
        let back: HarnackOptions = serde_json::from_value(serde_json::to_value(&o).unwrap()).unwrap();
        prop_assert_eq!(back, o);
    }

    #[test]
    fn stability_rules_agree_with_their_definition(v in prop::collection::vec(0.1..10.0f64, 1..5), slack in 0.0..0.3f64) {
        let by_hand = v.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack));
        prop_assert_eq!(stable_max(&v, slack), by_hand);
        let both = stable_both(&v, slack);
        prop_assert!(!both || (stable_max(&v, slack) && stable_min(&v, slack)));
    }
}
