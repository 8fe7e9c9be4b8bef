use std::f64::consts::PI;

use proptest::prelude::*;

use weakvalue::analysis::{
    projector_weak_values, sweep_metric, weak_limit_extrapolate, Engine, Metric, Protocol,
    SweepParameter, SweepSpec,
};
use weakvalue::classical::{conditional_mean_box2, disturbance_tolerance, min_disturbance_for_value, MinDisturbance};
use weakvalue::quantum::{quantum_disturbance, weak_value, MeasurementModel, Postselection, TwoLevelState};
use weakvalue::rng::Stream;
use weakvalue::Error;

const G: f64 = 0.05;
const RESOLUTION: usize = 101;
const WEAK: f64 = 0.05;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn negativity_flag_matches_anomaly(p1 in 0.0..=1.0f64, theta in 0.0..=2.0 * PI) {
        let i = TwoLevelState::from_p1(p1).unwrap();
        let f = Postselection::new(theta).unwrap();
        match projector_weak_values(&i, &f) {
            Ok(w) => {
                let a = weak_value(&i, &f).unwrap().norm();
                prop_assume!((a - 1.0).abs() > 1e-12);
                prop_assert_eq!(w.negative, a > 1.0);
            }
            Err(e) => prop_assert!(matches!(e, Error::ZeroOverlap)),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn richardson_lands_on_weak_value(p1 in 0.05..0.95f64, theta in 0.0..=2.0 * PI) {
        let i = TwoLevelState::from_p1(p1).unwrap();
        let f = Postselection::new(theta).unwrap();
        let a = (theta / 2.0).cos() * p1.sqrt();
        let b = -(theta / 2.0).sin() * (1.0 - p1).sqrt();
        prop_assume!(0.04 * (a * b).abs() <= 0.1 * (a + b).powi(2));
        let sweep = sweep_metric(&SweepSpec {
            protocol: Protocol::Quantum { initial: i, post: f },
            metric: Metric::ConditionalMean,
            parameter: SweepParameter::Strength,
            grid: vec![0.2, 0.1, 0.05],
            strength: 0.0,
            engine: Engine::Exact,
        })
        .unwrap();
        let ext = weak_limit_extrapolate(&sweep).unwrap();
        let target = weak_value(&i, &f).unwrap().re;
        prop_assert!((ext.value - target).abs() <= 10.0 * ext.error_estimate + 1e-12,
            "{} vs {} (estimate {})", ext.value, target, ext.error_estimate);
    }
}

/// Flagged two-level cases drawn from a fixed stream.
fn flagged_cases(count: usize) -> Vec<(TwoLevelState, Postselection, f64)> {
    let mut rng = Stream::new(42);
    let mut out = Vec::new();
    while out.len() < count {
        let i = TwoLevelState::from_p1(rng.uniform()).unwrap();
        let f = Postselection::new(2.0 * PI * rng.uniform()).unwrap();
        if let Ok(w) = projector_weak_values(&i, &f) {
            if w.negative {
                out.push((i, f, w.observable().re));
            }
        }
    }
    out
}

#[test]
fn anomalous_values_cost_classical_disturbance() {
    let tol = disturbance_tolerance(G, RESOLUTION).unwrap();
    let mut checked = 0;
    for (i, _, v) in flagged_cases(300) {
        let quantum = quantum_disturbance(&i, &MeasurementModel::new(WEAK).unwrap()).unwrap();
        assert!(quantum < 0.002, "quantum disturbance {quantum}");
        if v.abs() <= 1.0 + tol {
            continue;
        }
        checked += 1;
        match min_disturbance_for_value(v, G, RESOLUTION).unwrap() {
            MinDisturbance::Achieved { disturbance, params } => {
                assert!(disturbance > quantum, "v = {v}: classical {disturbance} vs quantum {quantum}");
                let cm = conditional_mean_box2(&params).unwrap();
                assert!((cm - v).abs() <= tol, "v = {v}: realised {cm}");
            }
            MinDisturbance::Infeasible => {}
        }
    }
    assert!(checked > 100);
}

#[test]
fn moderate_anomalies_are_classically_cheap() {
    // Starting in box 2 almost surely and switching out slightly more often
    // after a silent detector tilts the box-2 average well past 1 at small
    // |q - q0|.
    let cost = min_disturbance_for_value(2.0, G, RESOLUTION).unwrap().value().unwrap();
    assert!(cost > 0.0 && cost < 0.1, "cost {cost}");
}

#[test]
fn large_anomalies_need_large_disturbance() {
    let near_edge = min_disturbance_for_value(19.0, G, RESOLUTION).unwrap().value().unwrap();
    assert!(near_edge > 0.1);
    assert_eq!(min_disturbance_for_value(25.0, G, RESOLUTION).unwrap(), MinDisturbance::Infeasible);
}
