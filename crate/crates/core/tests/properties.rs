use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use weakvalue::analysis::{fit_power_law, SweepResult};
use weakvalue::classical::{
    conditional_mean, conditional_mean_box2, fc_match_params, joint_distribution, ClassicalParams,
};
use weakvalue::montecarlo::{sample_classical, sample_distribution};
use weakvalue::quantum::{
    conditional_mean_quantum, expectation, joint_outcome_probs, postselection_probability,
    quantum_disturbance, weak_value, MeasurementModel, Postselection, TwoLevelState,
};
use weakvalue::{BoxIndex, Error, Signal};

fn classical_params() -> impl Strategy<Value = ClassicalParams> {
    (0.0..=1.0f64, 1e-3..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64)
        .prop_map(|(p1, g, q, q0)| ClassicalParams::new(p1, g, q, q0).unwrap())
}

fn complex_state() -> impl Strategy<Value = TwoLevelState> {
    (0.0..=1.0f64, 0.0..2.0 * PI, 0.0..2.0 * PI).prop_map(|(p1, phi1, phi2)| {
        TwoLevelState::new(
            Complex64::from_polar(p1.sqrt(), phi1),
            Complex64::from_polar((1.0 - p1).sqrt(), phi2),
        )
        .unwrap()
    })
}

/// Power-law exponent of `f` over the weak-limit ladder.
fn ladder_exponent(f: impl Fn(f64) -> f64) -> f64 {
    let pairs: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.02, 0.01].iter().map(|&l| (l, f(l))).collect();
    fit_power_law(&SweepResult::from_pairs("deviation", &pairs)).unwrap().exponent
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn classical_joint_is_normalized(params in classical_params()) {
        let d = joint_distribution(&params).unwrap();
        prop_assert!((d.total() - 1.0).abs() <= 1e-12);
        prop_assert!(d.cells().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn signal_marginal_ignores_switching(
        params in classical_params(), q in 0.0..=1.0f64, q0 in 0.0..=1.0f64,
    ) {
        let other = ClassicalParams::new(params.p1, params.g, q, q0).unwrap();
        let a = joint_distribution(&params).unwrap().signal_marginal(Signal::Emitted);
        let b = joint_distribution(&other).unwrap().signal_marginal(Signal::Emitted);
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn equal_switching_stays_in_eigenvalue_range(
        p1 in 0.0..=1.0f64, g in 1e-3..=1.0f64, s in 0.0..=1.0f64, final_box in 1u8..=2,
    ) {
        let params = ClassicalParams::new(p1, g, s, s).unwrap();
        let d = joint_distribution(&params).unwrap();
        let cv = params.contextual_values().unwrap();
        match conditional_mean(&d, &cv, BoxIndex::from_number(final_box).unwrap()) {
            Ok(cm) => prop_assert!(cm.abs() <= 1.0 + 1e-9, "cm = {}", cm),
            Err(e) => prop_assert!(matches!(e, Error::ZeroPostselection)),
        }
    }

    #[test]
    fn conditional_mean_within_contextual_range(params in classical_params()) {
        if let Ok(cm) = conditional_mean_box2(&params) {
            prop_assert!(cm.abs() <= (1.0 / params.g) * (1.0 + 1e-12), "cm = {}", cm);
        }
    }

    #[test]
    fn fc_recipe_hits_inverse_cosine(theta in 0.0..1.5f64, frac in 1e-3..=1.0f64) {
        let c = theta.cos();
        let g = frac * c;
        let params = fc_match_params(theta, g).unwrap();
        let cm = conditional_mean_box2(&params).unwrap();
        prop_assert!((cm - 1.0 / c).abs() <= 1e-12 * (1.0 / c).max(1.0) / frac.min(1.0),
            "theta {} g {}: {} vs {}", theta, g, cm, 1.0 / c);
    }

    #[test]
    fn quantum_joint_is_normalized(i in complex_state(), lambda in 0.0..=1.0f64, theta in 0.0..=2.0 * PI) {
        let d = joint_outcome_probs(&i, &MeasurementModel::new(lambda).unwrap(), &Postselection::new(theta).unwrap())
            .unwrap();
        prop_assert!((d.total() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn kraus_pair_is_complete(lambda in 0.0..=1.0f64) {
        let c = MeasurementModel::new(lambda).unwrap().completeness();
        for (r, row) in c.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let want = if r == k { 1.0 } else { 0.0 };
                prop_assert!((v - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn signal_bias_reveals_expectation(i in complex_state(), lambda in 1e-3..=1.0f64, theta in 0.0..=2.0 * PI) {
        let d = joint_outcome_probs(&i, &MeasurementModel::new(lambda).unwrap(), &Postselection::new(theta).unwrap())
            .unwrap();
        let biased = (d.signal_marginal(Signal::Emitted) - d.signal_marginal(Signal::Silent)) / lambda;
        prop_assert!((biased - expectation(&i).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn sampled_counts_sum_to_n(params in classical_params(), n in 0u64..5000, seed: u64) {
        let counts = sample_classical(&params, n, seed).unwrap();
        prop_assert_eq!(counts.total, n);
        prop_assert!(counts.is_consistent());
        prop_assert_eq!(counts, sample_classical(&params, n, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weak_limit_converges_quadratically(p1 in 0.05..0.95f64, theta in 0.0..=2.0 * PI) {
        let i = TwoLevelState::from_p1(p1).unwrap();
        let f = Postselection::new(theta).unwrap();
        // Relative size of the next-order term at the top of the ladder; the
        // ladder only sits in the quadratic regime when it is small.
        let a = (theta / 2.0).cos() * p1.sqrt();
        let b = -(theta / 2.0).sin() * (1.0 - p1).sqrt();
        prop_assume!(0.04 * (a * b).abs() <= 0.1 * (a + b).powi(2));
        let target = weak_value(&i, &f).unwrap().re;
        let dev = |l: f64| {
            let m = MeasurementModel::new(l).unwrap();
            (conditional_mean_quantum(&i, &m, &f, &m.contextual_values().unwrap()).unwrap() - target).abs()
        };
        // Cases where the leading term vanishes converge faster still.
        prop_assume!(dev(0.01) > 1e-9);
        let slope = ladder_exponent(dev);
        prop_assert!(slope >= 1.9, "slope {}", slope);
    }

    #[test]
    fn postselection_shift_closed_form(p1 in 0.0..=1.0f64, theta in 0.0..=2.0 * PI, lambda in 0.0..=1.0f64) {
        let i = TwoLevelState::from_p1(p1).unwrap();
        let f = Postselection::new(theta).unwrap();
        let a = (theta / 2.0).cos() * p1.sqrt();
        let b = -(theta / 2.0).sin() * (1.0 - p1).sqrt();
        let at = |l: f64| postselection_probability(&i, &MeasurementModel::new(l).unwrap(), &f).unwrap();
        let shift = (at(lambda) - at(0.0)).abs();
        let closed = (2.0 * a * b * ((1.0 - lambda * lambda).sqrt() - 1.0)).abs();
        prop_assert!((shift - closed).abs() <= 1e-12);
    }

    #[test]
    fn shift_and_disturbance_are_quadratic(p1 in 0.05..0.95f64, theta in 0.1..3.0f64) {
        let i = TwoLevelState::from_p1(p1).unwrap();
        let f = Postselection::new(theta).unwrap();
        let at = |l: f64| postselection_probability(&i, &MeasurementModel::new(l).unwrap(), &f).unwrap();
        let shift = ladder_exponent(|l| (at(l) - at(0.0)).abs());
        prop_assert!((shift - 2.0).abs() <= 0.05, "shift exponent {}", shift);
        let dist = ladder_exponent(|l| quantum_disturbance(&i, &MeasurementModel::new(l).unwrap()).unwrap());
        prop_assert!((dist - 2.0).abs() <= 0.05, "disturbance exponent {}", dist);
    }

    #[test]
    fn streams_are_reproducible(cells in prop::array::uniform4(0.0..1.0f64), seed: u64, stream in 0u64..64) {
        let sum: f64 = cells.iter().sum();
        prop_assume!(sum > 0.0);
        let d = weakvalue::JointDistribution { p: [[cells[0] / sum, cells[1] / sum], [cells[2] / sum, cells[3] / sum]] };
        prop_assert_eq!(sample_distribution(&d, 1000, seed, stream), sample_distribution(&d, 1000, seed, stream));
    }
}

#[test]
fn near_orthogonal_inputs_converge_slower_on_the_ladder() {
    // Small overlap: at lambda = 0.2 the quartic term is comparable to the
    // quadratic one, so the fitted ladder slope falls short of 2 although the
    // asymptotic rate is still quadratic.
    let i = TwoLevelState::from_p1(0.5932084190783063).unwrap();
    let f = Postselection::new(1.9891059600340142).unwrap();
    let target = weak_value(&i, &f).unwrap().re;
    let dev = |l: f64| {
        let m = MeasurementModel::new(l).unwrap();
        (conditional_mean_quantum(&i, &m, &f, &m.contextual_values().unwrap()).unwrap() - target).abs()
    };
    assert!(ladder_exponent(dev) < 1.9);
    let tail: Vec<(f64, f64)> = [1e-2, 5e-3, 2e-3, 1e-3].iter().map(|&l| (l, dev(l))).collect();
    let fit = fit_power_law(&SweepResult::from_pairs("deviation", &tail)).unwrap();
    assert!((fit.exponent - 2.0).abs() < 0.01);
}
