//! Seeded event-level simulation of both protocols.
//!
//! The default samplers draw each trial from the exact four-cell distribution
//! by inverse CDF (one uniform per trial). The trace samplers instead walk the
//! protocol stage by stage and hand every [`TrialRecord`] to a callback; both
//! routes must agree in distribution, which [`gof_test`] checks.

use serde::{Deserialize, Serialize};

use crate::analysis::{Metric, Protocol};
use crate::classical::{joint_distribution, ClassicalParams};
use crate::contextual::ContextualValues;
use crate::quantum::{joint_outcome_probs, MeasurementModel, Postselection, TwoLevelState};
use crate::rng::Stream;
use crate::{BoxIndex, Error, JointDistribution, Result, Signal};

/// Pearson chi-square critical value at 3 degrees of freedom, level 0.001.
pub const CHI2_CRITICAL_3DF_P001: f64 = 16.266;

/// One simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialRecord {
    pub signal: Signal,
    pub final_box: BoxIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountTable {
    /// `n[x][b]`, indexed like [`JointDistribution::p`].
    pub n: [[u64; 2]; 2],
    pub total: u64,
}

impl CountTable {
    pub fn from_cells(n: [[u64; 2]; 2]) -> Self {
        let total = n.iter().flatten().sum();
        Self { n, total }
    }

    pub fn record(&mut self, t: TrialRecord) {
        self.n[t.signal.index()][t.final_box.index()] += 1;
        self.total += 1;
    }

    pub fn get(&self, signal: Signal, final_box: BoxIndex) -> u64 {
        self.n[signal.index()][final_box.index()]
    }

    pub fn final_count(&self, final_box: BoxIndex) -> u64 {
        self.n.iter().map(|row| row[final_box.index()]).sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.n.iter().flatten().sum::<u64>() == self.total
    }
}

const CELLS: [(Signal, BoxIndex); 4] = [
    (Signal::Emitted, BoxIndex::Box1),
    (Signal::Emitted, BoxIndex::Box2),
    (Signal::Silent, BoxIndex::Box1),
    (Signal::Silent, BoxIndex::Box2),
];

/// Draw `n` trials from an exact distribution on stream `stream` of `seed`.
pub fn sample_distribution(dist: &JointDistribution, n: u64, seed: u64, stream: u64) -> CountTable {
    let probs = dist.cells();
    let mut cdf = [0.0; 4];
    let mut acc = 0.0;
    for (c, p) in cdf.iter_mut().zip(probs) {
        acc += p.max(0.0);
        *c = acc;
    }
    // Rounding can leave the top of the CDF just below 1.
    let fallback = probs.iter().rposition(|&p| p > 0.0).unwrap_or(3);
    let mut rng = Stream::with_stream(seed, stream);
    let mut table = CountTable::default();
    for _ in 0..n {
        let u = rng.uniform();
        let cell = cdf.iter().position(|&c| u < c).unwrap_or(fallback);
        let (signal, final_box) = CELLS[cell];
        table.record(TrialRecord { signal, final_box });
    }
    table
}

pub fn sample_classical(params: &ClassicalParams, n: u64, seed: u64) -> Result<CountTable> {
    Ok(sample_distribution(&joint_distribution(params)?, n, seed, 0))
}

pub fn sample_quantum(
    i: &TwoLevelState,
    m: &MeasurementModel,
    f: &Postselection,
    n: u64,
    seed: u64,
) -> Result<CountTable> {
    Ok(sample_distribution(&joint_outcome_probs(i, m, f)?, n, seed, 0))
}

/// Stage-by-stage classical simulation: placement, signal, switch.
pub fn trace_classical(
    params: &ClassicalParams,
    n: u64,
    seed: u64,
    mut on_trial: impl FnMut(TrialRecord),
) -> Result<CountTable> {
    params.validate()?;
    let mut rng = Stream::new(seed);
    let mut table = CountTable::default();
    for _ in 0..n {
        let start = if rng.bernoulli(params.p1) { BoxIndex::Box1 } else { BoxIndex::Box2 };
        let p_signal = match start {
            BoxIndex::Box1 => (1.0 + params.g) / 2.0,
            BoxIndex::Box2 => (1.0 - params.g) / 2.0,
        };
        let signal = if rng.bernoulli(p_signal) { Signal::Emitted } else { Signal::Silent };
        let p_switch = match signal {
            Signal::Emitted => params.q,
            Signal::Silent => params.q0,
        };
        let final_box = if rng.bernoulli(p_switch) { start.other() } else { start };
        let t = TrialRecord { signal, final_box };
        table.record(t);
        on_trial(t);
    }
    Ok(table)
}

/// Stage-by-stage quantum simulation: Kraus outcome, collapse, postselection.
pub fn trace_quantum(
    i: &TwoLevelState,
    m: &MeasurementModel,
    f: &Postselection,
    n: u64,
    seed: u64,
    mut on_trial: impl FnMut(TrialRecord),
) -> Result<CountTable> {
    let i = TwoLevelState::new(i.a1, i.a2)?;
    // Post-measurement states and outcome probabilities.
    let branch = |x: Signal| {
        let d = m.kraus_diagonal(x);
        let (b1, b2) = (i.a1 * d[0], i.a2 * d[1]);
        let p = b1.norm_sqr() + b2.norm_sqr();
        let pass = if p > 0.0 {
            f.state().inner(&TwoLevelState { a1: b1, a2: b2 }).norm_sqr() / p
        } else {
            0.0
        };
        (p, pass)
    };
    let (p_s, pass_s) = branch(Signal::Emitted);
    let (_, pass_n) = branch(Signal::Silent);
    let mut rng = Stream::new(seed);
    let mut table = CountTable::default();
    for _ in 0..n {
        let signal = if rng.bernoulli(p_s) { Signal::Emitted } else { Signal::Silent };
        let pass = match signal {
            Signal::Emitted => pass_s,
            Signal::Silent => pass_n,
        };
        let final_box = if rng.bernoulli(pass) { BoxIndex::Box2 } else { BoxIndex::Box1 };
        let t = TrialRecord { signal, final_box };
        table.record(t);
        on_trial(t);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Plug-in conditional mean over trials that ended in `final_box`.
///
/// The standard error is the binomial error of the signal fraction among the
/// postselected trials, scaled by `α_S − α_S̄`.
pub fn estimate_conditional_mean(
    counts: &CountTable,
    cv: &ContextualValues,
    final_box: BoxIndex,
) -> Result<Estimate> {
    let nf = counts.final_count(final_box);
    if nf == 0 {
        return Err(Error::NoPostselectedTrials);
    }
    let frac = counts.get(Signal::Emitted, final_box) as f64 / nf as f64;
    let mean = cv.alpha_s * frac + cv.alpha_sbar * (1.0 - frac);
    let stderr = (cv.alpha_s - cv.alpha_sbar).abs() * (frac * (1.0 - frac) / nf as f64).sqrt();
    Ok(Estimate { mean, stderr })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub reject: bool,
}

/// Pearson chi-square test of observed counts against an exact distribution.
pub fn gof_test(counts: &CountTable, exact: &JointDistribution) -> Result<GofResult> {
    if !counts.is_consistent() {
        return Err(Error::invalid("counts", "cells do not sum to total"));
    }
    if counts.total < 100 {
        return Err(Error::InsufficientCounts(format!("total {} < 100", counts.total)));
    }
    let total = counts.total as f64;
    let mut statistic = 0.0;
    for (x, b) in CELLS {
        let expected = exact.get(x, b) * total;
        if expected < 5.0 {
            return Err(Error::InsufficientCounts(format!(
                "expected count {expected:.3} < 5 in cell ({}, {})",
                x.tag(),
                b.number()
            )));
        }
        let observed = counts.get(x, b) as f64;
        statistic += (observed - expected).powi(2) / expected;
    }
    Ok(GofResult { statistic, reject: statistic > CHI2_CRITICAL_3DF_P001 })
}

/// Monte Carlo estimate `(value, stderr)` of a sweep metric.
///
/// Only the sampled quantities are available: the conditional mean and the
/// postselection probability.
pub fn estimate_metric(
    protocol: &Protocol,
    metric: Metric,
    strength: f64,
    n: u64,
    seed: u64,
    stream: u64,
) -> Result<(f64, f64)> {
    let (dist, cv) = match protocol {
        Protocol::Quantum { initial, post } => {
            let m = MeasurementModel::new(strength)?;
            (joint_outcome_probs(initial, &m, post)?, m.contextual_values())
        }
        Protocol::Classical(p) => {
            let p = p.with_g(strength)?;
            (joint_distribution(&p)?, p.contextual_values())
        }
        Protocol::FcMatched { theta } => {
            let p = crate::classical::fc_match_params(*theta, strength)?;
            (joint_distribution(&p)?, p.contextual_values())
        }
    };
    let counts = sample_distribution(&dist, n, seed, stream);
    match metric {
        Metric::ConditionalMean => {
            let e = estimate_conditional_mean(&counts, &cv?, BoxIndex::Box2)?;
            Ok((e.mean, e.stderr))
        }
        Metric::PostselectionProbability => {
            if n == 0 {
                return Err(Error::invalid("n", "must be positive for an estimate"));
            }
            let p = counts.final_count(BoxIndex::Box2) as f64 / n as f64;
            Ok((p, (p * (1.0 - p) / n as f64).sqrt()))
        }
        other => Err(Error::invalid("metric", format!("{other} has no Monte Carlo estimator"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contextual::symmetric_cv;
    use std::f64::consts::PI;

    fn recipe() -> ClassicalParams {
        ClassicalParams::new(1.0, 0.1, 6.0 / 11.0, 4.0 / 9.0).unwrap()
    }

    #[test]
    fn zero_trials() {
        let t = sample_classical(&recipe(), 0, 1).unwrap();
        assert_eq!(t, CountTable::default());
        let t = sample_quantum(
            &TwoLevelState::from_p1(0.5).unwrap(),
            &MeasurementModel::new(0.2).unwrap(),
            &Postselection::new(1.0).unwrap(),
            0,
            1,
        )
        .unwrap();
        assert_eq!(t.total, 0);
    }

    #[test]
    fn no_switching_never_reaches_box2() {
        let p = ClassicalParams::new(1.0, 0.5, 0.0, 0.0).unwrap();
        let t = sample_classical(&p, 1000, 3).unwrap();
        assert_eq!(t.final_count(BoxIndex::Box2), 0);
        let t = trace_classical(&p, 1000, 3, |_| {}).unwrap();
        assert_eq!(t.final_count(BoxIndex::Box2), 0);
    }

    #[test]
    fn strong_projective_all_mass_in_one_cell() {
        let i = TwoLevelState::basis(BoxIndex::Box1);
        let m = MeasurementModel::new(1.0).unwrap();
        let f = Postselection::new(0.0).unwrap();
        let t = sample_quantum(&i, &m, &f, 1000, 9).unwrap();
        assert_eq!(t.get(Signal::Emitted, BoxIndex::Box2), 1000);
        let t = trace_quantum(&i, &m, &f, 1000, 9, |_| {}).unwrap();
        assert_eq!(t.get(Signal::Emitted, BoxIndex::Box2), 1000);
    }

    #[test]
    fn recipe_frequencies_within_five_sigma() {
        let n = 1_000_000u64;
        let t = sample_classical(&recipe(), n, 2024).unwrap();
        for (x, b, p) in [
            (Signal::Emitted, BoxIndex::Box1, 0.25),
            (Signal::Emitted, BoxIndex::Box2, 0.30),
            (Signal::Silent, BoxIndex::Box1, 0.25),
            (Signal::Silent, BoxIndex::Box2, 0.20),
        ] {
            let freq = t.get(x, b) as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 5.0 * se, "{freq} vs {p}");
        }
    }

    #[test]
    fn quantum_conditional_mean_within_five_sigma() {
        let m = MeasurementModel::new(0.1).unwrap();
        let t = sample_quantum(
            &TwoLevelState::from_p1(0.75).unwrap(),
            &m,
            &Postselection::new(PI / 3.0).unwrap(),
            1_000_000,
            77,
        )
        .unwrap();
        let e = estimate_conditional_mean(&t, &m.contextual_values().unwrap(), BoxIndex::Box2).unwrap();
        assert!((e.mean - 1.985069).abs() <= 5.0 * e.stderr, "{} ± {}", e.mean, e.stderr);
    }

    #[test]
    fn estimator_examples() {
        let cv = symmetric_cv(0.1).unwrap();
        let t = CountTable::from_cells([[25, 30], [25, 20]].map(|r| r.map(|v| v * 10_000)));
        let e = estimate_conditional_mean(&t, &cv, BoxIndex::Box2).unwrap();
        assert!((e.mean - 2.0).abs() < 1e-12);
        let frac: f64 = 0.6;
        let want_se = 20.0 * (frac * (1.0 - frac) / 500_000.0).sqrt();
        assert!((e.stderr - want_se).abs() < 1e-15);

        let sym = CountTable::from_cells([[3, 40], [9, 40]]);
        assert_eq!(estimate_conditional_mean(&sym, &cv, BoxIndex::Box2).unwrap().mean, 0.0);

        let none = CountTable::from_cells([[3, 0], [9, 0]]);
        assert!(matches!(
            estimate_conditional_mean(&none, &cv, BoxIndex::Box2),
            Err(Error::NoPostselectedTrials)
        ));
    }

    #[test]
    fn gof_exact_counts_accept() {
        let d = joint_distribution(&recipe()).unwrap();
        let t = CountTable::from_cells([[2500, 3000], [2500, 2000]]);
        let r = gof_test(&t, &d).unwrap();
        assert!(r.statistic < 1e-9 && !r.reject);
    }

    #[test]
    fn gof_detects_perturbation() {
        let d = joint_distribution(&recipe()).unwrap();
        let mut shifted = d;
        shifted.p[0][1] += 0.05;
        shifted.p[1][1] -= 0.05;
        let t = sample_distribution(&shifted, 1_000_000, 5, 0);
        assert!(gof_test(&t, &d).unwrap().reject);
    }

    #[test]
    fn gof_false_rejection_rate() {
        let d = joint_distribution(&recipe()).unwrap();
        let rejections = (0..100u64)
            .filter(|&s| gof_test(&sample_distribution(&d, 10_000, s, 0), &d).unwrap().reject)
            .count();
        assert!(rejections <= 1, "{rejections} rejections");
    }

    #[test]
    fn gof_insufficient_counts() {
        let d = joint_distribution(&recipe()).unwrap();
        assert!(matches!(
            gof_test(&CountTable::from_cells([[10, 10], [10, 9]]), &d),
            Err(Error::InsufficientCounts(_))
        ));
        let degenerate = joint_distribution(&ClassicalParams::new(1.0, 0.5, 0.0, 0.0).unwrap()).unwrap();
        let t = sample_distribution(&degenerate, 1000, 1, 0);
        assert!(matches!(gof_test(&t, &degenerate), Err(Error::InsufficientCounts(_))));
    }

    #[test]
    fn trace_records_every_trial() {
        let mut seen = Vec::new();
        let t = trace_classical(&recipe(), 50, 11, |r| seen.push(r)).unwrap();
        assert_eq!(seen.len(), 50);
        let mut again = CountTable::default();
        seen.into_iter().for_each(|r| again.record(r));
        assert_eq!(again, t);
    }

    #[test]
    fn streams_are_reproducible() {
        let d = joint_distribution(&recipe()).unwrap();
        assert_eq!(sample_distribution(&d, 5000, 8, 3), sample_distribution(&d, 5000, 8, 3));
        assert_ne!(sample_distribution(&d, 5000, 8, 3), sample_distribution(&d, 5000, 8, 4));
    }
}
