//! Sweeps, scaling fits, weak-limit extrapolation and the negativity witness.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{self, fc_match_params, ClassicalParams};
use crate::montecarlo;
use crate::quantum::{self, MeasurementModel, Postselection, TwoLevelState, ZERO_OVERLAP};
use crate::{BoxIndex, Error, Result};

/// A protocol instance whose measurement strength is left free.
///
/// - `Classical`: the strength is the detector bias `g`; the remaining
///   parameters are held fixed.
/// - `FcMatched`: classical parameters from [`fc_match_params`] at the
///   strength, so the box-2 conditional mean stays at `1/cos θ`.
/// - `Quantum`: the strength is the Kraus coupling `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    Classical(ClassicalParams),
    FcMatched { theta: f64 },
    Quantum { initial: TwoLevelState, post: Postselection },
}

impl Protocol {
    pub fn tag(&self) -> &'static str {
        match self {
            Protocol::Classical(_) => "classical",
            Protocol::FcMatched { .. } => "fc_matched",
            Protocol::Quantum { .. } => "quantum",
        }
    }

    /// Parameters held fixed while the strength varies.
    pub fn fixed_parameters(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        match self {
            Protocol::Classical(p) => {
                m.insert("p1".into(), p.p1);
                m.insert("q".into(), p.q);
                m.insert("q0".into(), p.q0);
            }
            Protocol::FcMatched { theta } => {
                m.insert("theta".into(), *theta);
            }
            Protocol::Quantum { initial, post } => {
                m.insert("p1".into(), initial.a1.norm_sqr());
                m.insert("theta".into(), post.theta());
            }
        }
        m
    }

    fn classical_at(&self, strength: f64) -> Result<ClassicalParams> {
        match self {
            Protocol::Classical(p) => p.with_g(strength),
            Protocol::FcMatched { theta } => fc_match_params(*theta, strength),
            Protocol::Quantum { .. } => unreachable!("quantum protocol has no classical params"),
        }
    }
}

/// Quantity evaluated by [`sweep_metric`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ConditionalMean,
    PostselectionProbability,
    PostselectionShift,
    QuantumDisturbance,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::ConditionalMean => "conditional_mean",
            Metric::PostselectionProbability => "postselection_probability",
            Metric::PostselectionShift => "postselection_shift",
            Metric::QuantumDisturbance => "quantum_disturbance",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional_mean" => Ok(Metric::ConditionalMean),
            "postselection_probability" => Ok(Metric::PostselectionProbability),
            "postselection_shift" => Ok(Metric::PostselectionShift),
            "quantum_disturbance" => Ok(Metric::QuantumDisturbance),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }
}

/// Box-2 postselection probability of a protocol at a given strength.
pub fn postselection_probability(protocol: &Protocol, strength: f64) -> Result<f64> {
    match protocol {
        Protocol::Quantum { initial, post } => {
            quantum::postselection_probability(initial, &MeasurementModel::new(strength)?, post)
        }
        _ => Ok(classical::joint_distribution(&protocol.classical_at(strength)?)?
            .final_marginal(BoxIndex::Box2)),
    }
}

/// Change of the postselection probability caused by the measurement.
///
/// The quantum baseline is the same protocol at zero strength; the classical
/// baseline keeps the preparation and detector but switches nothing
/// (`q = q0 = 0`).
pub fn postselection_shift(protocol: &Protocol, strength: f64) -> Result<f64> {
    match protocol {
        Protocol::Quantum { initial, post } => {
            let at = quantum::postselection_probability(initial, &MeasurementModel::new(strength)?, post)?;
            let base = quantum::postselection_probability(initial, &MeasurementModel::new(0.0)?, post)?;
            Ok((at - base).abs())
        }
        _ => {
            let params = protocol.classical_at(strength)?;
            let at = classical::joint_distribution(&params)?.final_marginal(BoxIndex::Box2);
            let base =
                classical::joint_distribution(&params.undisturbed())?.final_marginal(BoxIndex::Box2);
            Ok((at - base).abs())
        }
    }
}

/// Exact value of `metric` for `protocol` at `strength`.
pub fn evaluate(protocol: &Protocol, metric: Metric, strength: f64) -> Result<f64> {
    match metric {
        Metric::ConditionalMean => match protocol {
            Protocol::Quantum { initial, post } => {
                let m = MeasurementModel::new(strength)?;
                if strength == 0.0 {
                    return Err(Error::ZeroCoupling);
                }
                quantum::conditional_mean_quantum(initial, &m, post, &m.contextual_values()?)
            }
            _ => classical::conditional_mean_box2(&protocol.classical_at(strength)?),
        },
        Metric::PostselectionProbability => postselection_probability(protocol, strength),
        Metric::PostselectionShift => postselection_shift(protocol, strength),
        Metric::QuantumDisturbance => match protocol {
            Protocol::Quantum { initial, .. } => {
                quantum::quantum_disturbance(initial, &MeasurementModel::new(strength)?)
            }
            _ => Err(Error::invalid("metric", "quantum_disturbance needs the quantum protocol")),
        },
    }
}

/// Which protocol parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// `g` (classical) or `λ` (quantum).
    Strength,
    Theta,
    P1,
}

impl SweepParameter {
    pub fn name(&self, protocol: &Protocol) -> &'static str {
        match (self, protocol) {
            (SweepParameter::Strength, Protocol::Quantum { .. }) => "lambda",
            (SweepParameter::Strength, _) => "g",
            (SweepParameter::Theta, _) => "theta",
            (SweepParameter::P1, _) => "p1",
        }
    }
}

/// How sweep points are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Exact,
    /// `n` trials per point; point `k` uses stream `k` under `seed`.
    MonteCarlo { n: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub protocol: Protocol,
    pub metric: Metric,
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    /// Strength used when the sweep varies something else.
    pub strength: f64,
    pub engine: Engine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: f64,
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepResult {
    pub protocol: String,
    pub metric: String,
    pub parameter: String,
    pub fixed: BTreeMap<String, f64>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Exact series from `(param, value)` pairs.
    pub fn from_pairs(metric: &str, pairs: &[(f64, f64)]) -> Self {
        Self {
            protocol: "custom".into(),
            metric: metric.into(),
            parameter: "x".into(),
            fixed: BTreeMap::new(),
            points: pairs
                .iter()
                .map(|&(param, value)| SweepPoint { param, value, stderr: None })
                .collect(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.param).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Copy with every value replaced by `|value - reference|`.
    pub fn deviation_from(&self, reference: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            p.value = (p.value - reference).abs();
        }
        out.metric = format!("|{} - ref|", self.metric);
        out
    }
}

/// Grid spacing for [`Grid::values`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub scale: Scale,
}

impl Grid {
    /// Log grid with ten points per decade, endpoints included.
    pub fn log_per_decade(from: f64, to: f64) -> Result<Self> {
        if !(from > 0.0 && to > 0.0) {
            return Err(Error::invalid("grid", "log grid bounds must be positive"));
        }
        let decades = (to / from).log10().abs();
        let points = (decades * 10.0).round() as usize + 1;
        Ok(Self { from, to, points, scale: Scale::Log })
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(self.from.is_finite() && self.to.is_finite()) {
            return Err(Error::invalid("grid", "bounds must be finite"));
        }
        if self.points == 1 {
            return Ok(vec![self.from]);
        }
        if self.from == self.to {
            return Err(Error::invalid("grid", "from and to must differ for more than one point"));
        }
        let last = (self.points - 1) as f64;
        let mut v: Vec<f64> = match self.scale {
            Scale::Linear => (0..self.points)
                .map(|k| self.from + (self.to - self.from) * k as f64 / last)
                .collect(),
            Scale::Log => {
                if !(self.from > 0.0 && self.to > 0.0) {
                    return Err(Error::invalid("grid", "log grid bounds must be positive"));
                }
                let (a, b) = (self.from.ln(), self.to.ln());
                (0..self.points).map(|k| (a + (b - a) * k as f64 / last).exp()).collect()
            }
        };
        v[0] = self.from;
        v[self.points - 1] = self.to;
        Ok(v)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("grid", "values must be finite"));
    }
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::invalid("grid", "values must be strictly monotone"));
    }
    Ok(())
}

fn protocol_at(spec: &SweepSpec, value: f64) -> Result<(Protocol, f64)> {
    match spec.parameter {
        SweepParameter::Strength => Ok((spec.protocol, value)),
        SweepParameter::Theta => {
            let p = match spec.protocol {
                Protocol::FcMatched { .. } => Protocol::FcMatched { theta: value },
                Protocol::Quantum { initial, .. } => {
                    Protocol::Quantum { initial, post: Postselection::new(value)? }
                }
                Protocol::Classical(_) => {
                    return Err(Error::invalid("parameter", "theta is not a classical parameter"))
                }
            };
            Ok((p, spec.strength))
        }
        SweepParameter::P1 => {
            let p = match spec.protocol {
                Protocol::Classical(c) => Protocol::Classical(ClassicalParams::new(value, c.g, c.q, c.q0)?),
                Protocol::Quantum { post, .. } => {
                    Protocol::Quantum { initial: TwoLevelState::from_p1(value)?, post }
                }
                Protocol::FcMatched { .. } => {
                    return Err(Error::invalid("parameter", "p1 is fixed to 1 for fc_matched"))
                }
            };
            Ok((p, spec.strength))
        }
    }
}

fn evaluate_point(spec: &SweepSpec, index: usize, value: f64) -> Result<SweepPoint> {
    let (protocol, strength) = protocol_at(spec, value)?;
    match spec.engine {
        Engine::Exact => Ok(SweepPoint {
            param: value,
            value: evaluate(&protocol, spec.metric, strength)?,
            stderr: None,
        }),
        Engine::MonteCarlo { n, seed } => {
            let (v, se) = montecarlo::estimate_metric(&protocol, spec.metric, strength, n, seed, index as u64)?;
            Ok(SweepPoint { param: value, value: v, stderr: Some(se) })
        }
    }
}

/// Evaluate `spec.metric` at every grid point, in grid order.
///
/// Points are evaluated on the current rayon pool; the result does not depend
/// on how many workers it has.
pub fn sweep_metric(spec: &SweepSpec) -> Result<SweepResult> {
    check_grid(&spec.grid)?;
    let pname = spec.parameter.name(&spec.protocol);
    let results: Vec<Result<SweepPoint>> = spec
        .grid
        .par_iter()
        .enumerate()
        .map(|(k, &v)| {
            evaluate_point(spec, k, v).map_err(|e| Error::AtGridPoint {
                index: k,
                param: pname.to_string(),
                value: v,
                source: Box::new(e),
            })
        })
        .collect();
    let points = results.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(bad) = points.iter().position(|p| !p.value.is_finite()) {
        return Err(Error::AtGridPoint {
            index: bad,
            param: pname.to_string(),
            value: spec.grid[bad],
            source: Box::new(Error::invalid("metric", "non-finite value")),
        });
    }
    let mut fixed = spec.protocol.fixed_parameters();
    fixed.remove(pname);
    if spec.parameter != SweepParameter::Strength {
        let sname = SweepParameter::Strength.name(&spec.protocol);
        fixed.insert(sname.into(), spec.strength);
    }
    Ok(SweepResult {
        protocol: spec.protocol.tag().into(),
        metric: spec.metric.name().into(),
        parameter: pname.into(),
        fixed,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// Root-mean-square residual of the fit in natural-log space.
    pub rms_residual: f64,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_power_law(points: &SweepResult) -> Result<PowerLawFit> {
    if points.points.len() < 3 {
        return Err(Error::Fit("power-law fit needs at least 3 points".into()));
    }
    if let Some(p) = points.points.iter().find(|p| !(p.param > 0.0 && p.value > 0.0)) {
        return Err(Error::Fit(format!(
            "power-law fit needs positive data, got ({}, {})",
            p.param, p.value
        )));
    }
    let xs: Vec<f64> = points.points.iter().map(|p| p.param.ln()).collect();
    let ys: Vec<f64> = points.points.iter().map(|p| p.value.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("power-law fit needs distinct parameter values".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(PowerLawFit { exponent: slope, prefactor: intercept.exp(), rms_residual: (rss / n).sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: f64,
    /// Difference between the two highest extrapolation orders.
    pub error_estimate: f64,
}

/// Richardson extrapolation of a series to zero strength.
///
/// The error is taken to be a power series in `strength²`, so the Neville
/// tableau is built in `h = strength²` and evaluated at `h = 0`. Strengths
/// must be strictly decreasing.
pub fn weak_limit_extrapolate(points: &SweepResult) -> Result<Extrapolation> {
    let pts = &points.points;
    if pts.len() < 3 {
        return Err(Error::Fit("extrapolation needs at least 3 points".into()));
    }
    if !pts.windows(2).all(|w| w[1].param < w[0].param) || pts.iter().any(|p| p.param < 0.0) {
        return Err(Error::Fit("extrapolation needs strictly decreasing nonnegative strengths".into()));
    }
    let h: Vec<f64> = pts.iter().map(|p| p.param * p.param).collect();
    let n = pts.len();
    let mut table: Vec<Vec<f64>> = vec![Vec::with_capacity(n); n];
    for i in 0..n {
        table[i].push(pts[i].value);
        for k in 1..=i {
            let upper = table[i][k - 1];
            let lower = table[i - 1][k - 1];
            let next = upper + (upper - lower) * h[i] / (h[i - k] - h[i]);
            table[i].push(next);
        }
    }
    let last = &table[n - 1];
    let value = last[n - 1];
    Ok(Extrapolation { value, error_estimate: (value - last[n - 2]).abs() })
}

/// Weak values of the two box projectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorWeakValues {
    pub w1: Complex64,
    pub w2: Complex64,
    /// Set when either real part is below `-1e-12`.
    pub negative: bool,
}

impl ProjectorWeakValues {
    /// `w1 - w2`, the weak value of `|1⟩⟨1| - |2⟩⟨2|`.
    pub fn observable(&self) -> Complex64 {
        self.w1 - self.w2
    }
}

/// `w_b = ⟨f|Π_b|i⟩ / ⟨f|i⟩`. A negative real part means no nonnegative
/// conditional distribution over boxes reproduces these postselected averages.
pub fn projector_weak_values(i: &TwoLevelState, f: &Postselection) -> Result<ProjectorWeakValues> {
    TwoLevelState::new(i.a1, i.a2)?;
    let fs = f.state();
    let overlap = fs.inner(i);
    if overlap.norm() <= ZERO_OVERLAP {
        return Err(Error::ZeroOverlap);
    }
    let w1 = fs.a1.conj() * i.a1 / overlap;
    let w2 = fs.a2.conj() * i.a2 / overlap;
    Ok(ProjectorWeakValues { w1, w2, negative: w1.re.min(w2.re) < -1e-12 })
}
