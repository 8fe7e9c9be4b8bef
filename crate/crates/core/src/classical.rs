//! Exact engine for the classical two-box protocol.
//!
//! A particle sits in box 1 with probability `p1`. Opening the boxes emits a
//! signal with probability `(1+g)/2` from box 1 and `(1-g)/2` from box 2. After
//! the signal the particle switches box with probability `q` (signal) or `q0`
//! (no signal). Finally the box is read out and trials are postselected on it.
//! All quantities here are computed by enumerating the eight paths exactly.

use rayon::prelude::*;

use crate::contextual::{symmetric_cv, ContextualValues, ResponseMatrix};
use crate::{BoxIndex, Error, JointDistribution, Result, Signal};

/// `|cos θ|` below this is treated as zero by [`fc_match_params`].
const COS_ZERO: f64 = 1e-12;

/// Postselection probabilities at or below this are treated as never occurring.
pub const ZERO_PROBABILITY: f64 = 1e-28;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalParams {
    /// Probability that the particle starts in box 1.
    pub p1: f64,
    /// Detector bias, `0 < g <= 1`.
    pub g: f64,
    /// Switch probability after a signal.
    pub q: f64,
    /// Switch probability after no signal.
    pub q0: f64,
}

impl ClassicalParams {
    pub fn new(p1: f64, g: f64, q: f64, q0: f64) -> Result<Self> {
        let params = Self { p1, g, q, q0 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("p1", self.p1)?;
        if !(self.g > 0.0 && self.g <= 1.0) {
            return Err(Error::invalid("g", format!("{} is outside (0, 1]", self.g)));
        }
        check_probability("q", self.q)?;
        check_probability("q0", self.q0)
    }

    pub fn p2(&self) -> f64 {
        1.0 - self.p1
    }

    pub fn with_g(self, g: f64) -> Result<Self> {
        Self::new(self.p1, g, self.q, self.q0)
    }

    /// The same preparation and detector with switching turned off.
    pub fn undisturbed(self) -> Self {
        Self { q: 0.0, q0: 0.0, ..self }
    }

    pub fn response(&self) -> Result<ResponseMatrix> {
        ResponseMatrix::symmetric(self.g)
    }

    /// Contextual values `(1/g, -1/g)` for this detector.
    pub fn contextual_values(&self) -> Result<ContextualValues> {
        symmetric_cv(self.g)
    }

    fn switch_probability(&self, signal: Signal) -> f64 {
        match signal {
            Signal::Emitted => self.q,
            Signal::Silent => self.q0,
        }
    }
}

pub(crate) fn check_probability(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("{v} is outside [0, 1]")))
    }
}

/// Exact distribution over (signal, final box).
pub fn joint_distribution(params: &ClassicalParams) -> Result<JointDistribution> {
    params.validate()?;
    let prep = [params.p1, params.p2()];
    let p_signal_given_box = [(1.0 + params.g) / 2.0, (1.0 - params.g) / 2.0];
    let mut p = [[0.0; 2]; 2];
    for x in Signal::ALL {
        let s = params.switch_probability(x);
        for b0 in BoxIndex::ALL {
            let emit = match x {
                Signal::Emitted => p_signal_given_box[b0.index()],
                Signal::Silent => 1.0 - p_signal_given_box[b0.index()],
            };
            let weight = prep[b0.index()] * emit;
            p[x.index()][b0.index()] += weight * (1.0 - s);
            p[x.index()][b0.other().index()] += weight * s;
        }
    }
    Ok(JointDistribution { p })
}

/// Signal average `α_S P_S + α_S̄ P_S̄` over all trials.
pub fn unconditional_mean(dist: &JointDistribution, cv: &ContextualValues) -> Result<f64> {
    dist.check_normalized()?;
    Ok(Signal::ALL.iter().map(|&x| cv.weight(x) * dist.signal_marginal(x)).sum())
}

/// Signal average restricted to trials that end in `final_box`.
pub fn conditional_mean(
    dist: &JointDistribution,
    cv: &ContextualValues,
    final_box: BoxIndex,
) -> Result<f64> {
    dist.check_normalized()?;
    let pf = dist.final_marginal(final_box);
    if pf <= ZERO_PROBABILITY {
        return Err(Error::ZeroPostselection);
    }
    let weighted: f64 = Signal::ALL
        .iter()
        .map(|&x| cv.weight(x) * dist.get(x, final_box))
        .sum();
    Ok(weighted / pf)
}

/// Convenience: conditional mean on box 2 with the detector's own contextual values.
pub fn conditional_mean_box2(params: &ClassicalParams) -> Result<f64> {
    let dist = joint_distribution(params)?;
    conditional_mean(&dist, &params.contextual_values()?, BoxIndex::Box2)
}

/// Parameters for which the box-2 conditional mean equals `1/cos θ` at bias `g`.
///
/// Uses `p1 = 1`, `q = (cos θ + g)/(1 + g)`, `q0 = (cos θ - g)/(1 - g)`. At
/// `g = 1` (which forces `cos θ = 1`) no silent trials occur and `q0 = 1`.
pub fn fc_match_params(theta: f64, g: f64) -> Result<ClassicalParams> {
    if !theta.is_finite() {
        return Err(Error::invalid("theta", "must be finite"));
    }
    if !(g > 0.0 && g <= 1.0) {
        return Err(Error::invalid("g", format!("{g} is outside (0, 1]")));
    }
    let c = theta.cos();
    if c <= COS_ZERO {
        return Err(Error::DivergentTarget { cos_theta: c });
    }
    if g > c * (1.0 + 1e-15) {
        return Err(Error::NoValidSwitch { g, cos_theta: c });
    }
    let q = ((c + g) / (1.0 + g)).min(1.0);
    let q0 = if g < 1.0 { ((c - g) / (1.0 - g)).clamp(0.0, 1.0) } else { 1.0 };
    ClassicalParams::new(1.0, g, q, q0)
}

/// Outcome of [`min_disturbance_for_value`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinDisturbance {
    /// Smallest outcome-dependent disturbance `|q - q0|` reaching the target,
    /// together with the parameters that realise it.
    Achieved { disturbance: f64, params: ClassicalParams },
    /// No grid point reached the target within tolerance.
    Infeasible,
}

impl MinDisturbance {
    pub fn value(&self) -> Option<f64> {
        match self {
            MinDisturbance::Achieved { disturbance, .. } => Some(*disturbance),
            MinDisturbance::Infeasible => None,
        }
    }
}

/// Matching tolerance used by [`min_disturbance_for_value`] at a given grid spacing.
///
/// Twice the spacing times a Lipschitz constant of the box-2 conditional mean
/// along the preparation axis, estimated by finite differences on the grid:
/// for each undisturbed slice `q = q0 = s` (`0 < s < 1`) take the largest
/// slope in `p1`, then keep the flattest slice. With this tolerance every
/// target in `[-1, 1]` is matched by some undisturbed grid point.
pub fn disturbance_tolerance(g: f64, resolution: usize) -> Result<f64> {
    if resolution < 2 {
        return Err(Error::invalid("grid_resolution", "must be at least 2"));
    }
    let h = 1.0 / (resolution - 1) as f64;
    let mut lipschitz = f64::INFINITY;
    for is in 1..resolution - 1 {
        let s = is as f64 * h;
        let mut slope: f64 = 0.0;
        let mut prev: Option<f64> = None;
        for ip in 0..resolution {
            let cm = box2_mean(ip as f64 * h, g, s, s);
            if let (Some(a), Some(b)) = (prev, cm) {
                slope = slope.max((b - a).abs() / h);
            }
            prev = cm;
        }
        lipschitz = lipschitz.min(slope);
    }
    if !lipschitz.is_finite() {
        // Two-point grid: no interior slice, use the secant over [-1, 1].
        lipschitz = 2.0;
    }
    Ok(2.0 * h * lipschitz)
}

/// Minimum outcome-dependent disturbance `|q - q0|` over a uniform
/// `(p1, q, q0)` grid such that the box-2 conditional mean is within
/// tolerance of `v_target`, followed by one refinement pass at a tenth of the
/// spacing around the best coarse point.
///
/// Outcome-independent switching (`q = q0`) keeps the conditional mean inside
/// `[-1, 1]` and costs nothing here; targets in `[-1, 1]` give zero.
pub fn min_disturbance_for_value(
    v_target: f64,
    g: f64,
    grid_resolution: usize,
) -> Result<MinDisturbance> {
    if !v_target.is_finite() {
        return Err(Error::invalid("v_target", "must be finite"));
    }
    if !(g > 0.0 && g <= 1.0) {
        return Err(Error::invalid("g", format!("{g} is outside (0, 1]")));
    }
    let tol = disturbance_tolerance(g, grid_resolution)?;
    let n = grid_resolution;
    let h = 1.0 / (n - 1) as f64;
    let at = |k: usize| k as f64 * h;

    // Coarse pass. Disturbance on the grid is |iq - iq0| steps, compared
    // exactly as integers; ties resolve to the lexicographically first index.
    let best = (0..n)
        .into_par_iter()
        .filter_map(|ip| {
            let mut local: Option<(usize, [usize; 3])> = None;
            for iq in 0..n {
                for iq0 in 0..n {
                    let steps = iq.abs_diff(iq0);
                    if local.is_some_and(|(s, _)| s <= steps) {
                        continue;
                    }
                    if let Some(cm) = box2_mean(at(ip), g, at(iq), at(iq0)) {
                        if (cm - v_target).abs() <= tol {
                            local = Some((steps, [ip, iq, iq0]));
                        }
                    }
                }
            }
            local
        })
        .min();

    let Some((steps, [ip, iq, iq0])) = best else {
        return Ok(MinDisturbance::Infeasible);
    };
    let mut best_d = steps as f64 * h;
    let mut best_params = ClassicalParams { p1: at(ip), g, q: at(iq), q0: at(iq0) };

    if steps > 0 {
        let fine = h / 10.0;
        let fine_tol = tol / 10.0;
        let axis = |centre: f64| -> Vec<f64> {
            (-10i32..=10).map(|k| (centre + k as f64 * fine).clamp(0.0, 1.0)).collect()
        };
        let (ps, qs, q0s) = (axis(best_params.p1), axis(best_params.q), axis(best_params.q0));
        for &p1 in &ps {
            for &q in &qs {
                for &q0 in &q0s {
                    let d = (q - q0).abs();
                    if d >= best_d {
                        continue;
                    }
                    if let Some(cm) = box2_mean(p1, g, q, q0) {
                        if (cm - v_target).abs() <= fine_tol {
                            best_d = d;
                            best_params = ClassicalParams { p1, g, q, q0 };
                        }
                    }
                }
            }
        }
    }
    Ok(MinDisturbance::Achieved { disturbance: best_d, params: best_params })
}

/// Box-2 conditional mean with contextual values ±1/g, or `None` when box 2
/// is never reached. Inlined closed form for the grid search.
fn box2_mean(p1: f64, g: f64, q: f64, q0: f64) -> Option<f64> {
    let p2 = 1.0 - p1;
    let s_to_2 = p1 * (1.0 + g) / 2.0 * q + p2 * (1.0 - g) / 2.0 * (1.0 - q);
    let n_to_2 = p1 * (1.0 - g) / 2.0 * q0 + p2 * (1.0 + g) / 2.0 * (1.0 - q0);
    let pf = s_to_2 + n_to_2;
    (pf > 0.0).then(|| (s_to_2 - n_to_2) / (g * pf))
}
