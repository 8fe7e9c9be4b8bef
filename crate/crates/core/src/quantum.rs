//! Exact two-level engine for the weak-value protocol.
//!
//! The system is prepared in `|i⟩`, measured by a binary ambiguous detector of
//! strength `λ` described by the Kraus pair
//!
//! ```text
//! M_S = c₊ Π₁ + c₋ Π₂,   M_S̄ = c₋ Π₁ + c₊ Π₂,   c± = sqrt((1 ± λ)/2)
//! ```
//!
//! and then postselected on `|f⟩ ∝ cos(θ/2)|1⟩ − sin(θ/2)|2⟩`. On diagonal
//! states the pair reproduces the classical detector with bias `g = λ`, and
//! it damps coherences by exactly `sqrt(1 − λ²)`, the least any pair with
//! this response can.

use num_complex::Complex64;

use crate::classical::ZERO_PROBABILITY;
use crate::contextual::{symmetric_cv, ContextualValues, ResponseMatrix};
use crate::{BoxIndex, Error, JointDistribution, Result, Signal};

/// Overlaps at or below this magnitude count as orthogonal.
pub const ZERO_OVERLAP: f64 = 1e-14;

const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelState {
    pub a1: Complex64,
    pub a2: Complex64,
}

impl TwoLevelState {
    pub fn new(a1: Complex64, a2: Complex64) -> Result<Self> {
        let norm = a1.norm_sqr() + a2.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid("state", format!("squared norm {norm} is not 1")));
        }
        Ok(Self { a1, a2 })
    }

    /// Normalise an arbitrary nonzero amplitude pair.
    pub fn normalized(a1: Complex64, a2: Complex64) -> Result<Self> {
        let norm = (a1.norm_sqr() + a2.norm_sqr()).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::invalid("state", "amplitudes must be finite and not both zero"));
        }
        Ok(Self { a1: a1 / norm, a2: a2 / norm })
    }

    /// `sqrt(p1)|1⟩ + sqrt(1 − p1)|2⟩`.
    pub fn from_p1(p1: f64) -> Result<Self> {
        crate::classical::check_probability("p1", p1)?;
        Ok(Self {
            a1: Complex64::new(p1.sqrt(), 0.0),
            a2: Complex64::new((1.0 - p1).sqrt(), 0.0),
        })
    }

    pub fn basis(b: BoxIndex) -> Self {
        let (one, zero) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        match b {
            BoxIndex::Box1 => Self { a1: one, a2: zero },
            BoxIndex::Box2 => Self { a1: zero, a2: one },
        }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &TwoLevelState) -> Complex64 {
        self.a1.conj() * other.a1 + self.a2.conj() * other.a2
    }

    pub fn density(&self) -> DensityMatrix2 {
        let a = [self.a1, self.a2];
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = a[r] * a[c].conj();
            }
        }
        DensityMatrix2 { m }
    }

    fn check(&self) -> Result<()> {
        Self::new(self.a1, self.a2).map(|_| ())
    }
}

/// Postselection onto `cos(θ/2)|1⟩ − sin(θ/2)|2⟩`: the state that a unitary
/// sending `|2⟩ → cos(θ/2)|1⟩ + sin(θ/2)|2⟩` maps onto box 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Postselection {
    theta: f64,
    state: TwoLevelState,
}

impl Postselection {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..=2.0 * std::f64::consts::PI).contains(&theta) {
            return Err(Error::invalid("theta", format!("{theta} is outside [0, 2π]")));
        }
        let half = theta / 2.0;
        let state = TwoLevelState {
            a1: Complex64::new(half.cos(), 0.0),
            a2: Complex64::new(-half.sin(), 0.0),
        };
        Ok(Self { theta, state })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn state(&self) -> &TwoLevelState {
        &self.state
    }

    /// The orthogonal (failed postselection) state.
    pub fn complement(&self) -> TwoLevelState {
        TwoLevelState { a1: -self.state.a2.conj(), a2: self.state.a1.conj() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementModel {
    lambda: f64,
}

impl MeasurementModel {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid("lambda", format!("{lambda} is outside [0, 1]")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `(c₊, c₋)`.
    pub fn kraus_weights(&self) -> (f64, f64) {
        (((1.0 + self.lambda) / 2.0).sqrt(), ((1.0 - self.lambda) / 2.0).sqrt())
    }

    /// Diagonal of `M_x` in the box basis.
    pub fn kraus_diagonal(&self, x: Signal) -> [f64; 2] {
        let (cp, cm) = self.kraus_weights();
        match x {
            Signal::Emitted => [cp, cm],
            Signal::Silent => [cm, cp],
        }
    }

    /// Outcome probabilities on box eigenstates: `P(S|1) = (1+λ)/2`.
    pub fn response(&self) -> Result<ResponseMatrix> {
        ResponseMatrix::symmetric(self.lambda)
    }

    /// `(1/λ, −1/λ)`; fails at `λ = 0`.
    pub fn contextual_values(&self) -> Result<ContextualValues> {
        symmetric_cv(self.lambda)
    }

    /// `1 − sqrt(1 − λ²)` without cancellation.
    pub fn coherence_loss(&self) -> f64 {
        let l2 = self.lambda * self.lambda;
        l2 / (1.0 + (1.0 - l2).sqrt())
    }

    fn apply(&self, x: Signal, s: &TwoLevelState) -> (Complex64, Complex64) {
        let d = self.kraus_diagonal(x);
        (s.a1 * d[0], s.a2 * d[1])
    }

    /// `Σ_x M_x† M_x`, which should be the identity.
    pub fn completeness(&self) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for x in Signal::ALL {
            let d = self.kraus_diagonal(x);
            out[0][0] += d[0] * d[0];
            out[1][1] += d[1] * d[1];
        }
        out
    }
}

/// 2×2 complex density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix2 {
    pub m: [[Complex64; 2]; 2],
}

impl DensityMatrix2 {
    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (self.m[0][0].im).abs() <= tol
            && (self.m[1][1].im).abs() <= tol
            && (self.m[0][1] - self.m[1][0].conj()).norm() <= tol
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let (a, d) = (self.m[0][0].re, self.m[1][1].re);
        let b = (self.m[0][1] + self.m[1][0].conj()) / 2.0;
        let mean = (a + d) / 2.0;
        let radius = (((a - d) / 2.0).powi(2) + b.norm_sqr()).sqrt();
        [mean - radius, mean + radius]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_hermitian(1e-12) {
            return Err(Error::invalid("density", "not Hermitian"));
        }
        if (self.trace() - 1.0).norm() > 1e-12 {
            return Err(Error::invalid("density", "trace is not 1"));
        }
        if self.eigenvalues()[0] < -1e-12 {
            return Err(Error::invalid("density", "negative eigenvalue"));
        }
        Ok(())
    }

    pub fn sub(&self, other: &DensityMatrix2) -> DensityMatrix2 {
        let mut m = self.m;
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v -= other.m[r][c];
            }
        }
        DensityMatrix2 { m }
    }

    /// Half the sum of absolute eigenvalues of the difference.
    pub fn trace_distance(&self, other: &DensityMatrix2) -> f64 {
        let e = self.sub(other).eigenvalues();
        0.5 * (e[0].abs() + e[1].abs())
    }
}

/// `⟨A⟩ = |a₁|² − |a₂|²` for `A = |1⟩⟨1| − |2⟩⟨2|`.
pub fn expectation(i: &TwoLevelState) -> Result<f64> {
    i.check()?;
    Ok(i.a1.norm_sqr() - i.a2.norm_sqr())
}

/// Exact table over (outcome × postselection). The final-box axis is read
/// after the postselection unitary: `Box2` is `f`, `Box1` is `f⊥`.
pub fn joint_outcome_probs(
    i: &TwoLevelState,
    m: &MeasurementModel,
    f: &Postselection,
) -> Result<JointDistribution> {
    i.check()?;
    let pass = f.state();
    let fail = f.complement();
    let mut p = [[0.0; 2]; 2];
    for x in Signal::ALL {
        let (b1, b2) = m.apply(x, i);
        let after = TwoLevelState { a1: b1, a2: b2 };
        p[x.index()][BoxIndex::Box2.index()] = pass.inner(&after).norm_sqr();
        p[x.index()][BoxIndex::Box1.index()] = fail.inner(&after).norm_sqr();
    }
    Ok(JointDistribution { p })
}

/// `⟨f|A|i⟩ / ⟨f|i⟩`.
pub fn weak_value(i: &TwoLevelState, f: &Postselection) -> Result<Complex64> {
    i.check()?;
    let fs = f.state();
    let overlap = fs.inner(i);
    if overlap.norm() <= ZERO_OVERLAP {
        return Err(Error::ZeroOverlap);
    }
    let a_i = TwoLevelState { a1: i.a1, a2: -i.a2 };
    Ok(fs.inner(&a_i) / overlap)
}

/// `Σ_x |⟨f|M_x|i⟩|²`.
pub fn postselection_probability(
    i: &TwoLevelState,
    m: &MeasurementModel,
    f: &Postselection,
) -> Result<f64> {
    Ok(joint_outcome_probs(i, m, f)?.final_marginal(BoxIndex::Box2))
}

/// Contextual-value-weighted signal average over postselected trials.
pub fn conditional_mean_quantum(
    i: &TwoLevelState,
    m: &MeasurementModel,
    f: &Postselection,
    cv: &ContextualValues,
) -> Result<f64> {
    if m.lambda() == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    let dist = joint_outcome_probs(i, m, f)?;
    let pf = dist.final_marginal(BoxIndex::Box2);
    if pf <= ZERO_PROBABILITY {
        return Err(Error::ZeroPostselection);
    }
    let weighted: f64 =
        Signal::ALL.iter().map(|&x| cv.weight(x) * dist.get(x, BoxIndex::Box2)).sum();
    Ok(weighted / pf)
}

/// Trace distance between `|i⟩⟨i|` and the unconditioned post-measurement
/// state `Σ_x M_x|i⟩⟨i|M_x†`.
pub fn quantum_disturbance(i: &TwoLevelState, m: &MeasurementModel) -> Result<f64> {
    i.check()?;
    let before = i.density();
    let mut after = DensityMatrix2 { m: [[Complex64::new(0.0, 0.0); 2]; 2] };
    for x in Signal::ALL {
        let (b1, b2) = m.apply(x, i);
        let rho = TwoLevelState { a1: b1, a2: b2 }.density();
        for r in 0..2 {
            for c in 0..2 {
                after.m[r][c] += rho.m[r][c];
            }
        }
    }
    Ok(before.trace_distance(&after))
}
