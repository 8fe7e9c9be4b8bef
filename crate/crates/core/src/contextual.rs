//! Contextual values for a binary detector.
//!
//! Given the response matrix `P(x|b)` of a two-outcome detector, the contextual
//! values are the outcome weights `α_x` such that `Σ_x α_x P(x|b)` equals the
//! observable's eigenvalue on box `b`. Averaging the weights over the recorded
//! outcomes then reproduces the observable's mean for any preparation.

use crate::{BoxIndex, Error, Result, Signal};

/// Outcome weights `(α_S, α_S̄)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextualValues {
    pub alpha_s: f64,
    pub alpha_sbar: f64,
}

impl ContextualValues {
    pub fn new(alpha_s: f64, alpha_sbar: f64) -> Result<Self> {
        if !alpha_s.is_finite() {
            return Err(Error::invalid("alpha_s", "must be finite"));
        }
        if !alpha_sbar.is_finite() {
            return Err(Error::invalid("alpha_sbar", "must be finite"));
        }
        Ok(Self { alpha_s, alpha_sbar })
    }

    pub fn weight(&self, signal: Signal) -> f64 {
        match signal {
            Signal::Emitted => self.alpha_s,
            Signal::Silent => self.alpha_sbar,
        }
    }

    pub fn min(&self) -> f64 {
        self.alpha_s.min(self.alpha_sbar)
    }

    pub fn max(&self) -> f64 {
        self.alpha_s.max(self.alpha_sbar)
    }
}

/// Detector response `P(x|b)`; each column (fixed box) sums to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseMatrix {
    /// `p[x][b]`, indexed by [`Signal::index`] and [`BoxIndex::index`].
    pub p: [[f64; 2]; 2],
}

impl ResponseMatrix {
    /// Build from the two signal probabilities `P(S|1)` and `P(S|2)`.
    pub fn from_signal_probs(p_s1: f64, p_s2: f64) -> Result<Self> {
        for (field, v) in [("P(S|1)", p_s1), ("P(S|2)", p_s2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(field, format!("{v} is not a probability")));
            }
        }
        Ok(Self { p: [[p_s1, p_s2], [1.0 - p_s1, 1.0 - p_s2]] })
    }

    /// Symmetric detector with bias `g`: `P(S|1) = (1+g)/2`, `P(S|2) = (1-g)/2`.
    ///
    /// `g = 0` is allowed here so that the solver can report the singular case.
    pub fn symmetric(g: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::invalid("g", format!("{g} is outside [0, 1]")));
        }
        Self::from_signal_probs((1.0 + g) / 2.0, (1.0 - g) / 2.0)
    }

    /// Detector written as `P(S|1) = 1/2 + λ`, `P(S|2) = 1/2 - λ` with
    /// `λ ∈ [0, 1/2]`. Equivalent to [`ResponseMatrix::symmetric`] with `g = 2λ`.
    pub fn half_offset(lambda: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&lambda) {
            return Err(Error::invalid("lambda", format!("{lambda} is outside [0, 1/2]")));
        }
        Self::from_signal_probs(0.5 + lambda, 0.5 - lambda)
    }

    pub fn get(&self, signal: Signal, b: BoxIndex) -> f64 {
        self.p[signal.index()][b.index()]
    }

    pub fn determinant(&self) -> f64 {
        self.p[0][0] * self.p[1][1] - self.p[1][0] * self.p[0][1]
    }
}

/// Solve `Σ_x α_x P(x|b) = eigenvalues[b]` for both boxes.
pub fn solve_cv(r: &ResponseMatrix, eigenvalues: (f64, f64)) -> Result<ContextualValues> {
    let det = r.determinant();
    if det.abs() <= 1e-12 {
        return Err(Error::SingularResponse);
    }
    // Rows are boxes, columns are outcomes: [P(S|1) P(S̄|1); P(S|2) P(S̄|2)].
    let (e1, e2) = eigenvalues;
    let alpha_s = (e1 * r.p[1][1] - e2 * r.p[1][0]) / det;
    let alpha_sbar = (r.p[0][0] * e2 - r.p[0][1] * e1) / det;
    ContextualValues::new(alpha_s, alpha_sbar)
}

/// Contextual values for the observable `|1⟩⟨1| - |2⟩⟨2|` (eigenvalues ±1)
/// measured by the symmetric detector with bias `g`.
pub fn symmetric_cv(g: f64) -> Result<ContextualValues> {
    solve_cv(&ResponseMatrix::symmetric(g)?, (1.0, -1.0))
}
