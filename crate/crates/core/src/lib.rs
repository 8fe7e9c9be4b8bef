//! Side-by-side simulation of a classical conditioned-measurement protocol and
//! the quantum weak-value protocol on a two-box (two-level) system.
//!
//! The crate is organised bottom-up:
//!
//! - [`contextual`]: outcome weights that make a noisy signal average unbiased.
//! - [`classical`]: exact 8-path enumeration of the classical box protocol.
//! - [`quantum`]: exact two-level engine with a binary Kraus measurement.
//! - [`analysis`]: sweeps, power-law fits, weak-limit extrapolation and the
//!   projector weak-value negativity witness.
//! - [`montecarlo`]: seeded event-level sampling of both protocols.
//! - [`runner`]: the JSON-configured experiment runner behind the CLI.

pub mod analysis;
pub mod classical;
pub mod contextual;
pub mod error;
pub mod montecarlo;
pub mod quantum;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};

/// Detector outcome: a signal was emitted (`S`) or not (`S̄`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signal {
    Emitted,
    Silent,
}

impl Signal {
    pub const ALL: [Signal; 2] = [Signal::Emitted, Signal::Silent];

    pub fn index(self) -> usize {
        match self {
            Signal::Emitted => 0,
            Signal::Silent => 1,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Signal::Emitted => "S",
            Signal::Silent => "Sbar",
        }
    }
}

/// One of the two boxes.
///
/// For the quantum protocol the final-box axis is read after the
/// postselection unitary: `Box2` is a successful postselection onto `|f⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoxIndex {
    Box1,
    Box2,
}

impl BoxIndex {
    pub const ALL: [BoxIndex; 2] = [BoxIndex::Box1, BoxIndex::Box2];

    pub fn index(self) -> usize {
        match self {
            BoxIndex::Box1 => 0,
            BoxIndex::Box2 => 1,
        }
    }

    pub fn other(self) -> BoxIndex {
        match self {
            BoxIndex::Box1 => BoxIndex::Box2,
            BoxIndex::Box2 => BoxIndex::Box1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<BoxIndex> {
        match n {
            1 => Some(BoxIndex::Box1),
            2 => Some(BoxIndex::Box2),
            _ => None,
        }
    }
}

/// Exact probabilities over (detector outcome × final box).
///
/// `p[x][b]` is indexed by [`Signal::index`] and [`BoxIndex::index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDistribution {
    pub p: [[f64; 2]; 2],
}

impl JointDistribution {
    pub fn get(&self, signal: Signal, final_box: BoxIndex) -> f64 {
        self.p[signal.index()][final_box.index()]
    }

    pub fn total(&self) -> f64 {
        self.p.iter().flatten().sum()
    }

    /// Marginal probability of a detector outcome, summed over final boxes.
    pub fn signal_marginal(&self, signal: Signal) -> f64 {
        self.p[signal.index()].iter().sum()
    }

    /// Marginal probability of ending in `final_box`.
    pub fn final_marginal(&self, final_box: BoxIndex) -> f64 {
        self.p.iter().map(|row| row[final_box.index()]).sum()
    }

    /// Cells in row-major order: (S,1), (S,2), (S̄,1), (S̄,2).
    pub fn cells(&self) -> [f64; 4] {
        [self.p[0][0], self.p[0][1], self.p[1][0], self.p[1][1]]
    }

    pub(crate) fn check_normalized(&self) -> Result<()> {
        if self.p.iter().flatten().any(|v| !(v.is_finite() && *v >= -1e-15)) {
            return Err(Error::invalid("distribution", "entries must be finite and nonnegative"));
        }
        if (self.total() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("distribution", "entries must sum to 1"));
        }
        Ok(())
    }
}
