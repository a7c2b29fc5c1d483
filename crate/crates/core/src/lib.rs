//! FVN test signals and orthogonal-sequence measurement analysis.
//!
//! A test signal is a sum of repeated, sign-coded unit FVNs. Analysis of
//! a system's response to it recovers the linear impulse response, the
//! time-invariant nonlinear residual and the random residual in one pass.

pub mod decompose;
pub mod error;
pub mod fft;
pub mod fvn;
pub mod io;
pub mod recovery;
pub mod selftest;
pub mod sequences;
pub mod simsys;

pub use decompose::{decompose, DecomposeConfig, DecompositionReport};
pub use error::{Error, Result};
pub use fvn::{FvnParams, PhaseSpec, UnitFvn};
pub use recovery::{Alignment, CleanRegion, RecoveredSet, RegionConfig};
pub use sequences::{Mode, NormPolicy, SequencePlan, TestSignal, WeightMatrix};
pub use simsys::{InputReference, LoudspeakerModel, Nonlinearity, ShaperPair, SimulationConfig};

/// Version string recorded in report provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
