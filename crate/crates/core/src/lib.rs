//! Phase-space Monte Carlo engine for Bell-CHSH detection experiments.
//!
//! Light is modelled as classical Gaussian field amplitudes seeded by vacuum
//! fluctuations: every optical mode carries a zero-mean circular complex
//! Gaussian amplitude, and a parametric source correlates the beams through a
//! Bogoliubov transformation. Detection is a function of beam intensity at
//! the analyzer output, so every recorded outcome is a deterministic or
//! locally randomized function of the shared mode amplitudes. The whole
//! simulation is therefore a local hidden-variable model by construction,
//! which makes it a controlled test bed for detection-efficiency effects,
//! coincidence post-selection, and the resulting fake Bell violations.
//!
//! The crate is `no_std` (with `alloc`); all floating-point math routes
//! through `libm`. Heavy Monte Carlo loops are organized as fixed-size trial
//! chunks whose random streams derive from `(seed, trial_index)` alone, so
//! results are bit-identical for any execution order or worker count. The
//! `exec` module holds the chunk-mapping seam; a std companion crate supplies
//! thread pools and file IO.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bell;
pub mod counting;
pub mod efficiency;
pub mod engine;
pub mod error;
pub mod exec;
pub mod lhv;
pub mod math;
pub mod optics;
pub mod quadrature;
pub mod rng;
pub mod vacuum;

pub use error::{Error, Result};
