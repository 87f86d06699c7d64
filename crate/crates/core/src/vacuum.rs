//! Vacuum-mode hidden variables.
//!
//! The hidden state of one trial is a vector of complex mode amplitudes
//! drawn from the zero-mean circular Gaussian vacuum distribution: each mode
//! amplitude has independent real and imaginary parts of variance
//! `sigma0_sq / 2`, so the mean mode intensity `<|alpha|^2>` equals
//! `sigma0_sq`. Everything downstream (fields, intensities, detections) is a
//! function of this vector plus locally assigned noise.

use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{RandomStream, StreamDomain};

/// Default `sigma0_sq`: vacuum amplitude variance of half a photon per mode.
pub const DEFAULT_SIGMA0_SQ: f64 = 0.5;

/// Number of source modes feeding the parametric transform.
pub const SOURCE_MODES: usize = 4;

/// Labelled set of optical modes. The first four are always the source
/// modes `a1, a2, b1, b2`; any further entries model auxiliary device ports
/// that carry vacuum noise of their own.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeSet {
    labels: Vec<String>,
}

impl ModeSet {
    /// The four source modes only.
    pub fn source_only() -> Self {
        Self::with_device_modes(0)
    }

    /// Source modes plus `extra` auxiliary device modes.
    pub fn with_device_modes(extra: usize) -> Self {
        let mut labels: Vec<String> = ["a1", "a2", "b1", "b2"]
            .iter()
            .map(|s| String::from(*s))
            .collect();
        for k in 0..extra {
            labels.push(alloc::format!("dev{k}"));
        }
        Self { labels }
    }

    /// Builds a mode set from explicit labels. Labels must be unique and
    /// non-empty, and at least the four source modes must be present.
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < SOURCE_MODES {
            return Err(Error::Dimension { expected: SOURCE_MODES, got: labels.len() });
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::InvalidSpec(alloc::format!("mode label {i} is empty")));
            }
            if labels[..i].contains(l) {
                return Err(Error::InvalidSpec(alloc::format!("duplicate mode label `{l}`")));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Zero-mean circular complex Gaussian over a mode set.
#[derive(Clone, Debug, PartialEq)]
pub struct VacuumDistribution {
    modes: ModeSet,
    sigma0_sq: f64,
}

impl VacuumDistribution {
    pub fn new(modes: ModeSet, sigma0_sq: f64) -> Result<Self> {
        if !(sigma0_sq > 0.0) || !sigma0_sq.is_finite() {
            return Err(Error::InvalidSpec(alloc::format!(
                "sigma0_sq must be positive and finite, got {sigma0_sq}"
            )));
        }
        Ok(Self { modes, sigma0_sq })
    }

    pub fn source_default() -> Self {
        Self { modes: ModeSet::source_only(), sigma0_sq: DEFAULT_SIGMA0_SQ }
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0_sq
    }
}

/// One realization of all mode amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenVariableVector {
    amplitudes: Vec<Complex64>,
}

impl HiddenVariableVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }
}

/// Draws the mode amplitudes of one trial from the vacuum distribution.
///
/// The draw order is fixed (per mode: real part, then imaginary part) and
/// the stream is fully determined by `(seed, trial_index)`.
pub fn sample_vacuum(dist: &VacuumDistribution, stream: &RandomStream) -> HiddenVariableVector {
    let mut rng = stream.rng(StreamDomain::Vacuum);
    let scale = math::sqrt(dist.sigma0_sq / 2.0);
    let n = dist.modes.len();
    let mut amplitudes = Vec::with_capacity(n);
    for _ in 0..n {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        amplitudes.push(Complex64::new(re * scale, im * scale));
    }
    HiddenVariableVector { amplitudes }
}

/// Log of the vacuum probability density at `alpha`, treating each complex
/// mode as two real dimensions: per mode the density is
/// `exp(-|alpha_k|^2 / sigma0_sq) / (pi sigma0_sq)`.
pub fn log_density(dist: &VacuumDistribution, alpha: &HiddenVariableVector) -> Result<f64> {
    let n = dist.modes.len();
    if alpha.len() != n {
        return Err(Error::Dimension { expected: n, got: alpha.len() });
    }
    let mut acc = 0.0;
    for a in alpha.amplitudes() {
        acc -= math::ln(math::PI * dist.sigma0_sq) + a.norm_sqr() / dist.sigma0_sq;
    }
    Ok(acc)
}
