//! Detection efficiency and event thinning.
//!
//! Efficiency enters twice. On probabilities it acts algebraically: a
//! detector kept with probability `mu` scales singles rates by `mu` and
//! pairwise coincidence rates by `mu^2`, because the keep decisions of
//! distinct channels are independent of everything else. On realized
//! events it acts by thinning: each fired channel survives when its own
//! uniform draw falls below `mu`. The uniforms come from the trial's
//! thinning stream and do not depend on `mu`, so sweeping `mu` upward only
//! ever adds detections on a fixed seed (pathwise monotone coupling).

use serde::{Deserialize, Serialize};

use crate::engine::Estimate;
use crate::error::{Error, Result};
use crate::rng::{RandomStream, StreamDomain};
use rand::Rng;

/// Per-channel survival probability in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Efficiency {
    value: f64,
}

impl Efficiency {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidSpec(alloc::format!(
                "efficiency must lie in [0, 1], got {value}"
            )));
        }
        Ok(Self { value })
    }

    /// Lossless detection.
    pub fn unit() -> Self {
        Self { value: 1.0 }
    }

    pub fn value(self) -> f64 {
        self.value
    }

    /// Singles rate under thinning: `mu * p`.
    pub fn scale_marginal(self, p: f64) -> f64 {
        self.value * p
    }

    /// Two-channel coincidence rate under independent thinning: `mu^2 * p`.
    pub fn scale_joint(self, p: f64) -> f64 {
        self.value * self.value * p
    }

    /// Scales a singles-rate estimate (value and standard error) by `mu`.
    pub fn scale_marginal_estimate(self, e: Estimate) -> Estimate {
        Estimate { value: self.value * e.value, stderr: self.value * e.stderr }
    }

    /// Scales a coincidence-rate estimate by `mu^2`.
    pub fn scale_joint_estimate(self, e: Estimate) -> Estimate {
        let m2 = self.value * self.value;
        Estimate { value: m2 * e.value, stderr: m2 * e.stderr }
    }
}

/// Bitmask of fired detector channels (up to 8).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Detections {
    bits: u8,
}

impl Detections {
    pub fn none() -> Self {
        Self { bits: 0 }
    }

    pub fn from_bits(bits: u8) -> Self {
        Self { bits }
    }

    pub fn bits(self) -> u8 {
        self.bits
    }

    pub fn set(&mut self, channel: usize) {
        debug_assert!(channel < 8);
        self.bits |= 1 << channel;
    }

    pub fn fired(self, channel: usize) -> bool {
        self.bits & (1 << channel) != 0
    }

    pub fn count(self) -> u32 {
        self.bits.count_ones()
    }

    /// True if every channel fired here also fired in `other`.
    pub fn subset_of(self, other: Detections) -> bool {
        self.bits & !other.bits == 0
    }
}

/// Thins fired channels: channel `ch` survives when `uniforms[ch] < mu`.
/// Channels beyond `uniforms.len()` are dropped.
pub fn thin(detections: Detections, mu: Efficiency, uniforms: &[f64]) -> Detections {
    let mut out = Detections::none();
    for ch in 0..8 {
        if detections.fired(ch) {
            if let Some(&u) = uniforms.get(ch) {
                if u < mu.value {
                    out.set(ch);
                }
            }
        }
    }
    out
}

/// Draws the per-channel thinning uniforms for one trial. The draws depend
/// only on the stream (seed and trial index), never on `mu`, which is what
/// makes efficiency sweeps monotone along a fixed seed.
pub fn thinning_uniforms<const N: usize>(stream: &RandomStream) -> [f64; N] {
    let mut rng = stream.rng(StreamDomain::Thinning);
    let mut out = [0.0; N];
    for slot in out.iter_mut() {
        *slot = rng.gen::<f64>();
    }
    out
}
