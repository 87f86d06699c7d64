//! Event counting runs and the estimators built on raw counts.
//!
//! Unlike the probability engine, which averages response functions, these
//! runs realize actual click records trial by trial: sample the modes,
//! evaluate the detector responses, draw the click outcomes, thin them by
//! the detection efficiency, and tally. Two estimators summarize a run:
//! the heralded ratio `N_AB / N_B` (the detection rate on one side
//! conditioned on a click on the other) and the product gap
//! `N_AB/N - (N_A/N)(N_B/N)` (how far coincidences deviate from the product
//! of singles). For detectors with independent noise both reduce to pure
//! intensity-correlation probes; common-mode noise shifts them while
//! leaving each side's marginal law untouched.

use serde::{Deserialize, Serialize};

use crate::efficiency::{thin, thinning_uniforms, Detections, Efficiency};
use crate::engine::{Estimate, Experiment};
use crate::error::{Error, Result};
use crate::exec::{chunk_ranges, ChunkOutput, TrialMapper, TrialRange};
use crate::math;
use crate::optics::{joint_from_singles, pair_rho};
use crate::rng::{RandomStream, StreamDomain};
use crate::vacuum::sample_vacuum;
use alloc::vec::Vec;
use rand::Rng;

/// Channel index of the beam A detector in click bitmasks.
pub const CHANNEL_A: usize = 0;
/// Channel index of the beam B detector in click bitmasks.
pub const CHANNEL_B: usize = 1;

/// Clicks observed in one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub detections: Detections,
}

impl TrialRecord {
    /// Fixed-width encoding: trial index as little-endian `u64` followed by
    /// the click bitmask byte.
    pub const ENCODED_LEN: usize = 9;

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.trial_index.to_le_bytes());
        out.push(self.detections.bits());
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != Self::ENCODED_LEN {
            return Err(Error::Dimension { expected: Self::ENCODED_LEN, got: bytes.len() });
        }
        let mut idx = [0u8; 8];
        idx.copy_from_slice(&bytes[..8]);
        Ok(Self {
            trial_index: u64::from_le_bytes(idx),
            detections: Detections::from_bits(bytes[8]),
        })
    }
}

/// Click tallies of a two-detector counting run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub trials: u64,
    /// Trials where the beam A detector fired (with or without B).
    pub n_a: u64,
    /// Trials where the beam B detector fired.
    pub n_b: u64,
    /// Trials where both fired.
    pub n_ab: u64,
}

impl CountTable {
    fn rate(&self, k: u64) -> Estimate {
        let n = self.trials as f64;
        let p = k as f64 / n;
        Estimate { value: p, stderr: math::sqrt((p * (1.0 - p) / n).max(0.0)) }
    }

    pub fn singles_rate_a(&self) -> Estimate {
        self.rate(self.n_a)
    }

    pub fn singles_rate_b(&self) -> Estimate {
        self.rate(self.n_b)
    }

    pub fn coincidence_rate(&self) -> Estimate {
        self.rate(self.n_ab)
    }

    /// `N_AB / N_B`: detection rate on A conditioned on a B click. The
    /// standard error is binomial within the heralded subsample.
    pub fn heralded_ratio(&self) -> Result<Estimate> {
        if self.n_b == 0 {
            return Err(Error::InsufficientData("no herald clicks on beam B".into()));
        }
        let r = self.n_ab as f64 / self.n_b as f64;
        let se = math::sqrt((r * (1.0 - r) / self.n_b as f64).max(0.0));
        Ok(Estimate { value: r, stderr: se })
    }

    /// `N_AB/N_B - N_A/N`: excess of the heralded rate over the
    /// unconditioned singles rate, with the delta-method standard error
    /// that accounts for the correlation between numerator and denominator.
    pub fn heralded_gap(&self) -> Result<Estimate> {
        if self.n_b == 0 {
            return Err(Error::InsufficientData("no herald clicks on beam B".into()));
        }
        let n = self.trials as f64;
        let pa = self.n_a as f64 / n;
        let pb = self.n_b as f64 / n;
        let pab = self.n_ab as f64 / n;
        let value = pab / pb - pa;
        // Influence of one trial: (x_ab - pab)/pb - pab (x_b - pb)/pb^2
        // - (x_a - pa); indicator moments follow from x_ab <= x_a, x_b.
        let var_ab = pab * (1.0 - pab);
        let var_a = pa * (1.0 - pa);
        let var_b = pb * (1.0 - pb);
        let cov_ab_b = pab * (1.0 - pb);
        let cov_ab_a = pab * (1.0 - pa);
        let cov_a_b = pab - pa * pb;
        let var = var_ab / (pb * pb) + pab * pab * var_b / (pb * pb * pb * pb) + var_a
            - 2.0 * pab * cov_ab_b / (pb * pb * pb)
            - 2.0 * cov_ab_a / pb
            + 2.0 * pab * cov_a_b / (pb * pb);
        Ok(Estimate { value, stderr: math::sqrt((var / n).max(0.0)) })
    }

    /// `N_AB/N - (N_A/N)(N_B/N)` with the delta-method standard error.
    pub fn product_gap(&self) -> Estimate {
        let n = self.trials as f64;
        let pa = self.n_a as f64 / n;
        let pb = self.n_b as f64 / n;
        let pab = self.n_ab as f64 / n;
        let value = pab - pa * pb;
        // Influence: (x_ab - pab) - pb (x_a - pa) - pa (x_b - pb).
        let var = pab * (1.0 - pab) + pb * pb * pa * (1.0 - pa) + pa * pa * pb * (1.0 - pb)
            - 2.0 * pb * pab * (1.0 - pa)
            - 2.0 * pa * pab * (1.0 - pb)
            + 2.0 * pa * pb * (pab - pa * pb);
        Estimate { value, stderr: math::sqrt((var / n).max(0.0)) }
    }

    fn absorb(&mut self, counts: &[u64]) {
        self.n_a += counts[0];
        self.n_b += counts[1];
        self.n_ab += counts[2];
    }
}

/// Draws the click pair for one trial given the two response values.
///
/// Independent detectors use one uniform per channel. A common-mode pair is
/// drawn from the exact four-cell law `(both, A only, B only, neither)`
/// with probabilities `(g, fa-g, fb-g, 1-fa-fb+g)`; the first cell boundary
/// layout keeps the A marginal a function of `fa` alone.
fn draw_clicks(stream: &RandomStream, fa: f64, fb: f64, rho: f64) -> Detections {
    let mut d = Detections::none();
    if rho == 0.0 {
        let ua: f64 = stream.rng(StreamDomain::DetectorNoise(CHANNEL_A as u8)).gen();
        let ub: f64 = stream.rng(StreamDomain::DetectorNoise(CHANNEL_B as u8)).gen();
        if ua < fa {
            d.set(CHANNEL_A);
        }
        if ub < fb {
            d.set(CHANNEL_B);
        }
    } else {
        let g = joint_from_singles(fa, fb, rho);
        let u: f64 = stream.rng(StreamDomain::CommonMode).gen();
        if u < fa {
            d.set(CHANNEL_A);
        }
        if u < g || (fa <= u && u < fa + fb - g) {
            d.set(CHANNEL_B);
        }
    }
    d
}

fn simulate_trial(exp: &Experiment, eff: Efficiency, rho: f64, stream: &RandomStream) -> Detections {
    let alpha = sample_vacuum(&exp.vacuum, stream);
    let (ia, ib) = exp.intensities(&alpha).expect("mode count fixed by distribution");
    let fa = exp.detector_a.detection_probability(ia).expect("intensity is non-negative");
    let fb = exp.detector_b.detection_probability(ib).expect("intensity is non-negative");
    let raw = draw_clicks(stream, fa, fb, rho);
    if eff.value() < 1.0 {
        let us: [f64; 2] = thinning_uniforms(stream);
        thin(raw, eff, &us)
    } else {
        raw
    }
}

fn eval_chunk(
    exp: &Experiment,
    eff: Efficiency,
    rho: f64,
    stream: &RandomStream,
    range: TrialRange,
    keep_records: bool,
) -> ChunkOutput {
    let mut counts = [0u64; 3];
    let mut bytes = Vec::new();
    if keep_records {
        bytes.reserve(range.len() as usize * TrialRecord::ENCODED_LEN);
    }
    for t in range.iter() {
        let d = simulate_trial(exp, eff, rho, &stream.at_trial(t));
        let a = d.fired(CHANNEL_A);
        let b = d.fired(CHANNEL_B);
        counts[0] += a as u64;
        counts[1] += b as u64;
        counts[2] += (a && b) as u64;
        if keep_records {
            TrialRecord { trial_index: t, detections: d }.encode(&mut bytes);
        }
    }
    ChunkOutput { sums: Vec::new(), counts: counts.to_vec(), bytes }
}

fn run_impl(
    exp: &Experiment,
    eff: Efficiency,
    seed: u64,
    trials: u64,
    mapper: &dyn TrialMapper,
    keep_records: bool,
) -> Result<(CountTable, Vec<u8>)> {
    exp.validate()?;
    if trials == 0 {
        return Err(Error::InsufficientData("counting run needs at least one trial".into()));
    }
    let stream = RandomStream::new(seed);
    let rho = pair_rho(&exp.detector_a, &exp.detector_b);
    let ranges = chunk_ranges(trials);
    let outputs =
        mapper.map_chunks(&ranges, &|r| eval_chunk(exp, eff, rho, &stream, r, keep_records));
    let mut table = CountTable { trials, ..CountTable::default() };
    let mut bytes = Vec::new();
    for out in &outputs {
        table.absorb(&out.counts);
        bytes.extend_from_slice(&out.bytes);
    }
    Ok((table, bytes))
}

/// Runs a counting experiment and returns the click tallies.
pub fn run_counting(
    exp: &Experiment,
    eff: Efficiency,
    seed: u64,
    trials: u64,
    mapper: &dyn TrialMapper,
) -> Result<CountTable> {
    run_impl(exp, eff, seed, trials, mapper, false).map(|(t, _)| t)
}

/// Runs a counting experiment and additionally returns the per-trial click
/// records, encoded in trial order (9 bytes per trial; see
/// [`TrialRecord::encode`]).
pub fn run_counting_with_log(
    exp: &Experiment,
    eff: Efficiency,
    seed: u64,
    trials: u64,
    mapper: &dyn TrialMapper,
) -> Result<(CountTable, Vec<u8>)> {
    run_impl(exp, eff, seed, trials, mapper, true)
}

/// Decodes a click log produced by [`run_counting_with_log`].
pub fn decode_log(bytes: &[u8]) -> Result<Vec<TrialRecord>> {
    if bytes.len() % TrialRecord::ENCODED_LEN != 0 {
        return Err(Error::InvalidSpec(alloc::format!(
            "click log length {} is not a multiple of {}",
            bytes.len(),
            TrialRecord::ENCODED_LEN
        )));
    }
    bytes.chunks(TrialRecord::ENCODED_LEN).map(TrialRecord::decode).collect()
}
