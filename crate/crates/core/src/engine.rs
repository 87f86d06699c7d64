//! Monte Carlo estimation of detection statistics as phase-space averages.
//!
//! Every observable here is an average of a deterministic function of the
//! sampled mode amplitudes: detection probabilities average the detector
//! response at the analyzed intensities, joint probabilities average the
//! pairwise response, and intensity moments average the intensities
//! themselves. Estimates carry standard errors; the cross-term gaps
//! (`p_joint - p_a p_b` and `<I_A I_B> - <I_A><I_B>`) use the delta-method
//! variance of the plug-in estimator so significance tests on them are
//! calibrated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{chunk_ranges, ChunkOutput, TrialMapper, TrialRange};
use crate::math::{self, CompensatedSum};
use crate::optics::{
    analyze, pair_rho, propagate, Beam, DetectorModel, FieldCovariance, PolarizerSetting,
    SourceTransform,
};
use crate::rng::RandomStream;
use crate::vacuum::{sample_vacuum, VacuumDistribution};

/// A two-beam run: source, shared vacuum environment, one analyzer and one
/// detector per beam.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub source: SourceTransform,
    pub vacuum: VacuumDistribution,
    pub setting_a: PolarizerSetting,
    pub setting_b: PolarizerSetting,
    pub detector_a: DetectorModel,
    pub detector_b: DetectorModel,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.detector_a.validate()?;
        self.detector_b.validate()
    }

    /// Analyzed intensities `(I_A, I_B)` for one sample of the modes.
    pub fn intensities(&self, alpha: &crate::vacuum::HiddenVariableVector) -> Result<(f64, f64)> {
        let fields = propagate(&self.source, alpha)?;
        let ea = analyze(&fields, Beam::A, self.setting_a);
        let eb = analyze(&fields, Beam::B, self.setting_b);
        Ok((ea.norm_sqr(), eb.norm_sqr()))
    }

    /// Exact second moments of the analyzed fields.
    pub fn covariance(&self) -> FieldCovariance {
        crate::optics::analytic_covariance(
            &self.source,
            self.setting_a,
            self.setting_b,
            self.vacuum.sigma0_sq(),
        )
    }
}

/// A scalar estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Distance from `expected` in standard errors; infinite if the
    /// standard error is zero and the values differ.
    pub fn sigmas_from(&self, expected: f64) -> f64 {
        let d = math::fabs(self.value - expected);
        if d == 0.0 {
            0.0
        } else if self.stderr == 0.0 {
            f64::INFINITY
        } else {
            d / self.stderr
        }
    }
}

/// Monte Carlo detection and intensity statistics of a two-beam run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PairStatistics {
    pub trials: u64,
    /// Detection probability on beam A.
    pub p_a: Estimate,
    /// Detection probability on beam B.
    pub p_b: Estimate,
    /// Joint detection probability.
    pub p_joint: Estimate,
    /// `p_joint - p_a p_b`.
    pub detection_gap: Estimate,
    /// Mean analyzed intensity on beam A.
    pub intensity_a: Estimate,
    /// Mean analyzed intensity on beam B.
    pub intensity_b: Estimate,
    /// `<I_A I_B>`.
    pub intensity_product: Estimate,
    /// `<I_A I_B> - <I_A><I_B>`.
    pub intensity_gap: Estimate,
    /// `E[ |G(I_A, I_B) - f_A(I_A) f_B(I_B)| ]`: mean absolute pointwise
    /// deviation of the pair response from the product of singles. Exactly
    /// zero for detectors with independent internal randomness.
    pub pointwise_gap: Estimate,
}

const M_FA: usize = 0;
const M_FB: usize = 1;
const M_G: usize = 2;
const M_FA2: usize = 3;
const M_FB2: usize = 4;
const M_G2: usize = 5;
const M_FAFB: usize = 6;
const M_GFA: usize = 7;
const M_GFB: usize = 8;
const M_IA: usize = 9;
const M_IB: usize = 10;
const M_P: usize = 11;
const M_IA2: usize = 12;
const M_IB2: usize = 13;
const M_P2: usize = 14;
const M_PIA: usize = 15;
const M_PIB: usize = 16;
const M_PW: usize = 17;
const M_PW2: usize = 18;
const MOMENTS: usize = 19;

fn eval_chunk(exp: &Experiment, stream: &RandomStream, rho: f64, range: TrialRange) -> ChunkOutput {
    let mut acc = [CompensatedSum::default(); MOMENTS];
    for t in range.iter() {
        let alpha = sample_vacuum(&exp.vacuum, &stream.at_trial(t));
        let (ia, ib) = exp.intensities(&alpha).expect("mode count fixed by distribution");
        let fa = exp
            .detector_a
            .detection_probability(ia)
            .expect("intensity is non-negative");
        let fb = exp
            .detector_b
            .detection_probability(ib)
            .expect("intensity is non-negative");
        let g = crate::optics::joint_from_singles(fa, fb, rho);
        let p = ia * ib;
        acc[M_FA].add(fa);
        acc[M_FB].add(fb);
        acc[M_G].add(g);
        acc[M_FA2].add(fa * fa);
        acc[M_FB2].add(fb * fb);
        acc[M_G2].add(g * g);
        acc[M_FAFB].add(fa * fb);
        acc[M_GFA].add(g * fa);
        acc[M_GFB].add(g * fb);
        acc[M_IA].add(ia);
        acc[M_IB].add(ib);
        acc[M_P].add(p);
        acc[M_IA2].add(ia * ia);
        acc[M_IB2].add(ib * ib);
        acc[M_P2].add(p * p);
        acc[M_PIA].add(p * ia);
        acc[M_PIB].add(p * ib);
        let pw = math::fabs(g - fa * fb);
        acc[M_PW].add(pw);
        acc[M_PW2].add(pw * pw);
    }
    ChunkOutput { sums: acc.iter().map(|c| c.value()).collect(), ..ChunkOutput::default() }
}

struct Moments {
    n: f64,
    s: [f64; MOMENTS],
}

impl Moments {
    fn mean(&self, i: usize) -> f64 {
        self.s[i] / self.n
    }

    /// Sample covariance of the per-trial values behind sums `i`, `j`,
    /// where `ij` is the sum of their products.
    fn cov(&self, i: usize, j: usize, ij: usize) -> f64 {
        (self.s[ij] - self.s[i] * self.s[j] / self.n) / (self.n - 1.0)
    }

    fn mean_estimate(&self, i: usize, sq: usize) -> Estimate {
        let var = self.cov(i, i, sq).max(0.0);
        Estimate { value: self.mean(i), stderr: math::sqrt(var / self.n) }
    }

    /// Estimate of `E[xy] - E[x] E[y]` with the delta-method standard
    /// error of the plug-in statistic.
    fn gap_estimate(
        &self,
        x: usize,
        y: usize,
        xy: usize,
        x2: usize,
        y2: usize,
        xy2: usize,
        xyx: usize,
        xyy: usize,
    ) -> Estimate {
        let mx = self.mean(x);
        let my = self.mean(y);
        let value = self.mean(xy) - mx * my;
        // Influence of one trial on the gap: (v - E v) - my (x - E x)
        // - mx (y - E y), where v = xy.
        let var = self.cov(xy, xy, xy2) + my * my * self.cov(x, x, x2)
            + mx * mx * self.cov(y, y, y2)
            - 2.0 * my * self.cov(xy, x, xyx)
            - 2.0 * mx * self.cov(xy, y, xyy)
            + 2.0 * mx * my * self.cov(x, y, self.index_of_pair(x, y));
        let var = var.max(0.0);
        Estimate { value, stderr: math::sqrt(var / self.n) }
    }

    fn index_of_pair(&self, x: usize, y: usize) -> usize {
        match (x, y) {
            (M_FA, M_FB) => M_FAFB,
            (M_IA, M_IB) => M_P,
            _ => unreachable!("no product sum for this pair"),
        }
    }
}

/// Runs `trials` independent trials of the experiment and returns detection
/// and intensity statistics. Results are bitwise reproducible for a given
/// `seed` and `trials` regardless of the mapper's scheduling.
pub fn estimate_pair(
    exp: &Experiment,
    seed: u64,
    trials: u64,
    mapper: &dyn TrialMapper,
) -> Result<PairStatistics> {
    exp.validate()?;
    if trials < 2 {
        return Err(Error::InsufficientData(alloc::format!(
            "need at least 2 trials for standard errors, got {trials}"
        )));
    }
    let stream = RandomStream::new(seed);
    let rho = pair_rho(&exp.detector_a, &exp.detector_b);
    let ranges = chunk_ranges(trials);
    let outputs = mapper.map_chunks(&ranges, &|r| eval_chunk(exp, &stream, rho, r));
    let mut merged = [CompensatedSum::default(); MOMENTS];
    for out in &outputs {
        debug_assert_eq!(out.sums.len(), MOMENTS);
        for (m, &v) in merged.iter_mut().zip(out.sums.iter()) {
            m.add(v);
        }
    }
    let mut s = [0.0; MOMENTS];
    for (dst, src) in s.iter_mut().zip(merged.iter()) {
        *dst = src.value();
    }
    let m = Moments { n: trials as f64, s };
    Ok(PairStatistics {
        trials,
        p_a: m.mean_estimate(M_FA, M_FA2),
        p_b: m.mean_estimate(M_FB, M_FB2),
        p_joint: m.mean_estimate(M_G, M_G2),
        detection_gap: m.gap_estimate(M_FA, M_FB, M_G, M_FA2, M_FB2, M_G2, M_GFA, M_GFB),
        intensity_a: m.mean_estimate(M_IA, M_IA2),
        intensity_b: m.mean_estimate(M_IB, M_IB2),
        intensity_product: m.mean_estimate(M_P, M_P2),
        intensity_gap: m.gap_estimate(M_IA, M_IB, M_P, M_IA2, M_IB2, M_P2, M_PIA, M_PIB),
        pointwise_gap: m.mean_estimate(M_PW, M_PW2),
    })
}
