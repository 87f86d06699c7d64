//! Dual-port analyzer stations, CHSH correlators, and efficiency sweeps.
//!
//! Each station splits its beam into the analyzer port at `theta` and the
//! orthogonal port at `theta + pi/2`, with one detector per port. A trial
//! resolves to `+1` when only the aligned port clicks, `-1` when only the
//! orthogonal port clicks, and to the higher-intensity port when both click;
//! no click (or an exact intensity tie) yields the null outcome.
//!
//! The null outcomes are where the statistics are decided. The
//! coincidence-only policy drops them, which post-selects on bright trials
//! and can push the CHSH combination past the classical bound even though
//! every trial is generated from shared mode amplitudes and local responses.
//! The full-ensemble policy maps null outcomes to `-1`, keeps the whole
//! trial set, and stays within the bound.

use serde::{Deserialize, Serialize};

use crate::efficiency::{thin, thinning_uniforms, Detections, Efficiency};
use crate::engine::Estimate;
use crate::error::{Error, Result};
use crate::exec::{chunk_ranges, ChunkOutput, TrialMapper, TrialRange};
use crate::math;
use crate::optics::{analyze, propagate, Beam, DetectorModel, PolarizerSetting, SourceTransform};
use crate::rng::{derive_seed, RandomStream, StreamDomain};
use crate::vacuum::{sample_vacuum, VacuumDistribution};
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

/// Aligned port of station A in click bitmasks.
pub const CH_A_PLUS: usize = 0;
/// Orthogonal port of station A.
pub const CH_A_MINUS: usize = 1;
/// Aligned port of station B.
pub const CH_B_PLUS: usize = 2;
/// Orthogonal port of station B.
pub const CH_B_MINUS: usize = 3;

/// Trial outcome at one station.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Plus,
    Minus,
    NoClick,
}

impl Outcome {
    fn index(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
            Outcome::NoClick => 2,
        }
    }

    /// Sign under the full-ensemble policy: null outcomes count as `-1`.
    pub fn assign_minus_value(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            _ => -1.0,
        }
    }
}

/// How null outcomes enter the correlators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostSelectionPolicy {
    /// Keep only trials where both stations produced a definite sign.
    CoincidenceOnly,
    /// Keep every trial, mapping null outcomes to `-1`.
    FullEnsembleAssignMinus,
}

impl PostSelectionPolicy {
    pub fn label(self) -> &'static str {
        match self {
            PostSelectionPolicy::CoincidenceOnly => "coincidence_only",
            PostSelectionPolicy::FullEnsembleAssignMinus => "full_ensemble_assign_minus",
        }
    }
}

/// The four analyzer orientations of a CHSH run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleSet {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl AngleSet {
    /// The standard maximizing geometry for a correlator of the form
    /// `-cos 2(theta_a - theta_b)`: with `a = pi/4`, `a' = 0`, `b = pi/8`,
    /// `b' = 3 pi/8` the combination `E_ab + E_ab' + E_a'b - E_a'b'`
    /// reaches `-2 sqrt(2)`.
    pub fn chsh_optimal() -> Self {
        Self {
            a: core::f64::consts::FRAC_PI_4,
            a_prime: 0.0,
            b: core::f64::consts::FRAC_PI_8,
            b_prime: 3.0 * core::f64::consts::FRAC_PI_8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a", self.a),
            ("a_prime", self.a_prime),
            ("b", self.b),
            ("b_prime", self.b_prime),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidSpec(alloc::format!("angle {name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Setting pair for index `k` in the fixed order
    /// `(a,b), (a,b'), (a',b), (a',b')`.
    pub fn pair(&self, k: usize) -> (f64, f64) {
        match k {
            0 => (self.a, self.b),
            1 => (self.a, self.b_prime),
            2 => (self.a_prime, self.b),
            3 => (self.a_prime, self.b_prime),
            _ => unreachable!("CHSH has four setting pairs"),
        }
    }
}

/// Signs applied to the four correlators when assembling `S`.
pub const CHSH_SIGNS: [f64; 4] = [1.0, 1.0, 1.0, -1.0];

/// `S` for an ideal correlator `E = -cos 2(theta_a - theta_b)`.
pub fn ideal_chsh_value(angles: &AngleSet) -> f64 {
    let mut s = 0.0;
    for k in 0..4 {
        let (ta, tb) = angles.pair(k);
        s += CHSH_SIGNS[k] * (-math::cos(2.0 * (ta - tb)));
    }
    s
}

/// Detector pair of one dual-port station.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPortStation {
    pub detector_plus: DetectorModel,
    pub detector_minus: DetectorModel,
}

impl DualPortStation {
    pub fn uniform(det: DetectorModel) -> Self {
        Self { detector_plus: det, detector_minus: det }
    }

    pub fn validate(&self) -> Result<()> {
        self.detector_plus.validate()?;
        self.detector_minus.validate()
    }
}

/// Full configuration of a CHSH run.
#[derive(Clone, Debug)]
pub struct ChshSetup {
    pub source: SourceTransform,
    pub vacuum: VacuumDistribution,
    pub station_a: DualPortStation,
    pub station_b: DualPortStation,
    pub angles: AngleSet,
    pub efficiency: Efficiency,
}

impl ChshSetup {
    pub fn validate(&self) -> Result<()> {
        self.station_a.validate()?;
        self.station_b.validate()?;
        self.angles.validate()
    }

    fn channel_detectors(&self) -> [DetectorModel; 4] {
        [
            self.station_a.detector_plus,
            self.station_a.detector_minus,
            self.station_b.detector_plus,
            self.station_b.detector_minus,
        ]
    }
}

fn channel_rho(det: &DetectorModel) -> f64 {
    match *det {
        DetectorModel::CommonModeCorrelated { rho, .. } => rho,
        _ => 0.0,
    }
}

/// Outcome tallies of one setting pair, indexed `[outcome_a][outcome_b]`
/// in the order plus, minus, null.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub trials: u64,
    pub counts: [[u64; 3]; 3],
}

impl PairCounts {
    pub fn coincidences(&self) -> u64 {
        self.counts[0][0] + self.counts[0][1] + self.counts[1][0] + self.counts[1][1]
    }

    /// Trials where station A produced a definite sign.
    pub fn definite_a(&self) -> u64 {
        self.counts[0].iter().sum::<u64>() + self.counts[1].iter().sum::<u64>()
    }

    /// Trials where station B produced a definite sign.
    pub fn definite_b(&self) -> u64 {
        (0..3).map(|i| self.counts[i][0] + self.counts[i][1]).sum()
    }

    /// Distribution of station A outcomes, ignoring B.
    pub fn marginal_a(&self) -> [u64; 3] {
        let mut out = [0u64; 3];
        for (i, row) in self.counts.iter().enumerate() {
            out[i] = row.iter().sum();
        }
        out
    }

    /// Distribution of station B outcomes, ignoring A.
    pub fn marginal_b(&self) -> [u64; 3] {
        let mut out = [0u64; 3];
        for row in self.counts.iter() {
            for (j, &c) in row.iter().enumerate() {
                out[j] += c;
            }
        }
        out
    }

    pub fn correlator(&self, policy: PostSelectionPolicy) -> Result<Estimate> {
        match policy {
            PostSelectionPolicy::CoincidenceOnly => {
                let n = self.coincidences();
                if n == 0 {
                    return Err(Error::InsufficientData(
                        "no coincidences for post-selected correlator".into(),
                    ));
                }
                let same = (self.counts[0][0] + self.counts[1][1]) as f64;
                let diff = (self.counts[0][1] + self.counts[1][0]) as f64;
                let e = (same - diff) / n as f64;
                let se = math::sqrt(((1.0 - e * e) / n as f64).max(0.0));
                Ok(Estimate { value: e, stderr: se })
            }
            PostSelectionPolicy::FullEnsembleAssignMinus => {
                if self.trials == 0 {
                    return Err(Error::InsufficientData("no trials recorded".into()));
                }
                let mut sum = 0.0;
                for (i, row) in self.counts.iter().enumerate() {
                    let va = if i == 0 { 1.0 } else { -1.0 };
                    for (j, &c) in row.iter().enumerate() {
                        let vb = if j == 0 { 1.0 } else { -1.0 };
                        sum += va * vb * c as f64;
                    }
                }
                let n = self.trials as f64;
                let e = sum / n;
                let se = math::sqrt(((1.0 - e * e) / n).max(0.0));
                Ok(Estimate { value: e, stderr: se })
            }
        }
    }

    fn absorb(&mut self, counts: &[u64]) {
        debug_assert_eq!(counts.len(), 9);
        for i in 0..3 {
            for j in 0..3 {
                self.counts[i][j] += counts[3 * i + j];
            }
        }
    }
}

fn resolve(plus: bool, minus: bool, i_plus: f64, i_minus: f64) -> Outcome {
    match (plus, minus) {
        (true, true) => {
            if i_plus > i_minus {
                Outcome::Plus
            } else if i_minus > i_plus {
                Outcome::Minus
            } else {
                Outcome::NoClick
            }
        }
        (true, false) => Outcome::Plus,
        (false, true) => Outcome::Minus,
        (false, false) => Outcome::NoClick,
    }
}

struct PairContext {
    setup: ChshSetup,
    setting_a: PolarizerSetting,
    setting_b: PolarizerSetting,
    detectors: [DetectorModel; 4],
    rhos: [f64; 4],
    any_common_mode: bool,
}

impl PairContext {
    fn new(setup: &ChshSetup, theta_a: f64, theta_b: f64) -> Result<Self> {
        let detectors = setup.channel_detectors();
        let rhos = [
            channel_rho(&detectors[0]),
            channel_rho(&detectors[1]),
            channel_rho(&detectors[2]),
            channel_rho(&detectors[3]),
        ];
        Ok(Self {
            setup: setup.clone(),
            setting_a: PolarizerSetting::new(theta_a)?,
            setting_b: PolarizerSetting::new(theta_b)?,
            detectors,
            rhos,
            any_common_mode: rhos.iter().any(|&r| r != 0.0),
        })
    }

    /// Simulates one trial: intensities, clicks, thinning, port resolution.
    fn trial(&self, stream: &RandomStream) -> (Outcome, Outcome, Detections) {
        let alpha = sample_vacuum(&self.setup.vacuum, stream);
        let fields = propagate(&self.setup.source, &alpha).expect("mode count fixed by distribution");
        let intensities = [
            analyze(&fields, Beam::A, self.setting_a).norm_sqr(),
            analyze(&fields, Beam::A, self.setting_a.orthogonal()).norm_sqr(),
            analyze(&fields, Beam::B, self.setting_b).norm_sqr(),
            analyze(&fields, Beam::B, self.setting_b.orthogonal()).norm_sqr(),
        ];

        let mut raw = Detections::none();
        if self.any_common_mode {
            // One-factor coupling: every common-mode detector mixes the
            // shared draw into its own noise, so clicks correlate across
            // channels while each marginal stays exactly f(I).
            let z0: f64 = self.setup_common_draw(stream);
            for ch in 0..4 {
                let f = self.detectors[ch]
                    .detection_probability(intensities[ch])
                    .expect("intensity is non-negative");
                let zc: f64 = stream.rng(StreamDomain::DetectorNoise(ch as u8)).sample(StandardNormal);
                let rho = self.rhos[ch];
                let w = math::sqrt(rho) * z0 + math::sqrt(1.0 - rho) * zc;
                if math::normal_cdf(w) < f {
                    raw.set(ch);
                }
            }
        } else {
            for ch in 0..4 {
                let f = self.detectors[ch]
                    .detection_probability(intensities[ch])
                    .expect("intensity is non-negative");
                let u: f64 = stream.rng(StreamDomain::DetectorNoise(ch as u8)).gen();
                if u < f {
                    raw.set(ch);
                }
            }
        }

        let kept = if self.setup.efficiency.value() < 1.0 {
            let us: [f64; 4] = thinning_uniforms(stream);
            thin(raw, self.setup.efficiency, &us)
        } else {
            raw
        };

        let out_a = resolve(
            kept.fired(CH_A_PLUS),
            kept.fired(CH_A_MINUS),
            intensities[CH_A_PLUS],
            intensities[CH_A_MINUS],
        );
        let out_b = resolve(
            kept.fired(CH_B_PLUS),
            kept.fired(CH_B_MINUS),
            intensities[CH_B_PLUS],
            intensities[CH_B_MINUS],
        );
        (out_a, out_b, kept)
    }

    fn setup_common_draw(&self, stream: &RandomStream) -> f64 {
        stream.rng(StreamDomain::CommonMode).sample(StandardNormal)
    }
}

fn eval_pair_chunk(ctx: &PairContext, stream: &RandomStream, range: TrialRange, keep_records: bool) -> ChunkOutput {
    let mut counts = [0u64; 9];
    let mut bytes = Vec::new();
    if keep_records {
        bytes.reserve(range.len() as usize * crate::counting::TrialRecord::ENCODED_LEN);
    }
    for t in range.iter() {
        let (oa, ob, detections) = ctx.trial(&stream.at_trial(t));
        counts[3 * oa.index() + ob.index()] += 1;
        if keep_records {
            crate::counting::TrialRecord { trial_index: t, detections }.encode(&mut bytes);
        }
    }
    ChunkOutput { sums: Vec::new(), counts: counts.to_vec(), bytes }
}

fn run_pair_impl(
    setup: &ChshSetup,
    theta_a: f64,
    theta_b: f64,
    seed: u64,
    trials: u64,
    mapper: &dyn TrialMapper,
    keep_records: bool,
) -> Result<(PairCounts, Vec<u8>)> {
    setup.validate()?;
    if trials == 0 {
        return Err(Error::InsufficientData("pair run needs at least one trial".into()));
    }
    let ctx = PairContext::new(setup, theta_a, theta_b)?;
    let stream = RandomStream::new(seed);
    let ranges = chunk_ranges(trials);
    let outputs = mapper.map_chunks(&ranges, &|r| eval_pair_chunk(&ctx, &stream, r, keep_records));
    let mut pair = PairCounts { trials, ..PairCounts::default() };
    let mut bytes = Vec::new();
    for out in &outputs {
        pair.absorb(&out.counts);
        bytes.extend_from_slice(&out.bytes);
    }
    Ok((pair, bytes))
}

/// Runs one setting pair and returns its outcome tallies.
pub fn run_pair(
    setup: &ChshSetup,
    theta_a: f64,
    theta_b: f64,
    seed: u64,
    trials: u64,
    mapper: &dyn TrialMapper,
) -> Result<PairCounts> {
    run_pair_impl(setup, theta_a, theta_b, seed, trials, mapper, false).map(|(p, _)| p)
}

/// Runs one setting pair and additionally returns the per-trial click
/// records (bits 0..4 are the aligned/orthogonal ports of stations A, B).
pub fn run_pair_with_log(
    setup: &ChshSetup,
    theta_a: f64,
    theta_b: f64,
    seed: u64,
    trials: u64,
    mapper: &dyn TrialMapper,
) -> Result<(PairCounts, Vec<u8>)> {
    run_pair_impl(setup, theta_a, theta_b, seed, trials, mapper, true)
}

/// CHSH estimate assembled from the four setting pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub policy: PostSelectionPolicy,
    /// Correlators in pair order `(a,b), (a,b'), (a',b), (a',b')`.
    pub correlators: [Estimate; 4],
    /// `E_ab + E_ab' + E_a'b - E_a'b'`.
    pub s: Estimate,
    pub pairs: [PairCounts; 4],
}

impl ChshEstimate {
    fn assemble(policy: PostSelectionPolicy, pairs: [PairCounts; 4]) -> Result<Self> {
        let mut correlators = [Estimate { value: 0.0, stderr: 0.0 }; 4];
        let mut s = 0.0;
        let mut var = 0.0;
        for k in 0..4 {
            let e = pairs[k].correlator(policy)?;
            correlators[k] = e;
            s += CHSH_SIGNS[k] * e.value;
            var += e.stderr * e.stderr;
        }
        Ok(Self { policy, correlators, s: Estimate { value: s, stderr: math::sqrt(var) }, pairs })
    }
}

/// Runs all four setting pairs (`trials_per_pair` each, independent seeds
/// derived per pair) and assembles the CHSH statistic under `policy`.
pub fn run_chsh(
    setup: &ChshSetup,
    policy: PostSelectionPolicy,
    seed: u64,
    trials_per_pair: u64,
    mapper: &dyn TrialMapper,
) -> Result<ChshEstimate> {
    let mut pairs = [PairCounts::default(); 4];
    for (k, slot) in pairs.iter_mut().enumerate() {
        let (ta, tb) = setup.angles.pair(k);
        *slot = run_pair(setup, ta, tb, derive_seed(seed, k as u64), trials_per_pair, mapper)?;
    }
    ChshEstimate::assemble(policy, pairs)
}

/// One row of an efficiency sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub estimate: ChshEstimate,
}

/// Evaluates the CHSH statistic across efficiencies. All rows reuse the
/// same seed, so the thinning draws are shared and raising `mu` can only
/// add clicks trial by trial.
pub fn efficiency_sweep(
    setup: &ChshSetup,
    policy: PostSelectionPolicy,
    mus: &[f64],
    seed: u64,
    trials_per_pair: u64,
    mapper: &dyn TrialMapper,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(mus.len());
    for &mu in mus {
        let mut cfg = setup.clone();
        cfg.efficiency = Efficiency::new(mu)?;
        let estimate = run_chsh(&cfg, policy, seed, trials_per_pair, mapper)?;
        rows.push(SweepRow { mu, estimate });
    }
    Ok(rows)
}

/// Result of the critical-efficiency bisection.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalMuResult {
    /// `|S|` crosses the threshold inside the bracket; `mu` locates the
    /// crossing to the requested tolerance.
    Crossing { mu: f64, s_at_mu: Estimate },
    /// `|S| - threshold` has the same sign at both ends of the bracket.
    NoCrossing { s_lo: Estimate, s_hi: Estimate },
}

/// Default resolution of the critical-efficiency search, in `S` units.
pub const DEFAULT_S_TOL: f64 = 0.02;

/// Bisects on `mu` for the point where `|S(mu)|` crosses `threshold`,
/// stopping once `|S| - threshold` at the midpoint is within `s_tol`
/// (Monte Carlo noise makes finer targets meaningless) or the bracket
/// shrinks below `mu_tol`. The evaluator is expected to be deterministic in
/// `mu`; sweeps built on a fixed seed are, thanks to the shared thinning
/// draws.
pub fn find_critical_mu(
    mut s_of_mu: impl FnMut(f64) -> Result<Estimate>,
    mu_lo: f64,
    mu_hi: f64,
    threshold: f64,
    s_tol: f64,
    mu_tol: f64,
) -> Result<CriticalMuResult> {
    if !(0.0..=1.0).contains(&mu_lo) || !(0.0..=1.0).contains(&mu_hi) || mu_lo >= mu_hi {
        return Err(Error::InvalidSpec(alloc::format!(
            "efficiency bracket [{mu_lo}, {mu_hi}] must be increasing within [0, 1]"
        )));
    }
    if !(s_tol > 0.0) || !(mu_tol > 0.0) || !(threshold > 0.0) {
        return Err(Error::InvalidSpec("tolerances and threshold must be positive".into()));
    }
    let s_lo = s_of_mu(mu_lo)?;
    let s_hi = s_of_mu(mu_hi)?;
    let g_lo = math::fabs(s_lo.value) - threshold;
    let g_hi = math::fabs(s_hi.value) - threshold;
    if g_lo == 0.0 {
        return Ok(CriticalMuResult::Crossing { mu: mu_lo, s_at_mu: s_lo });
    }
    if g_hi == 0.0 {
        return Ok(CriticalMuResult::Crossing { mu: mu_hi, s_at_mu: s_hi });
    }
    if (g_lo > 0.0) == (g_hi > 0.0) {
        return Ok(CriticalMuResult::NoCrossing { s_lo, s_hi });
    }
    let mut lo = mu_lo;
    let mut hi = mu_hi;
    let mut sign_lo = g_lo > 0.0;
    let mut best_mu = if g_lo.abs() < g_hi.abs() { mu_lo } else { mu_hi };
    let mut best = if g_lo.abs() < g_hi.abs() { s_lo } else { s_hi };
    for _ in 0..64 {
        if hi - lo <= mu_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let s_mid = s_of_mu(mid)?;
        let g_mid = math::fabs(s_mid.value) - threshold;
        best = s_mid;
        best_mu = mid;
        if math::fabs(g_mid) <= s_tol {
            return Ok(CriticalMuResult::Crossing { mu: mid, s_at_mu: s_mid });
        }
        if (g_mid > 0.0) == sign_lo {
            lo = mid;
            sign_lo = g_mid > 0.0;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalMuResult::Crossing { mu: best_mu, s_at_mu: best })
}
