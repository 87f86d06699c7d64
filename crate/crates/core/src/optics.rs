//! Source transform, polarizers, and detector response models.
//!
//! The parametric source acts on the four vacuum source modes by a
//! Bogoliubov transformation with amplification `C = cosh(gain)` and
//! conversion `S = sinh(gain)`; `C^2 - S^2 = 1` keeps the transformation
//! canonical. The correlated preset couples the horizontal output of one
//! beam to the vertical output of the other with opposite phase signs, the
//! two-mode squeezing pattern that imitates a polarization singlet: the
//! phase-sensitive cross moment of the analyzed fields depends on the
//! analyzer angles only through `sin(theta_b - theta_a)`.
//!
//! Detectors respond to the intensity behind an analyzer. Three response
//! families are modelled (hard threshold, linear ramp, linear ramp with
//! cross-channel common-mode noise) plus a degenerate constant responder
//! used for calibration and tests.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::vacuum::{HiddenVariableVector, SOURCE_MODES};

/// Correlation structure produced by the source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePreset {
    /// Two-mode squeezing that pairs `a1 <-> b1` and `a2 <-> b2` with
    /// opposite signs; beams become anti-correlated in polarization like a
    /// singlet pair.
    SingletLike,
    /// Pass-through: beams carry independent vacuum noise.
    Uncorrelated,
}

/// Bogoliubov source transformation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceTransform {
    preset: SourcePreset,
    gain: f64,
    amp_c: f64,
    amp_s: f64,
}

impl SourceTransform {
    pub fn singlet_like(gain: f64) -> Result<Self> {
        if !gain.is_finite() || gain < 0.0 {
            return Err(Error::InvalidSpec(alloc::format!(
                "source gain must be finite and non-negative, got {gain}"
            )));
        }
        Ok(Self {
            preset: SourcePreset::SingletLike,
            gain,
            amp_c: math::cosh(gain),
            amp_s: math::sinh(gain),
        })
    }

    /// Identity transform; equals the correlated preset at zero gain.
    pub fn uncorrelated() -> Self {
        Self { preset: SourcePreset::Uncorrelated, gain: 0.0, amp_c: 1.0, amp_s: 0.0 }
    }

    pub fn preset(&self) -> SourcePreset {
        self.preset
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// `cosh(gain)`.
    pub fn amp_c(&self) -> f64 {
        self.amp_c
    }

    /// `sinh(gain)`.
    pub fn amp_s(&self) -> f64 {
        self.amp_s
    }

    /// Deviation of `C^2 - S^2` from 1; zero for a canonical transform.
    pub fn canonical_defect(&self) -> f64 {
        self.amp_c * self.amp_c - self.amp_s * self.amp_s - 1.0
    }
}

/// Output field amplitudes of the source, one horizontal and one vertical
/// component per beam.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldAmplitudes {
    pub a_h: Complex64,
    pub a_v: Complex64,
    pub b_h: Complex64,
    pub b_v: Complex64,
}

/// One of the two spatially separated output beams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beam {
    A,
    B,
}

/// Applies the source transformation to the sampled vacuum modes
/// `(a1, a2, b1, b2)` (the first four entries of `alpha`).
pub fn propagate(source: &SourceTransform, alpha: &HiddenVariableVector) -> Result<FieldAmplitudes> {
    if alpha.len() < SOURCE_MODES {
        return Err(Error::Dimension { expected: SOURCE_MODES, got: alpha.len() });
    }
    let m = alpha.amplitudes();
    let (a1, a2, b1, b2) = (m[0], m[1], m[2], m[3]);
    match source.preset {
        SourcePreset::Uncorrelated => Ok(FieldAmplitudes { a_h: a1, a_v: a2, b_v: b1, b_h: b2 }),
        SourcePreset::SingletLike => {
            let c = source.amp_c;
            let s = source.amp_s;
            Ok(FieldAmplitudes {
                a_h: c * a1 + s * b1.conj(),
                b_v: c * b1 + s * a1.conj(),
                a_v: c * a2 - s * b2.conj(),
                b_h: c * b2 - s * a2.conj(),
            })
        }
    }
}

/// Linear polarizer orientation, folded into `[0, pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizerSetting {
    angle: f64,
}

impl PolarizerSetting {
    pub fn new(angle_rad: f64) -> Result<Self> {
        if !angle_rad.is_finite() {
            return Err(Error::InvalidSpec(alloc::format!("polarizer angle must be finite, got {angle_rad}")));
        }
        Ok(Self { angle: math::rem_euclid(angle_rad, math::PI) })
    }

    pub fn from_degrees(deg: f64) -> Result<Self> {
        Self::new(deg * math::PI / 180.0)
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// The rejected-port orientation, rotated by a quarter turn.
    pub fn orthogonal(&self) -> Self {
        Self { angle: math::rem_euclid(self.angle + math::PI / 2.0, math::PI) }
    }
}

/// Projects one beam onto the analyzer axis:
/// `E = E_H cos(theta) + E_V sin(theta)`.
pub fn analyze(fields: &FieldAmplitudes, beam: Beam, setting: PolarizerSetting) -> Complex64 {
    let (h, v) = match beam {
        Beam::A => (fields.a_h, fields.a_v),
        Beam::B => (fields.b_h, fields.b_v),
    };
    let t = setting.angle;
    h * math::cos(t) + v * math::sin(t)
}

/// Detector response model mapping intensity to detection probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DetectorModel {
    /// Fires exactly when `intensity - baseline > threshold`.
    DeterministicThreshold { baseline: f64, threshold: f64 },
    /// Linear ramp: `clamp((intensity - baseline - threshold) / saturation, 0, 1)`.
    ProbabilisticLinear { baseline: f64, threshold: f64, saturation: f64 },
    /// Linear ramp whose internal noise is correlated across channels with
    /// coefficient `rho`; pairwise joint detection follows
    /// `f_i f_j + rho sqrt(f_i (1 - f_i) f_j (1 - f_j))` clamped to the
    /// Frechet bounds.
    CommonModeCorrelated { baseline: f64, threshold: f64, saturation: f64, rho: f64 },
    /// Degenerate responder that fires with fixed probability regardless of
    /// intensity; calibration and test use.
    Constant { value: f64 },
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, nonneg: bool| -> Result<()> {
            if !v.is_finite() {
                return Err(Error::InvalidSpec(alloc::format!("detector {name} must be finite, got {v}")));
            }
            if nonneg && v < 0.0 {
                return Err(Error::InvalidSpec(alloc::format!("detector {name} must be non-negative, got {v}")));
            }
            Ok(())
        };
        match *self {
            DetectorModel::DeterministicThreshold { baseline, threshold } => {
                check("baseline", baseline, true)?;
                check("threshold", threshold, true)
            }
            DetectorModel::ProbabilisticLinear { baseline, threshold, saturation } => {
                check("baseline", baseline, true)?;
                check("threshold", threshold, true)?;
                check("saturation", saturation, true)?;
                if saturation == 0.0 {
                    return Err(Error::InvalidSpec("detector saturation must be positive".into()));
                }
                Ok(())
            }
            DetectorModel::CommonModeCorrelated { baseline, threshold, saturation, rho } => {
                check("baseline", baseline, true)?;
                check("threshold", threshold, true)?;
                check("saturation", saturation, true)?;
                if saturation == 0.0 {
                    return Err(Error::InvalidSpec("detector saturation must be positive".into()));
                }
                check("rho", rho, false)?;
                if !(-1.0..=1.0).contains(&rho) {
                    return Err(Error::InvalidSpec(alloc::format!("detector rho must lie in [-1, 1], got {rho}")));
                }
                Ok(())
            }
            DetectorModel::Constant { value } => {
                check("value", value, true)?;
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::InvalidSpec(alloc::format!("constant detector value must lie in [0, 1], got {value}")));
                }
                Ok(())
            }
        }
    }

    /// Detection probability given the intensity at the detector input.
    pub fn detection_probability(&self, intensity: f64) -> Result<f64> {
        if !(intensity >= 0.0) {
            return Err(Error::Domain(alloc::format!("intensity must be non-negative, got {intensity}")));
        }
        Ok(match *self {
            DetectorModel::DeterministicThreshold { baseline, threshold } => {
                if intensity - baseline > threshold {
                    1.0
                } else {
                    0.0
                }
            }
            DetectorModel::ProbabilisticLinear { baseline, threshold, saturation }
            | DetectorModel::CommonModeCorrelated { baseline, threshold, saturation, .. } => {
                math::clamp((intensity - baseline - threshold) / saturation, 0.0, 1.0)
            }
            DetectorModel::Constant { value } => value,
        })
    }

    /// Intensity breakpoints where the response is non-smooth; used by the
    /// quadrature oracle to split integration panels.
    pub(crate) fn breakpoints(&self) -> ([f64; 2], usize) {
        match *self {
            DetectorModel::DeterministicThreshold { baseline, threshold } => ([baseline + threshold, 0.0], 1),
            DetectorModel::ProbabilisticLinear { baseline, threshold, saturation }
            | DetectorModel::CommonModeCorrelated { baseline, threshold, saturation, .. } => {
                ([baseline + threshold, baseline + threshold + saturation], 2)
            }
            DetectorModel::Constant { .. } => ([0.0, 0.0], 0),
        }
    }

    fn common_mode_rho(&self) -> Option<f64> {
        match *self {
            DetectorModel::CommonModeCorrelated { rho, .. } => Some(rho),
            _ => None,
        }
    }
}

/// Correlation coefficient applied to a detector pair: `rho` when both
/// detectors carry common-mode noise, zero otherwise.
pub fn pair_rho(det_i: &DetectorModel, det_j: &DetectorModel) -> f64 {
    match (det_i.common_mode_rho(), det_j.common_mode_rho()) {
        (Some(ri), Some(_)) => ri,
        _ => 0.0,
    }
}

/// Joint detection probability of two detectors given their input
/// intensities. Detectors with independent internal randomness factor into
/// the product of single-channel probabilities; common-mode pairs add the
/// `rho` covariance term and are clamped to the Frechet bounds so the result
/// always describes a valid joint Bernoulli law.
pub fn joint_detection_probability(
    det_i: &DetectorModel,
    det_j: &DetectorModel,
    intensity_i: f64,
    intensity_j: f64,
) -> Result<f64> {
    let fi = det_i.detection_probability(intensity_i)?;
    let fj = det_j.detection_probability(intensity_j)?;
    Ok(joint_from_singles(fi, fj, pair_rho(det_i, det_j)))
}

/// Joint Bernoulli probability from single-channel probabilities and a
/// common-mode coefficient.
pub fn joint_from_singles(fi: f64, fj: f64, rho: f64) -> f64 {
    let product = fi * fj;
    if rho == 0.0 {
        // Independent channels factor identically, not merely up to the
        // rounding of the bound arithmetic below.
        return product;
    }
    let hi = fi.min(fj);
    let lo = (fi + fj - 1.0).max(0.0).min(hi);
    let gamma = product + rho * math::sqrt(fi * (1.0 - fi) * fj * (1.0 - fj));
    math::clamp(gamma, lo, hi)
}

/// Exact second moments of the analyzed fields `E_A`, `E_B`.
///
/// Both beams are marginally circular; the full joint law of the two fields
/// is fixed by the mean intensities and the two cross moments. For the
/// correlated preset the phase-insensitive cross moment `<E_A E_B*>`
/// vanishes identically and the phase-sensitive one is
/// `sigma0_sq sinh(2 gain) sin(theta_b - theta_a)`: the joint statistics
/// depend on the analyzer angles only through the difference angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldCovariance {
    /// `<|E_A|^2>`.
    pub intensity_a: f64,
    /// `<|E_B|^2>`.
    pub intensity_b: f64,
    /// `<E_A conj(E_B)>`.
    pub cross_hermitian: Complex64,
    /// `<E_A E_B>`.
    pub cross_anomalous: Complex64,
}

impl FieldCovariance {
    /// Squared magnitude of all cross correlations,
    /// `|<E_A E_B*>|^2 + |<E_A E_B>|^2`.
    pub fn intensity_covariance(&self) -> f64 {
        self.cross_hermitian.norm_sqr() + self.cross_anomalous.norm_sqr()
    }

    /// Normalized intensity correlation in `[0, 1)`:
    /// `Cov(I_A, I_B) / (<I_A> <I_B>)`.
    pub fn correlation_lambda(&self) -> f64 {
        self.intensity_covariance() / (self.intensity_a * self.intensity_b)
    }

    /// Fourth moment `<I_A I_B>` from the Gaussian moment factorization:
    /// `<I_A><I_B> + |<E_A E_B*>|^2 + |<E_A E_B>|^2`.
    pub fn intensity_product_moment(&self) -> f64 {
        self.intensity_a * self.intensity_b + self.intensity_covariance()
    }
}

/// Linear form of an analyzed field in the source modes:
/// `E = sum_k direct[k] alpha_k + conj_[k] conj(alpha_k)`.
struct FieldForm {
    direct: [Complex64; SOURCE_MODES],
    conj: [Complex64; SOURCE_MODES],
}

fn field_form(source: &SourceTransform, beam: Beam, setting: PolarizerSetting) -> FieldForm {
    let zero = Complex64::new(0.0, 0.0);
    let mut direct = [zero; SOURCE_MODES];
    let mut conj = [zero; SOURCE_MODES];
    let ct = Complex64::new(math::cos(setting.angle), 0.0);
    let st = Complex64::new(math::sin(setting.angle), 0.0);
    let c = Complex64::new(source.amp_c, 0.0);
    let s = Complex64::new(source.amp_s, 0.0);
    match (source.preset, beam) {
        (SourcePreset::Uncorrelated, Beam::A) => {
            direct[0] = ct;
            direct[1] = st;
        }
        (SourcePreset::Uncorrelated, Beam::B) => {
            direct[3] = ct;
            direct[2] = st;
        }
        (SourcePreset::SingletLike, Beam::A) => {
            // E_A = (C a1 + S b1*) cos + (C a2 - S b2*) sin
            direct[0] = c * ct;
            conj[2] = s * ct;
            direct[1] = c * st;
            conj[3] = -s * st;
        }
        (SourcePreset::SingletLike, Beam::B) => {
            // E_B = (C b2 - S a2*) cos + (C b1 + S a1*) sin
            direct[3] = c * ct;
            conj[1] = -s * ct;
            direct[2] = c * st;
            conj[0] = s * st;
        }
    }
    FieldForm { direct, conj }
}

/// Computes the exact joint second moments of the analyzed fields for the
/// given source and analyzer settings, with `<|alpha_k|^2> = sigma0_sq`.
pub fn analytic_covariance(
    source: &SourceTransform,
    setting_a: PolarizerSetting,
    setting_b: PolarizerSetting,
    sigma0_sq: f64,
) -> FieldCovariance {
    let fa = field_form(source, Beam::A, setting_a);
    let fb = field_form(source, Beam::B, setting_b);
    let mut waa = 0.0;
    let mut wbb = 0.0;
    let mut herm = Complex64::new(0.0, 0.0);
    let mut anom = Complex64::new(0.0, 0.0);
    for k in 0..SOURCE_MODES {
        waa += fa.direct[k].norm_sqr() + fa.conj[k].norm_sqr();
        wbb += fb.direct[k].norm_sqr() + fb.conj[k].norm_sqr();
        // <alpha_j alpha_k*> = sigma delta_jk, <alpha alpha> = 0:
        herm += fa.direct[k] * fb.direct[k].conj() + fa.conj[k] * fb.conj[k].conj();
        anom += fa.direct[k] * fb.conj[k] + fa.conj[k] * fb.direct[k];
    }
    FieldCovariance {
        intensity_a: sigma0_sq * waa,
        intensity_b: sigma0_sq * wbb,
        cross_hermitian: sigma0_sq * herm,
        cross_anomalous: sigma0_sq * anom,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use crate::vacuum::{sample_vacuum, ModeSet, VacuumDistribution};
    use alloc::vec;
    use proptest::prelude::*;

    fn hv(values: [(f64, f64); 4]) -> HiddenVariableVector {
        HiddenVariableVector::new(values.iter().map(|&(r, i)| Complex64::new(r, i)).collect())
    }

    #[test]
    fn zero_gain_is_identity() {
        let src = SourceTransform::singlet_like(0.0).unwrap();
        let alpha = hv([(1.0, 0.0), (0.0, 2.0), (-1.0, 0.0), (3.0, 0.0)]);
        let f = propagate(&src, &alpha).unwrap();
        assert_eq!(f.a_h, Complex64::new(1.0, 0.0));
        assert_eq!(f.a_v, Complex64::new(0.0, 2.0));
        assert_eq!(f.b_v, Complex64::new(-1.0, 0.0));
        assert_eq!(f.b_h, Complex64::new(3.0, 0.0));
    }

    #[test]
    fn zero_input_stays_zero() {
        let src = SourceTransform::singlet_like(0.7).unwrap();
        let alpha = hv([(0.0, 0.0); 4]);
        let f = propagate(&src, &alpha).unwrap();
        for v in [f.a_h, f.a_v, f.b_h, f.b_v] {
            assert_eq!(v, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn propagate_needs_four_modes() {
        let src = SourceTransform::uncorrelated();
        let alpha = HiddenVariableVector::new(vec![Complex64::new(1.0, 0.0); 3]);
        assert!(matches!(propagate(&src, &alpha), Err(Error::Dimension { .. })));
    }

    #[test]
    fn transform_is_canonical_over_gain_range() {
        for k in 0..=60 {
            let g = k as f64 * 0.02;
            let src = SourceTransform::singlet_like(g).unwrap();
            assert!(
                math::fabs(src.canonical_defect()) < 1e-12,
                "gain {g}: defect {}",
                src.canonical_defect()
            );
        }
    }

    #[test]
    fn output_intensity_matches_covariance() {
        let gain = 0.8;
        let sigma = 0.5;
        let src = SourceTransform::singlet_like(gain).unwrap();
        let dist = VacuumDistribution::new(ModeSet::source_only(), sigma).unwrap();
        let stream = RandomStream::new(7);
        let m = 200_000u64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for t in 0..m {
            let f = propagate(&src, &sample_vacuum(&dist, &stream.at_trial(t))).unwrap();
            let i = f.a_h.norm_sqr();
            sum += i;
            sum_sq += i * i;
        }
        let (mean, se) = math::mean_and_stderr(sum, sum_sq, m);
        let expected = sigma * (src.amp_c() * src.amp_c() + src.amp_s() * src.amp_s());
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean}, expected {expected}, se {se}"
        );
    }

    #[test]
    fn analyze_selects_components() {
        let f = FieldAmplitudes {
            a_h: Complex64::new(1.0, 0.0),
            a_v: Complex64::new(0.0, 1.0),
            b_h: Complex64::new(2.0, 0.0),
            b_v: Complex64::new(0.0, -2.0),
        };
        let at0 = analyze(&f, Beam::A, PolarizerSetting::new(0.0).unwrap());
        assert!((at0 - f.a_h).norm() < 1e-15);
        let at90 = analyze(&f, Beam::A, PolarizerSetting::new(math::PI / 2.0).unwrap());
        assert!((at90 - f.a_v).norm() < 1e-12);
        let b45 = analyze(&f, Beam::B, PolarizerSetting::new(math::PI / 4.0).unwrap());
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert!((b45 - (f.b_h * r + f.b_v * r)).norm() < 1e-12);
    }

    #[test]
    fn polarizer_angle_folds_mod_pi() {
        let s = PolarizerSetting::new(math::PI * 1.25).unwrap();
        assert!((s.angle() - math::PI * 0.25).abs() < 1e-12);
        let o = s.orthogonal();
        assert!((o.angle() - math::PI * 0.75).abs() < 1e-12);
        assert!(PolarizerSetting::new(f64::NAN).is_err());
    }

    #[test]
    fn threshold_response_basics() {
        let det = DetectorModel::DeterministicThreshold { baseline: 0.5, threshold: 1.0 };
        assert_eq!(det.detection_probability(1.6).unwrap(), 1.0);
        assert_eq!(det.detection_probability(1.5).unwrap(), 0.0);
        assert_eq!(det.detection_probability(0.0).unwrap(), 0.0);
        assert!(det.detection_probability(-0.1).is_err());
    }

    #[test]
    fn ramp_response_basics() {
        let det = DetectorModel::ProbabilisticLinear { baseline: 0.0, threshold: 1.0, saturation: 2.0 };
        assert_eq!(det.detection_probability(2.0).unwrap(), 0.5);
        assert_eq!(det.detection_probability(0.5).unwrap(), 0.0);
        assert_eq!(det.detection_probability(10.0).unwrap(), 1.0);
    }

    #[test]
    fn exceedance_follows_exponential_law() {
        // Circular Gaussian field: P(I > c) = exp(-c / <I>). With
        // <I> = 1 and threshold c = 1 the rate is 1/e.
        let sigma = 0.5;
        let dist = VacuumDistribution::new(ModeSet::source_only(), sigma).unwrap();
        let src = SourceTransform::singlet_like(0.0).unwrap();
        // <I> at gain 0 is sigma = 0.5; scale threshold accordingly: use
        // c = <I> so the law gives exp(-1).
        let det = DetectorModel::DeterministicThreshold { baseline: 0.0, threshold: sigma };
        let stream = RandomStream::new(99);
        let m = 400_000u64;
        let mut fired = 0u64;
        for t in 0..m {
            let f = propagate(&src, &sample_vacuum(&dist, &stream.at_trial(t))).unwrap();
            if det.detection_probability(f.a_h.norm_sqr()).unwrap() > 0.5 {
                fired += 1;
            }
        }
        let p = fired as f64 / m as f64;
        let expected = math::exp(-1.0);
        let se = math::sqrt(expected * (1.0 - expected) / m as f64);
        assert!((p - expected).abs() < 3.0 * se, "p {p}, expected {expected}");
    }

    #[test]
    fn joint_probability_examples() {
        let pa = DetectorModel::Constant { value: 0.5 };
        let pb = DetectorModel::Constant { value: 0.5 };
        assert_eq!(joint_detection_probability(&pa, &pb, 1.0, 1.0).unwrap(), 0.25);

        // Common-mode rho = 1 with equal ramps saturates at min(f, f) = f.
        let cm = DetectorModel::CommonModeCorrelated { baseline: 0.0, threshold: 0.0, saturation: 2.0, rho: 1.0 };
        let g = joint_detection_probability(&cm, &cm, 1.0, 1.0).unwrap();
        assert_eq!(g, 0.5);

        // f = 1 forces the joint to the other marginal regardless of rho.
        let sat = DetectorModel::CommonModeCorrelated { baseline: 0.0, threshold: 0.0, saturation: 1.0, rho: -0.9 };
        let g2 = joint_detection_probability(&sat, &sat, 5.0, 0.3).unwrap();
        assert!((g2 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn covariance_at_zero_gain() {
        let src = SourceTransform::singlet_like(0.0).unwrap();
        let cov = analytic_covariance(
            &src,
            PolarizerSetting::new(0.3).unwrap(),
            PolarizerSetting::new(1.1).unwrap(),
            0.5,
        );
        assert!((cov.intensity_a - 0.5).abs() < 1e-15);
        assert!((cov.intensity_b - 0.5).abs() < 1e-15);
        assert!(cov.cross_hermitian.norm() < 1e-15);
        assert!(cov.cross_anomalous.norm() < 1e-15);
    }

    #[test]
    fn covariance_matches_closed_form() {
        let gain = 0.6;
        let sigma = 0.5;
        let src = SourceTransform::singlet_like(gain).unwrap();
        for (ta, tb) in [(0.0, 0.0), (0.0, 0.7), (0.4, 1.9), (1.2, 0.1)] {
            let cov = analytic_covariance(
                &src,
                PolarizerSetting::new(ta).unwrap(),
                PolarizerSetting::new(tb).unwrap(),
                sigma,
            );
            let w = sigma * math::cosh(2.0 * gain);
            let v = sigma * math::sinh(2.0 * gain) * math::sin(tb - ta);
            assert!((cov.intensity_a - w).abs() < 1e-12);
            assert!((cov.intensity_b - w).abs() < 1e-12);
            assert!(cov.cross_hermitian.norm() < 1e-12);
            assert!((cov.cross_anomalous.re - v).abs() < 1e-12, "ta={ta} tb={tb}");
            assert!(cov.cross_anomalous.im.abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_depends_on_angle_difference_only() {
        let src = SourceTransform::singlet_like(0.9).unwrap();
        let delta = 0.37;
        let base = analytic_covariance(
            &src,
            PolarizerSetting::new(0.0).unwrap(),
            PolarizerSetting::new(delta).unwrap(),
            0.5,
        );
        for shift in [0.2, 0.9, 2.5] {
            let cov = analytic_covariance(
                &src,
                PolarizerSetting::new(shift).unwrap(),
                PolarizerSetting::new(shift + delta).unwrap(),
                0.5,
            );
            assert!((cov.intensity_covariance() - base.intensity_covariance()).abs() < 1e-12);
        }
    }

    #[test]
    fn field_form_agrees_with_propagate() {
        let src = SourceTransform::singlet_like(0.75).unwrap();
        let dist = VacuumDistribution::source_default();
        let setting = PolarizerSetting::new(0.42).unwrap();
        for t in 0..50 {
            let alpha = sample_vacuum(&dist, &RandomStream::new(3).at_trial(t));
            let via_fields = analyze(&propagate(&src, &alpha).unwrap(), Beam::B, setting);
            let form = field_form(&src, Beam::B, setting);
            let mut via_form = Complex64::new(0.0, 0.0);
            for k in 0..SOURCE_MODES {
                via_form += form.direct[k] * alpha.amplitudes()[k]
                    + form.conj[k] * alpha.amplitudes()[k].conj();
            }
            assert!((via_fields - via_form).norm() < 1e-12);
        }
    }

    #[test]
    fn second_moments_match_monte_carlo() {
        let gain = 0.5;
        let sigma = 0.5;
        let src = SourceTransform::singlet_like(gain).unwrap();
        let dist = VacuumDistribution::new(ModeSet::source_only(), sigma).unwrap();
        let sa = PolarizerSetting::new(0.2).unwrap();
        let sb = PolarizerSetting::new(1.5).unwrap();
        let cov = analytic_covariance(&src, sa, sb, sigma);
        let stream = RandomStream::new(11);
        let m = 300_000u64;
        let mut anom = Complex64::new(0.0, 0.0);
        let mut herm = Complex64::new(0.0, 0.0);
        let mut prod_sum = 0.0;
        let mut prod_sq = 0.0;
        for t in 0..m {
            let f = propagate(&src, &sample_vacuum(&dist, &stream.at_trial(t))).unwrap();
            let ea = analyze(&f, Beam::A, sa);
            let eb = analyze(&f, Beam::B, sb);
            anom += ea * eb;
            herm += ea * eb.conj();
            let p = ea.norm_sqr() * eb.norm_sqr();
            prod_sum += p;
            prod_sq += p * p;
        }
        let mf = m as f64;
        let w = cov.intensity_a;
        // Components of E_A E_B fluctuate on the intensity scale w.
        let tol = 5.0 * w / math::sqrt(mf);
        assert!((anom / mf - cov.cross_anomalous).norm() < 2.0 * tol);
        assert!((herm / mf - cov.cross_hermitian).norm() < 2.0 * tol);

        // Gaussian moment factorization of <I_A I_B>.
        let (mean, se) = math::mean_and_stderr(prod_sum, prod_sq, m);
        let expected = cov.intensity_product_moment();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "fourth moment {mean} vs {expected} (se {se})"
        );
    }

    #[test]
    fn detector_validation_rejects_bad_parameters() {
        assert!(DetectorModel::DeterministicThreshold { baseline: -1.0, threshold: 0.5 }.validate().is_err());
        assert!(DetectorModel::ProbabilisticLinear { baseline: 0.0, threshold: 0.0, saturation: 0.0 }.validate().is_err());
        assert!(DetectorModel::CommonModeCorrelated { baseline: 0.0, threshold: 0.0, saturation: 1.0, rho: 1.5 }.validate().is_err());
        assert!(DetectorModel::Constant { value: 1.2 }.validate().is_err());
        assert!(DetectorModel::Constant { value: 0.5 }.validate().is_ok());
    }

    proptest! {
        #[test]
        fn analyzer_ports_partition_intensity(re_h in -3.0f64..3.0, im_h in -3.0f64..3.0,
                                              re_v in -3.0f64..3.0, im_v in -3.0f64..3.0,
                                              theta in 0.0f64..3.0) {
            let f = FieldAmplitudes {
                a_h: Complex64::new(re_h, im_h),
                a_v: Complex64::new(re_v, im_v),
                b_h: Complex64::new(0.0, 0.0),
                b_v: Complex64::new(0.0, 0.0),
            };
            let s = PolarizerSetting::new(theta).unwrap();
            let i_pass = analyze(&f, Beam::A, s).norm_sqr();
            let i_block = analyze(&f, Beam::A, s.orthogonal()).norm_sqr();
            let total = f.a_h.norm_sqr() + f.a_v.norm_sqr();
            prop_assert!((i_pass + i_block - total).abs() < 1e-9 * (1.0 + total));
        }

        #[test]
        fn joint_probability_respects_frechet_bounds(fi in 0.0f64..=1.0, fj in 0.0f64..=1.0,
                                                     rho in -1.0f64..=1.0) {
            let g = joint_from_singles(fi, fj, rho);
            let lo = (fi + fj - 1.0).max(0.0);
            let hi = fi.min(fj);
            prop_assert!(g >= lo - 1e-12);
            prop_assert!(g <= hi + 1e-12);
        }
    }
}
