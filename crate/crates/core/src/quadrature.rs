//! Deterministic quadrature predictions for detection statistics.
//!
//! These routines never sample: they integrate the detector response against
//! the exact intensity law of the analyzed fields, providing an independent
//! check on the Monte Carlo engine.
//!
//! Each analyzed field is a zero-mean circular complex Gaussian, so its
//! intensity is exponential with the mean given by the covariance. For a
//! pair of fields whose coupling is carried by a single cross moment
//! (phase-insensitive or phase-sensitive, not both), the joint intensity law
//! is the bivariate exponential with density
//!
//! ```text
//! p(x, y) = exp(-(x/wa + y/wb) / (1-l)) / (wa wb (1-l))
//!           * I0(2 sqrt(l x y / (wa wb)) / (1-l))
//! ```
//!
//! where `l` is the intensity correlation. Integration runs in amplitude
//! coordinates `u = sqrt(x/wa)`, `v = sqrt(y/wb)` where the exponent is a
//! negative definite quadratic, so nothing overflows; panels are split at
//! the detector response breakpoints and the Bessel factor uses the scaled
//! `I0` to keep every intermediate bounded.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::engine::Experiment;
use crate::error::{Error, Result};
use crate::math::{self, bessel_i0e, gauss_legendre};
use crate::optics::{joint_from_singles, pair_rho, DetectorModel, FieldCovariance};

/// Resolution of the quadrature grids.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureSettings {
    /// Maximum panel width on the amplitude axis (units of the field's
    /// standard amplitude).
    pub panel_width: f64,
    /// Gauss-Legendre nodes per panel.
    pub nodes_per_panel: usize,
    /// Amplitude-axis cutoff; the discarded tail mass is `exp(-radius^2)`.
    pub radius: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self { panel_width: 0.5, nodes_per_panel: 24, radius: 7.5 }
    }
}

impl QuadratureSettings {
    /// Finer grid for convergence checks.
    pub fn fine() -> Self {
        Self { panel_width: 0.25, nodes_per_panel: 32, radius: 8.0 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.panel_width > 0.0) || !(self.radius > 0.0) || self.nodes_per_panel < 2 {
            return Err(Error::InvalidSpec("quadrature settings must be positive".into()));
        }
        Ok(())
    }
}

/// Joint intensity law of the two analyzed fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointIntensityLaw {
    mean_a: f64,
    mean_b: f64,
    lambda: f64,
}

impl JointIntensityLaw {
    pub fn new(mean_a: f64, mean_b: f64, lambda: f64) -> Result<Self> {
        if !(mean_a > 0.0) || !(mean_b > 0.0) {
            return Err(Error::Domain(alloc::format!(
                "mean intensities must be positive, got {mean_a}, {mean_b}"
            )));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::Domain(alloc::format!(
                "intensity correlation must lie in [0, 1), got {lambda}"
            )));
        }
        if lambda >= 1.0 - 1e-10 {
            return Err(Error::Unsupported(
                "intensity correlation too close to 1 for a stable joint law".into(),
            ));
        }
        Ok(Self { mean_a, mean_b, lambda })
    }

    /// Builds the law from exact field moments. Fails with `Unsupported`
    /// when both cross moments are non-negligible: the intensity pair is
    /// then outside this bivariate exponential family.
    pub fn from_covariance(cov: &FieldCovariance) -> Result<Self> {
        let scale = math::sqrt(cov.intensity_a * cov.intensity_b);
        if !(scale > 0.0) {
            return Err(Error::Domain("mean intensities must be positive".into()));
        }
        let h = cov.cross_hermitian.norm() / scale;
        let m = cov.cross_anomalous.norm() / scale;
        if h > 1e-9 && m > 1e-9 {
            return Err(Error::Unsupported(
                "both phase-sensitive and phase-insensitive cross moments present".into(),
            ));
        }
        Self::new(cov.intensity_a, cov.intensity_b, cov.correlation_lambda())
    }

    pub fn mean_a(&self) -> f64 {
        self.mean_a
    }

    pub fn mean_b(&self) -> f64 {
        self.mean_b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `E[I_A I_B] = wa wb (1 + lambda)`.
    pub fn mean_product(&self) -> f64 {
        self.mean_a * self.mean_b * (1.0 + self.lambda)
    }

    /// Joint density at intensities `(x, y)`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        if x < 0.0 || y < 0.0 {
            return 0.0;
        }
        let l = self.lambda;
        let om = 1.0 - l;
        let xa = x / self.mean_a;
        let yb = y / self.mean_b;
        let z = 2.0 * math::sqrt(l * xa * yb) / om;
        let exponent = -(xa + yb) / om + z;
        math::exp(exponent) * bessel_i0e(z) / (self.mean_a * self.mean_b * om)
    }
}

/// Per-axis quadrature nodes in amplitude coordinates, with weights that
/// include the panel mapping but not the density.
fn axis_nodes(det: &DetectorModel, mean: f64, st: &QuadratureSettings) -> (Vec<f64>, Vec<f64>) {
    let mut edges: Vec<f64> = Vec::new();
    edges.push(0.0);
    let (bps, n_bp) = det.breakpoints();
    for &bp in bps.iter().take(n_bp) {
        if bp > 0.0 {
            let u = math::sqrt(bp / mean);
            if u < st.radius {
                edges.push(u);
            }
        }
    }
    edges.push(st.radius);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let (gl_x, gl_w) = gauss_legendre(st.nodes_per_panel);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for pair in edges.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let sub = ((hi - lo) / st.panel_width).ceil().max(1.0) as usize;
        let step = (hi - lo) / sub as f64;
        for k in 0..sub {
            let a = lo + step * k as f64;
            let half = 0.5 * step;
            let mid = a + half;
            for (&x, &w) in gl_x.iter().zip(gl_w.iter()) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
    }
    (nodes, weights)
}

/// Detection probability of one detector behind an analyzer whose intensity
/// is exponential with the given mean: `integral f(I) exp(-I/w)/w dI`.
pub fn marginal_oracle(
    det: &DetectorModel,
    mean_intensity: f64,
    st: &QuadratureSettings,
) -> Result<f64> {
    det.validate()?;
    st.validate()?;
    if !(mean_intensity > 0.0) || !mean_intensity.is_finite() {
        return Err(Error::Domain(alloc::format!(
            "mean intensity must be positive and finite, got {mean_intensity}"
        )));
    }
    let (nodes, weights) = axis_nodes(det, mean_intensity, st);
    let mut acc = math::CompensatedSum::default();
    for (&u, &w) in nodes.iter().zip(weights.iter()) {
        let intensity = mean_intensity * u * u;
        let f = det.detection_probability(intensity)?;
        acc.add(w * f * 2.0 * u * math::exp(-u * u));
    }
    Ok(acc.value())
}

/// Joint detection probability of a detector pair under the bivariate
/// exponential intensity law, including any common-mode coupling between the
/// detectors themselves.
pub fn joint_oracle(
    det_a: &DetectorModel,
    det_b: &DetectorModel,
    law: &JointIntensityLaw,
    st: &QuadratureSettings,
) -> Result<f64> {
    det_a.validate()?;
    det_b.validate()?;
    let rho = pair_rho(det_a, det_b);
    integrate_joint(law, st, |fa, fb| joint_from_singles(fa, fb, rho), det_a, det_b)
}

/// Integrates `weight(f_a(x), f_b(y)) * extra(x, y)` against the joint law.
fn integrate_joint(
    law: &JointIntensityLaw,
    st: &QuadratureSettings,
    weight: impl Fn(f64, f64) -> f64,
    det_a: &DetectorModel,
    det_b: &DetectorModel,
) -> Result<f64> {
    st.validate()?;
    let (ua, wa) = axis_nodes(det_a, law.mean_a, st);
    let (ub, wb) = axis_nodes(det_b, law.mean_b, st);
    let fa: Vec<f64> = ua
        .iter()
        .map(|&u| det_a.detection_probability(law.mean_a * u * u))
        .collect::<Result<_>>()?;
    let fb: Vec<f64> = ub
        .iter()
        .map(|&v| det_b.detection_probability(law.mean_b * v * v))
        .collect::<Result<_>>()?;

    let l = law.lambda;
    let om = 1.0 - l;
    let sl = math::sqrt(l);
    let mut acc = math::CompensatedSum::default();
    for (i, &u) in ua.iter().enumerate() {
        let mut row = math::CompensatedSum::default();
        for (j, &v) in ub.iter().enumerate() {
            // Joint amplitude density 4uv/(1-l) exp(-((u - sqrt(l) v)^2
            // + (1-l) v^2)/(1-l)) i0e(2 sqrt(l) u v/(1-l)).
            let z = 2.0 * sl * u * v / om;
            let d = u - sl * v;
            let g = 4.0 * u * v / om * math::exp(-(d * d) / om - v * v) * bessel_i0e(z);
            row.add(wb[j] * weight(fa[i], fb[j]) * g);
        }
        acc.add(wa[i] * row.value());
    }
    Ok(acc.value())
}

/// Quadrature predictions for a two-beam run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OraclePrediction {
    pub p_a: f64,
    pub p_b: f64,
    pub p_joint: f64,
    pub intensity_a: f64,
    pub intensity_b: f64,
    pub intensity_product: f64,
    pub lambda: f64,
}

/// Computes the full set of quadrature predictions for an experiment.
pub fn predict(exp: &Experiment, st: &QuadratureSettings) -> Result<OraclePrediction> {
    exp.validate()?;
    let cov = exp.covariance();
    let law = JointIntensityLaw::from_covariance(&cov)?;
    Ok(OraclePrediction {
        p_a: marginal_oracle(&exp.detector_a, cov.intensity_a, st)?,
        p_b: marginal_oracle(&exp.detector_b, cov.intensity_b, st)?,
        p_joint: joint_oracle(&exp.detector_a, &exp.detector_b, &law, st)?,
        intensity_a: cov.intensity_a,
        intensity_b: cov.intensity_b,
        intensity_product: law.mean_product(),
        lambda: law.lambda(),
    })
}
