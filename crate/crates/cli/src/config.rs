//! Strict JSON experiment configuration and its mapping onto core types.
//!
//! Parsing is strict in both directions: unknown keys are rejected with a
//! nearest-key hint, semantic violations name the offending field, and every
//! optional field is materialized to its default on parse, so emitting a
//! parsed config and parsing it again yields an identical value.
//!
//! Angles are written in degrees in the file and converted to radians only
//! when core types are built.

use std::fmt;

use serde::{Deserialize, Serialize};
use wigbell_core::bell::{AngleSet, ChshSetup, DualPortStation, PostSelectionPolicy};
use wigbell_core::efficiency::Efficiency;
use wigbell_core::engine::Experiment;
use wigbell_core::optics::{DetectorModel, PolarizerSetting, SourceTransform};
use wigbell_core::vacuum::{ModeSet, VacuumDistribution};

/// Schema revision understood by this binary.
pub const SCHEMA_VERSION: &str = "1";

pub const DEFAULT_SIGMA0_SQ: f64 = 0.5;
pub const DEFAULT_GAIN: f64 = 1.0;
pub const DEFAULT_THRESHOLD: f64 = 1.0;
pub const DEFAULT_SATURATION: f64 = 1.0;
pub const DEFAULT_TRIALS: u64 = 100_000;

/// Configuration failure with a human-readable message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    message: String,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self { message: message.into() }
    }

    pub fn message(&self) -> &str {
        &self.message
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

fn field_error(field: &str, detail: impl fmt::Display) -> ConfigError {
    ConfigError::new(format!("config error: field \"{field}\": {detail}"))
}

fn core_to_config(err: wigbell_core::Error) -> ConfigError {
    ConfigError::new(format!("config error: {err}"))
}

/// One experiment as described on disk, after default resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: String,
    #[serde(default = "default_name")]
    pub name: String,
    pub source: SourceConfig,
    #[serde(default = "default_sigma0_sq")]
    pub sigma0_sq: f64,
    /// 1 entry covers every channel, 2 are the per-station detectors, and 4
    /// list the ports in the order `A+, A-, B+, B-`.
    #[serde(default)]
    pub detectors: Vec<DetectorConfig>,
    #[serde(default)]
    pub angles: AnglesConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_grid: Option<Vec<f64>>,
    #[serde(default = "default_policy")]
    pub policy: PostSelectionPolicy,
    #[serde(default = "default_trials")]
    pub n_trials: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_schema_version() -> String {
    SCHEMA_VERSION.to_string()
}

fn default_name() -> String {
    "run".to_string()
}

fn default_sigma0_sq() -> f64 {
    DEFAULT_SIGMA0_SQ
}

fn default_policy() -> PostSelectionPolicy {
    PostSelectionPolicy::CoincidenceOnly
}

fn default_trials() -> u64 {
    DEFAULT_TRIALS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub preset: SourcePresetConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePresetConfig {
    SingletLike,
    Uncorrelated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub kind: DetectorKindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_i0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKindConfig {
    DeterministicThreshold,
    ProbabilisticLinear,
    CommonModeCorrelated,
    Constant,
}

impl DetectorKindConfig {
    fn label(self) -> &'static str {
        match self {
            DetectorKindConfig::DeterministicThreshold => "deterministic_threshold",
            DetectorKindConfig::ProbabilisticLinear => "probabilistic_linear",
            DetectorKindConfig::CommonModeCorrelated => "common_mode_correlated",
            DetectorKindConfig::Constant => "constant",
        }
    }
}

impl DetectorConfig {
    fn defaulted(kind: DetectorKindConfig) -> Self {
        Self { kind, baseline_i0: None, threshold: None, saturation: None, rho: None, value: None }
    }

    /// Core detector model; assumes the config has been resolved.
    pub fn to_model(&self) -> DetectorModel {
        let baseline = self.baseline_i0.unwrap_or(DEFAULT_SIGMA0_SQ);
        let threshold = self.threshold.unwrap_or(DEFAULT_THRESHOLD);
        let saturation = self.saturation.unwrap_or(DEFAULT_SATURATION);
        match self.kind {
            DetectorKindConfig::DeterministicThreshold => {
                DetectorModel::DeterministicThreshold { baseline, threshold }
            }
            DetectorKindConfig::ProbabilisticLinear => {
                DetectorModel::ProbabilisticLinear { baseline, threshold, saturation }
            }
            DetectorKindConfig::CommonModeCorrelated => DetectorModel::CommonModeCorrelated {
                baseline,
                threshold,
                saturation,
                rho: self.rho.unwrap_or(0.0),
            },
            DetectorKindConfig::Constant => {
                DetectorModel::Constant { value: self.value.unwrap_or(0.0) }
            }
        }
    }
}

/// Analyzer orientations in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnglesConfig {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl Default for AnglesConfig {
    /// The geometry that maximizes `|S|` for a `-cos 2(theta_a - theta_b)`
    /// correlator.
    fn default() -> Self {
        Self { a: 45.0, a_prime: 0.0, b: 22.5, b_prime: 67.5 }
    }
}

const ROOT_KEYS: &[&str] = &[
    "schema_version",
    "name",
    "source",
    "sigma0_sq",
    "detectors",
    "angles",
    "mu",
    "mu_grid",
    "policy",
    "n_trials",
    "seed",
];
const SOURCE_KEYS: &[&str] = &["preset", "gain"];
const DETECTOR_KEYS: &[&str] = &["kind", "baseline_i0", "threshold", "saturation", "rho", "value"];
const ANGLE_KEYS: &[&str] = &["a", "a_prime", "b", "b_prime"];

fn nearest_key<'a>(unknown: &str, known: &[&'a str]) -> Option<&'a str> {
    known
        .iter()
        .min_by_key(|candidate| strsim::levenshtein(unknown, candidate))
        .copied()
}

fn check_object(
    obj: &serde_json::Map<String, serde_json::Value>,
    known: &[&str],
    place: &str,
) -> Result<(), ConfigError> {
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            let hint = match nearest_key(key, known) {
                Some(candidate) => format!(" (did you mean \"{candidate}\"?)"),
                None => String::new(),
            };
            return Err(ConfigError::new(format!(
                "config error: unknown key \"{key}\" {place}{hint}"
            )));
        }
    }
    Ok(())
}

/// Rejects keys the schema does not define, with a nearest-key hint. Shape
/// errors (wrong types, missing fields) are left for the typed parse, which
/// reports line and column.
fn check_unknown_keys(root: &serde_json::Value) -> Result<(), ConfigError> {
    let Some(obj) = root.as_object() else {
        return Ok(());
    };
    check_object(obj, ROOT_KEYS, "at the top level")?;
    if let Some(source) = obj.get("source").and_then(|v| v.as_object()) {
        check_object(source, SOURCE_KEYS, "in \"source\"")?;
    }
    if let Some(detectors) = obj.get("detectors").and_then(|v| v.as_array()) {
        for (i, det) in detectors.iter().enumerate() {
            if let Some(det) = det.as_object() {
                check_object(det, DETECTOR_KEYS, &format!("in \"detectors[{i}]\""))?;
            }
        }
    }
    if let Some(angles) = obj.get("angles").and_then(|v| v.as_object()) {
        check_object(angles, ANGLE_KEYS, "in \"angles\"")?;
    }
    Ok(())
}

/// Parses, validates, and default-resolves a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| ConfigError::new(format!("config syntax error: {e}")))?;
    check_unknown_keys(&value)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(text)
        .map_err(|e| ConfigError::new(format!("config error: {e}")))?;
    resolve(&mut cfg)?;
    Ok(cfg)
}

/// Serializes a resolved config so that `parse_config` reads it back
/// unchanged.
pub fn emit_config(cfg: &ExperimentConfig) -> String {
    let mut text = serde_json::to_string_pretty(cfg).expect("config serializes to JSON");
    text.push('\n');
    text
}

fn check_mu(mu: f64, field: &str) -> Result<(), ConfigError> {
    if !mu.is_finite() || !(0.0..=1.0).contains(&mu) {
        return Err(field_error(field, format_args!("detection efficiency must lie in [0, 1], got {mu}")));
    }
    Ok(())
}

fn resolve(cfg: &mut ExperimentConfig) -> Result<(), ConfigError> {
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(field_error(
            "schema_version",
            format_args!("this tool reads schema \"{SCHEMA_VERSION}\", got \"{}\"", cfg.schema_version),
        ));
    }
    if !cfg.sigma0_sq.is_finite() || !(cfg.sigma0_sq > 0.0) {
        return Err(field_error(
            "sigma0_sq",
            format_args!("vacuum mode variance must be positive and finite, got {}", cfg.sigma0_sq),
        ));
    }
    match cfg.source.preset {
        SourcePresetConfig::SingletLike => {
            let gain = *cfg.source.gain.get_or_insert(DEFAULT_GAIN);
            if !gain.is_finite() || gain < 0.0 {
                return Err(field_error(
                    "source.gain",
                    format_args!("must be finite and non-negative, got {gain}"),
                ));
            }
        }
        SourcePresetConfig::Uncorrelated => match cfg.source.gain {
            None => {}
            Some(g) if g == 0.0 => cfg.source.gain = None,
            Some(g) => {
                return Err(field_error(
                    "source.gain",
                    format_args!("the uncorrelated preset has no gain, got {g}"),
                ));
            }
        },
    }
    if cfg.detectors.is_empty() {
        cfg.detectors.push(DetectorConfig::defaulted(DetectorKindConfig::DeterministicThreshold));
    }
    let n = cfg.detectors.len();
    if !(n == 1 || n == 2 || n == 4) {
        return Err(field_error(
            "detectors",
            format_args!(
                "must list 1 (all channels), 2 (station A, station B), or 4 (A+, A-, B+, B-) entries, got {n}"
            ),
        ));
    }
    let sigma0_sq = cfg.sigma0_sq;
    for i in 0..cfg.detectors.len() {
        resolve_detector(&mut cfg.detectors[i], i, sigma0_sq)?;
    }
    for (name, v) in [
        ("angles.a", cfg.angles.a),
        ("angles.a_prime", cfg.angles.a_prime),
        ("angles.b", cfg.angles.b),
        ("angles.b_prime", cfg.angles.b_prime),
    ] {
        if !v.is_finite() {
            return Err(field_error(name, format_args!("must be finite degrees, got {v}")));
        }
    }
    match (&cfg.mu, &cfg.mu_grid) {
        (Some(_), Some(_)) => {
            return Err(field_error("mu", "give either \"mu\" or \"mu_grid\", not both"));
        }
        (Some(mu), None) => check_mu(*mu, "mu")?,
        (None, Some(grid)) => {
            if grid.is_empty() {
                return Err(field_error("mu_grid", "must hold at least one efficiency"));
            }
            for (i, mu) in grid.iter().enumerate() {
                check_mu(*mu, &format!("mu_grid[{i}]"))?;
            }
        }
        (None, None) => cfg.mu = Some(1.0),
    }
    if cfg.n_trials == 0 {
        return Err(field_error("n_trials", "must be at least 1"));
    }
    Ok(())
}

fn forbid_field(
    opt: Option<f64>,
    idx: usize,
    name: &str,
    kind: DetectorKindConfig,
) -> Result<(), ConfigError> {
    if opt.is_some() {
        return Err(field_error(
            &format!("detectors[{idx}].{name}"),
            format_args!("not accepted by detector kind \"{}\"", kind.label()),
        ));
    }
    Ok(())
}

fn resolve_detector(det: &mut DetectorConfig, idx: usize, sigma0_sq: f64) -> Result<(), ConfigError> {
    let kind = det.kind;
    match kind {
        DetectorKindConfig::DeterministicThreshold => {
            forbid_field(det.saturation, idx, "saturation", kind)?;
            forbid_field(det.rho, idx, "rho", kind)?;
            forbid_field(det.value, idx, "value", kind)?;
            det.baseline_i0.get_or_insert(sigma0_sq);
            det.threshold.get_or_insert(DEFAULT_THRESHOLD);
        }
        DetectorKindConfig::ProbabilisticLinear => {
            forbid_field(det.rho, idx, "rho", kind)?;
            forbid_field(det.value, idx, "value", kind)?;
            det.baseline_i0.get_or_insert(sigma0_sq);
            det.threshold.get_or_insert(DEFAULT_THRESHOLD);
            det.saturation.get_or_insert(DEFAULT_SATURATION);
        }
        DetectorKindConfig::CommonModeCorrelated => {
            forbid_field(det.value, idx, "value", kind)?;
            det.baseline_i0.get_or_insert(sigma0_sq);
            det.threshold.get_or_insert(DEFAULT_THRESHOLD);
            det.saturation.get_or_insert(DEFAULT_SATURATION);
            if det.rho.is_none() {
                return Err(field_error(
                    &format!("detectors[{idx}].rho"),
                    format_args!("required for detector kind \"{}\"", kind.label()),
                ));
            }
        }
        DetectorKindConfig::Constant => {
            forbid_field(det.baseline_i0, idx, "baseline_i0", kind)?;
            forbid_field(det.threshold, idx, "threshold", kind)?;
            forbid_field(det.saturation, idx, "saturation", kind)?;
            forbid_field(det.rho, idx, "rho", kind)?;
            if det.value.is_none() {
                return Err(field_error(
                    &format!("detectors[{idx}].value"),
                    format_args!("required for detector kind \"{}\"", kind.label()),
                ));
            }
        }
    }
    // Numeric ranges live in one place: the core model's validator.
    det.to_model()
        .validate()
        .map_err(|e| ConfigError::new(format!("config error: detectors[{idx}]: {e}")))?;
    Ok(())
}

impl ExperimentConfig {
    /// Detection efficiency for single-point commands; resolved configs
    /// without `mu_grid` always carry one.
    pub fn resolved_mu(&self) -> f64 {
        self.mu.unwrap_or(1.0)
    }

    pub fn efficiency(&self) -> Result<Efficiency, ConfigError> {
        Efficiency::new(self.resolved_mu()).map_err(core_to_config)
    }

    pub fn vacuum(&self) -> Result<VacuumDistribution, ConfigError> {
        VacuumDistribution::new(ModeSet::source_only(), self.sigma0_sq).map_err(core_to_config)
    }

    pub fn source_transform(&self) -> Result<SourceTransform, ConfigError> {
        match self.source.preset {
            SourcePresetConfig::SingletLike => {
                SourceTransform::singlet_like(self.source.gain.unwrap_or(DEFAULT_GAIN))
                    .map_err(core_to_config)
            }
            SourcePresetConfig::Uncorrelated => Ok(SourceTransform::uncorrelated()),
        }
    }

    /// All four analyzer orientations, converted to radians.
    pub fn angle_set(&self) -> AngleSet {
        AngleSet {
            a: self.angles.a.to_radians(),
            a_prime: self.angles.a_prime.to_radians(),
            b: self.angles.b.to_radians(),
            b_prime: self.angles.b_prime.to_radians(),
        }
    }

    /// Detectors for the two counting channels (the `+` ports when four are
    /// listed).
    pub fn counting_detectors(&self) -> (DetectorModel, DetectorModel) {
        if self.detectors.is_empty() {
            let d = DetectorConfig::defaulted(DetectorKindConfig::DeterministicThreshold).to_model();
            return (d, d);
        }
        match self.detectors.len() {
            2 => (self.detectors[0].to_model(), self.detectors[1].to_model()),
            4 => (self.detectors[0].to_model(), self.detectors[2].to_model()),
            _ => (self.detectors[0].to_model(), self.detectors[0].to_model()),
        }
    }

    /// Dual-port stations for CHSH runs.
    pub fn stations(&self) -> (DualPortStation, DualPortStation) {
        if self.detectors.is_empty() {
            let d = DetectorConfig::defaulted(DetectorKindConfig::DeterministicThreshold).to_model();
            return (DualPortStation::uniform(d), DualPortStation::uniform(d));
        }
        match self.detectors.len() {
            2 => (
                DualPortStation::uniform(self.detectors[0].to_model()),
                DualPortStation::uniform(self.detectors[1].to_model()),
            ),
            4 => (
                DualPortStation {
                    detector_plus: self.detectors[0].to_model(),
                    detector_minus: self.detectors[1].to_model(),
                },
                DualPortStation {
                    detector_plus: self.detectors[2].to_model(),
                    detector_minus: self.detectors[3].to_model(),
                },
            ),
            _ => {
                let d = self.detectors[0].to_model();
                (DualPortStation::uniform(d), DualPortStation::uniform(d))
            }
        }
    }

    /// Two-channel experiment at the primary settings `(a, b)`.
    pub fn counting_experiment(&self) -> Result<Experiment, ConfigError> {
        let (detector_a, detector_b) = self.counting_detectors();
        let exp = Experiment {
            source: self.source_transform()?,
            vacuum: self.vacuum()?,
            setting_a: PolarizerSetting::from_degrees(self.angles.a).map_err(core_to_config)?,
            setting_b: PolarizerSetting::from_degrees(self.angles.b).map_err(core_to_config)?,
            detector_a,
            detector_b,
        };
        exp.validate().map_err(core_to_config)?;
        Ok(exp)
    }

    /// Four-setting CHSH arrangement at efficiency `mu`.
    pub fn chsh_setup(&self, mu: f64) -> Result<ChshSetup, ConfigError> {
        let (station_a, station_b) = self.stations();
        let setup = ChshSetup {
            source: self.source_transform()?,
            vacuum: self.vacuum()?,
            station_a,
            station_b,
            angles: self.angle_set(),
            efficiency: Efficiency::new(mu).map_err(core_to_config)?,
        };
        setup.validate().map_err(core_to_config)?;
        Ok(setup)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"source": {"preset": "singlet_like"}}"#;

    #[test]
    fn minimal_config_fills_documented_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.schema_version, "1");
        assert_eq!(cfg.name, "run");
        assert_eq!(cfg.angles, AnglesConfig::default());
        assert_eq!(cfg.sigma0_sq, DEFAULT_SIGMA0_SQ);
        assert_eq!(cfg.source.gain, Some(DEFAULT_GAIN));
        assert_eq!(cfg.detectors.len(), 1);
        assert_eq!(cfg.detectors[0].kind, DetectorKindConfig::DeterministicThreshold);
        assert_eq!(cfg.detectors[0].baseline_i0, Some(DEFAULT_SIGMA0_SQ));
        assert_eq!(cfg.detectors[0].threshold, Some(DEFAULT_THRESHOLD));
        assert_eq!(cfg.mu, Some(1.0));
        assert_eq!(cfg.policy, PostSelectionPolicy::CoincidenceOnly);
        assert_eq!(cfg.n_trials, DEFAULT_TRIALS);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn round_trip_preserves_resolved_config() {
        let text = r#"{
            "name": "loophole demo",
            "source": {"preset": "singlet_like", "gain": 0.8},
            "sigma0_sq": 0.6,
            "detectors": [
                {"kind": "probabilistic_linear", "threshold": 0.4},
                {"kind": "common_mode_correlated", "rho": 0.3}
            ],
            "angles": {"a": 45.0, "a_prime": 0.0, "b": 22.5, "b_prime": 67.5},
            "mu": 0.7,
            "policy": "full_ensemble_assign_minus",
            "n_trials": 5000,
            "seed": 42
        }"#;
        let cfg = parse_config(text).unwrap();
        let emitted = emit_config(&cfg);
        let back = parse_config(&emitted).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(emit_config(&back), emitted);
    }

    #[test]
    fn grid_config_round_trips_without_materializing_mu() {
        let text = r#"{"source": {"preset": "uncorrelated"}, "angles": {"a": 0, "a_prime": 45, "b": 22.5, "b_prime": 67.5}, "mu_grid": [0.25, 0.5, 1.0]}"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.mu, None);
        let back = parse_config(&emit_config(&cfg)).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_root_key_gets_nearest_hint() {
        let text = r#"{"source": {"preset": "singlet_like"}, "angles": {"a": 45, "a_prime": 0, "b": 22.5, "b_prime": 67.5}, "detector_efficiancy": 0.8}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.message().contains("unknown key \"detector_efficiancy\""), "{err}");
        assert!(err.message().contains("did you mean \"detectors\"?"), "{err}");
    }

    #[test]
    fn unknown_nested_key_names_its_section() {
        let text = r#"{"source": {"preset": "singlet_like"}, "angles": {"a": 45, "a_prime": 0, "b": 22.5, "b_prime": 67.5}, "detectors": [{"kind": "deterministic_threshold", "treshold": 1.0}]}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.message().contains("detectors[0]"), "{err}");
        assert!(err.message().contains("did you mean \"threshold\"?"), "{err}");
    }

    #[test]
    fn out_of_range_mu_names_field_and_range() {
        let text = r#"{"source": {"preset": "singlet_like"}, "angles": {"a": 45, "a_prime": 0, "b": 22.5, "b_prime": 67.5}, "mu": 1.3}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.message().contains("\"mu\""), "{err}");
        assert!(err.message().contains("[0, 1]"), "{err}");
        assert!(err.message().contains("1.3"), "{err}");
    }

    #[test]
    fn mu_and_grid_are_mutually_exclusive() {
        let text = r#"{"source": {"preset": "singlet_like"}, "angles": {"a": 45, "a_prime": 0, "b": 22.5, "b_prime": 67.5}, "mu": 0.5, "mu_grid": [0.5]}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.message().contains("not both"), "{err}");
    }

    #[test]
    fn uncorrelated_preset_rejects_gain() {
        let text = r#"{"source": {"preset": "uncorrelated", "gain": 0.5}, "angles": {"a": 45, "a_prime": 0, "b": 22.5, "b_prime": 67.5}}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.message().contains("source.gain"), "{err}");
    }

    #[test]
    fn detector_field_rules_are_per_kind() {
        let constant_with_threshold = r#"{"source": {"preset": "singlet_like"}, "angles": {"a": 45, "a_prime": 0, "b": 22.5, "b_prime": 67.5}, "detectors": [{"kind": "constant", "value": 0.5, "threshold": 1.0}]}"#;
        let err = parse_config(constant_with_threshold).unwrap_err();
        assert!(err.message().contains("detectors[0].threshold"), "{err}");

        let common_mode_without_rho = r#"{"source": {"preset": "singlet_like"}, "angles": {"a": 45, "a_prime": 0, "b": 22.5, "b_prime": 67.5}, "detectors": [{"kind": "common_mode_correlated"}]}"#;
        let err = parse_config(common_mode_without_rho).unwrap_err();
        assert!(err.message().contains("detectors[0].rho"), "{err}");
    }

    #[test]
    fn syntax_error_reports_line_and_column() {
        let text = "{\n  \"source\": {\"preset\": \"singlet_like\"},\n  \"angles\": ,\n}";
        let err = parse_config(text).unwrap_err();
        assert!(err.message().contains("syntax error"), "{err}");
        assert!(err.message().contains("line 3"), "{err}");
        assert!(err.message().contains("column"), "{err}");
    }

    #[test]
    fn detector_count_of_three_is_rejected() {
        let text = r#"{"source": {"preset": "singlet_like"}, "angles": {"a": 45, "a_prime": 0, "b": 22.5, "b_prime": 67.5}, "detectors": [{"kind": "constant", "value": 0.1}, {"kind": "constant", "value": 0.2}, {"kind": "constant", "value": 0.3}]}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.message().contains("got 3"), "{err}");
    }

    #[test]
    fn four_detectors_map_to_ports_in_listed_order() {
        let text = r#"{"source": {"preset": "singlet_like"}, "angles": {"a": 45, "a_prime": 0, "b": 22.5, "b_prime": 67.5}, "detectors": [
            {"kind": "constant", "value": 0.1},
            {"kind": "constant", "value": 0.2},
            {"kind": "constant", "value": 0.3},
            {"kind": "constant", "value": 0.4}
        ]}"#;
        let cfg = parse_config(text).unwrap();
        let (station_a, station_b) = cfg.stations();
        assert_eq!(station_a.detector_plus, DetectorModel::Constant { value: 0.1 });
        assert_eq!(station_a.detector_minus, DetectorModel::Constant { value: 0.2 });
        assert_eq!(station_b.detector_plus, DetectorModel::Constant { value: 0.3 });
        assert_eq!(station_b.detector_minus, DetectorModel::Constant { value: 0.4 });
        let (count_a, count_b) = cfg.counting_detectors();
        assert_eq!(count_a, DetectorModel::Constant { value: 0.1 });
        assert_eq!(count_b, DetectorModel::Constant { value: 0.3 });
    }

    #[test]
    fn angles_convert_from_degrees_to_radians() {
        let cfg = parse_config(MINIMAL).unwrap();
        let set = cfg.angle_set();
        assert!((set.a - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((set.a_prime - 0.0).abs() < 1e-15);
        assert!((set.b - std::f64::consts::FRAC_PI_8).abs() < 1e-15);
        assert!((set.b_prime - 3.0 * std::f64::consts::FRAC_PI_8).abs() < 1e-15);
    }

    #[test]
    fn bad_detector_numbers_surface_core_messages() {
        let text = r#"{"source": {"preset": "singlet_like"}, "angles": {"a": 45, "a_prime": 0, "b": 22.5, "b_prime": 67.5}, "detectors": [{"kind": "probabilistic_linear", "saturation": 0.0}]}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.message().contains("detectors[0]"), "{err}");
        assert!(err.message().contains("saturation"), "{err}");
    }
}
