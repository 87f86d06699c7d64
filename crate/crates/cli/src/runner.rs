//! Command drivers: build core runs from a config, write reports atomically,
//! and record a manifest describing every file the run produced.
//!
//! Reports never contain timestamps, so a rerun with the same config and
//! seed is byte-identical regardless of worker count. Files are written to a
//! temporary name and renamed into place; if any step fails, everything the
//! command wrote is removed again.

use std::fs;
use std::path::{Path, PathBuf};
use std::process;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use wigbell_core::bell::{self, ChshEstimate, PostSelectionPolicy};
use wigbell_core::counting::{self, CountTable};
use wigbell_core::engine::{self, Estimate, Experiment, PairStatistics};
use wigbell_core::error::Error as CoreError;
use wigbell_core::exec::{ChunkOutput, TrialMapper, TrialRange};
use wigbell_core::lhv::{self, CorrelatorTargets, CriticalEta};
use wigbell_core::optics::{DetectorModel, PolarizerSetting, SourceTransform};
use wigbell_core::quadrature::{self, OraclePrediction, QuadratureSettings};
use wigbell_core::rng::derive_seed;
use wigbell_core::vacuum::{ModeSet, VacuumDistribution};

use crate::config::{ExperimentConfig, SourcePresetConfig};
use crate::manifest::{self, OutputDigest, RunManifest, MANIFEST_FILE, MANIFEST_VERSION};

pub const SIMULATE_FILE: &str = "simulate.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const CRITICAL_MU_FILE: &str = "critical_mu.json";
pub const LHV_BOUND_FILE: &str = "lhv_bound.json";
pub const ORACLE_CHECK_FILE: &str = "oracle_check.json";

pub const SWEEP_CSV_HEADER: &str = "mu,E_ab,E_ab',E_a'b,E_a'b',S,S_stderr,policy";

/// Trials used by configless check commands unless `--trials` is given.
pub const DEFAULT_CHECK_TRIALS: u64 = 200_000;

/// Agreement required of the Monte Carlo and quadrature estimates: within
/// `ORACLE_SIGMA_TOL` standard errors plus a small absolute slack.
pub const ORACLE_SIGMA_TOL: f64 = 3.0;
pub const ORACLE_ABS_SLACK: f64 = 1e-4;

// Seed derivation labels; each sub-run gets an independent stream family.
const SEED_ENGINE: u64 = 1;
const SEED_COUNTING: u64 = 2;
const SEED_CHSH: u64 = 3;
const SEED_SWEEP: u64 = 4;
const SEED_CRITICAL: u64 = 5;
const SEED_ORACLE_BASE: u64 = 100;

/// CLI failure carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or command line input; exit code 2.
    Config(String),
    /// IO or internal failure while running; exit code 3.
    Runtime(String),
    /// Too few events survived to form the requested estimate; exit code 4.
    InsufficientData(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::InsufficientData(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Runtime(msg) | CliError::InsufficientData(msg) => {
                f.write_str(msg)
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::InsufficientData(msg) => CliError::InsufficientData(format!("insufficient data: {msg}")),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(err: crate::config::ConfigError) -> Self {
        CliError::Config(err.message().to_string())
    }
}

/// Command line state shared by every subcommand.
#[derive(Clone, Debug)]
pub struct GlobalOpts {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub workers: usize,
    pub quiet: bool,
}

impl GlobalOpts {
    fn resolve_seed(&self, cfg: Option<&ExperimentConfig>) -> u64 {
        self.seed.unwrap_or_else(|| cfg.map_or(0, |c| c.seed))
    }

    fn resolve_trials(&self, cfg: Option<&ExperimentConfig>, fallback: u64) -> u64 {
        self.trials.unwrap_or_else(|| cfg.map_or(fallback, |c| c.n_trials))
    }
}

/// What a command produced, for the caller to print.
#[derive(Debug, Default)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    /// Set when the command ran to completion but its consistency check
    /// failed; the report stays on disk and the process exits nonzero.
    pub check_failed: bool,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    crate::config::parse_config(&text).map_err(CliError::from)
}

/// Order-preserving parallel chunk mapper. The core merges chunk outputs in
/// range order, so worker count changes wall time only, never the numbers.
pub struct RayonMapper {
    pool: rayon::ThreadPool,
}

impl RayonMapper {
    /// `workers == 0` lets the library pick a thread count.
    pub fn new(workers: usize) -> Result<Self, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map(|pool| Self { pool })
            .map_err(|e| CliError::Runtime(format!("cannot build worker pool: {e}")))
    }
}

impl TrialMapper for RayonMapper {
    fn map_chunks(
        &self,
        ranges: &[TrialRange],
        eval: &(dyn Fn(TrialRange) -> ChunkOutput + Sync),
    ) -> Vec<ChunkOutput> {
        self.pool.install(|| ranges.par_iter().map(|&r| eval(r)).collect())
    }
}

/// Output directory session: atomic writes, digests, manifest, and cleanup
/// of everything written if the run fails partway.
pub struct Workspace {
    out_dir: PathBuf,
    written: Vec<(PathBuf, OutputDigest)>,
    started_at: String,
}

impl Workspace {
    pub fn create(out_dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir).map_err(|e| {
            CliError::Runtime(format!("cannot create output directory {}: {e}", out_dir.display()))
        })?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            written: Vec::new(),
            started_at: manifest::rfc3339_now(),
        })
    }

    pub fn write_output(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(name);
        self.write_at(path.clone(), name.to_string(), bytes)?;
        Ok(path)
    }

    /// Writes to a caller-chosen path (trial logs); still tracked for the
    /// manifest and for cleanup.
    pub fn write_output_at(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        self.write_at(path.to_path_buf(), path.display().to_string(), bytes)
    }

    fn write_at(&mut self, path: PathBuf, label: String, bytes: &[u8]) -> Result<(), CliError> {
        let parent = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| {
            CliError::Runtime(format!("cannot create directory {}: {e}", parent.display()))
        })?;
        let file_name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| String::from("output"));
        let tmp = parent.join(format!(".{file_name}.{}.tmp", process::id()));
        fs::write(&tmp, bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", tmp.display())))?;
        if let Err(e) = fs::rename(&tmp, &path) {
            let _ = fs::remove_file(&tmp);
            return Err(CliError::Runtime(format!(
                "cannot move {} into place: {e}",
                path.display()
            )));
        }
        self.written.push((
            path,
            OutputDigest {
                file: label,
                bytes: bytes.len() as u64,
                sha256: manifest::sha256_hex(bytes),
            },
        ));
        Ok(())
    }

    /// Writes the manifest and returns every path the run produced.
    pub fn finish(
        mut self,
        command: &str,
        cfg: Option<&ExperimentConfig>,
        seed: u64,
        n_trials: u64,
        workers: usize,
    ) -> Result<Vec<PathBuf>, CliError> {
        let digests: Vec<OutputDigest> = self.written.iter().map(|(_, d)| d.clone()).collect();
        let man = RunManifest {
            manifest_version: MANIFEST_VERSION,
            tool_name: "wigbell",
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            n_trials,
            workers,
            started_at: self.started_at.clone(),
            finished_at: manifest::rfc3339_now(),
            config: cfg,
            outputs: &digests,
        };
        let bytes = match to_json_bytes(&man) {
            Ok(b) => b,
            Err(e) => {
                self.discard();
                return Err(e);
            }
        };
        match self.write_output(MANIFEST_FILE, &bytes) {
            Ok(_) => Ok(self.written.into_iter().map(|(p, _)| p).collect()),
            Err(e) => {
                self.discard();
                Err(e)
            }
        }
    }

    /// Removes everything written so far; used when a later step fails.
    pub fn discard(&self) {
        for (path, _) in &self.written {
            let _ = fs::remove_file(path);
        }
    }
}

fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize report: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[derive(Serialize)]
struct OracleSection {
    p_a: f64,
    p_b: f64,
    p_joint: f64,
    intensity_a: f64,
    intensity_b: f64,
    intensity_product: f64,
    intensity_correlation: f64,
    expected_singles_rate_a: f64,
    expected_singles_rate_b: f64,
    expected_coincidence_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_heralded_ratio: Option<f64>,
    expected_count_product_gap: f64,
}

impl OracleSection {
    fn new(p: &OraclePrediction, mu: f64) -> Self {
        Self {
            p_a: p.p_a,
            p_b: p.p_b,
            p_joint: p.p_joint,
            intensity_a: p.intensity_a,
            intensity_b: p.intensity_b,
            intensity_product: p.intensity_product,
            intensity_correlation: p.lambda,
            expected_singles_rate_a: mu * p.p_a,
            expected_singles_rate_b: mu * p.p_b,
            expected_coincidence_rate: mu * mu * p.p_joint,
            expected_heralded_ratio: (p.p_b > 0.0).then(|| mu * p.p_joint / p.p_b),
            expected_count_product_gap: mu * mu * (p.p_joint - p.p_a * p.p_b),
        }
    }
}

#[derive(Serialize)]
struct CountsSection {
    trials: u64,
    n_a: u64,
    n_b: u64,
    n_ab: u64,
    singles_rate_a: Estimate,
    singles_rate_b: Estimate,
    coincidence_rate: Estimate,
    heralded_ratio: Estimate,
    heralded_gap: Estimate,
    count_product_gap: Estimate,
}

impl CountsSection {
    fn new(table: &CountTable) -> Result<Self, CliError> {
        Ok(Self {
            trials: table.trials,
            n_a: table.n_a,
            n_b: table.n_b,
            n_ab: table.n_ab,
            singles_rate_a: table.singles_rate_a(),
            singles_rate_b: table.singles_rate_b(),
            coincidence_rate: table.coincidence_rate(),
            heralded_ratio: table.heralded_ratio()?,
            heralded_gap: table.heralded_gap()?,
            count_product_gap: table.product_gap(),
        })
    }
}

#[derive(Serialize)]
struct ChshSection<'a> {
    trials_per_pair: u64,
    /// Correlator order within each estimate.
    pair_order: [&'static str; 4],
    coincidence_only: &'a ChshEstimate,
    full_ensemble_assign_minus: &'a ChshEstimate,
}

const PAIR_ORDER: [&str; 4] = ["(a,b)", "(a,b')", "(a',b)", "(a',b')"];

#[derive(Serialize)]
struct SimulateReport<'a> {
    report_version: &'static str,
    name: &'a str,
    mu: f64,
    n_trials: u64,
    seed: u64,
    /// Unit-efficiency Monte Carlo statistics at the primary settings.
    detection: &'a PairStatistics,
    /// Deterministic quadrature predictions and the count rates they imply.
    oracle: OracleSection,
    /// Thinned counting run at efficiency `mu`.
    counts: CountsSection,
    chsh: ChshSection<'a>,
}

pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    opts: &GlobalOpts,
    trial_log: Option<&Path>,
) -> Result<CommandOutput, CliError> {
    let seed = opts.resolve_seed(Some(cfg));
    let trials = opts.resolve_trials(Some(cfg), cfg.n_trials);
    let mapper = RayonMapper::new(opts.workers)?;
    let mu = cfg.resolved_mu();

    let exp = cfg.counting_experiment()?;
    let detection = engine::estimate_pair(&exp, derive_seed(seed, SEED_ENGINE), trials, &mapper)?;
    let prediction = quadrature::predict(&exp, &QuadratureSettings::default())?;

    let counting_seed = derive_seed(seed, SEED_COUNTING);
    let efficiency = cfg.efficiency()?;
    let (table, log) = if trial_log.is_some() {
        let (table, log) =
            counting::run_counting_with_log(&exp, efficiency, counting_seed, trials, &mapper)?;
        (table, Some(log))
    } else {
        (counting::run_counting(&exp, efficiency, counting_seed, trials, &mapper)?, None)
    };

    let setup = cfg.chsh_setup(mu)?;
    let chsh_seed = derive_seed(seed, SEED_CHSH);
    let coincidence =
        bell::run_chsh(&setup, PostSelectionPolicy::CoincidenceOnly, chsh_seed, trials, &mapper)?;
    let full_ensemble = bell::run_chsh(
        &setup,
        PostSelectionPolicy::FullEnsembleAssignMinus,
        chsh_seed,
        trials,
        &mapper,
    )?;

    let report = SimulateReport {
        report_version: "1",
        name: &cfg.name,
        mu,
        n_trials: trials,
        seed,
        detection: &detection,
        oracle: OracleSection::new(&prediction, mu),
        counts: CountsSection::new(&table)?,
        chsh: ChshSection {
            trials_per_pair: trials,
            pair_order: PAIR_ORDER,
            coincidence_only: &coincidence,
            full_ensemble_assign_minus: &full_ensemble,
        },
    };
    let bytes = to_json_bytes(&report)?;

    let mut ws = Workspace::create(&opts.out_dir)?;
    let write_result = (|| -> Result<(), CliError> {
        ws.write_output(SIMULATE_FILE, &bytes)?;
        if let (Some(path), Some(log)) = (trial_log, log.as_ref()) {
            ws.write_output_at(path, log)?;
        }
        Ok(())
    })();
    if let Err(e) = write_result {
        ws.discard();
        return Err(e);
    }
    let files = ws.finish("simulate", Some(cfg), seed, trials, opts.workers)?;

    let summary = vec![
        format!(
            "S ({}) = {:.4} +/- {:.4}",
            coincidence.policy.label(),
            coincidence.s.value,
            coincidence.s.stderr
        ),
        format!(
            "S ({}) = {:.4} +/- {:.4}",
            full_ensemble.policy.label(),
            full_ensemble.s.value,
            full_ensemble.s.stderr
        ),
        format!(
            "counts: {} trials, n_a = {}, n_b = {}, n_ab = {}",
            table.trials, table.n_a, table.n_b, table.n_ab
        ),
    ];
    Ok(CommandOutput { files, summary, check_failed: false })
}

pub fn cmd_sweep(cfg: &ExperimentConfig, opts: &GlobalOpts) -> Result<CommandOutput, CliError> {
    let grid = cfg
        .mu_grid
        .clone()
        .ok_or_else(|| CliError::Config("config error: sweep needs \"mu_grid\" in the config".into()))?;
    let seed = opts.resolve_seed(Some(cfg));
    let trials = opts.resolve_trials(Some(cfg), cfg.n_trials);
    let mapper = RayonMapper::new(opts.workers)?;

    let setup = cfg.chsh_setup(1.0)?;
    let rows = bell::efficiency_sweep(
        &setup,
        cfg.policy,
        &grid,
        derive_seed(seed, SEED_SWEEP),
        trials,
        &mapper,
    )?;

    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        let est = &row.estimate;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.mu,
            est.correlators[0].value,
            est.correlators[1].value,
            est.correlators[2].value,
            est.correlators[3].value,
            est.s.value,
            est.s.stderr,
            est.policy.label()
        ));
    }

    let mut ws = Workspace::create(&opts.out_dir)?;
    if let Err(e) = ws.write_output(SWEEP_FILE, csv.as_bytes()) {
        ws.discard();
        return Err(e);
    }
    let files = ws.finish("sweep", Some(cfg), seed, trials, opts.workers)?;

    let summary = vec![format!(
        "swept {} efficiencies under {}",
        rows.len(),
        cfg.policy.label()
    )];
    Ok(CommandOutput { files, summary, check_failed: false })
}

#[derive(Clone, Copy, Debug)]
pub struct CriticalMuArgs {
    pub threshold: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub s_tol: f64,
    pub mu_tol: f64,
}

#[derive(Serialize)]
struct CriticalMuReport<'a> {
    report_version: &'static str,
    name: &'a str,
    policy: &'static str,
    threshold: f64,
    bracket_lo: f64,
    bracket_hi: f64,
    s_tol: f64,
    mu_tol: f64,
    trials_per_pair: u64,
    seed: u64,
    result: bell::CriticalMuResult,
}

pub fn cmd_critical_mu(
    cfg: &ExperimentConfig,
    opts: &GlobalOpts,
    args: &CriticalMuArgs,
) -> Result<CommandOutput, CliError> {
    let seed = opts.resolve_seed(Some(cfg));
    let trials = opts.resolve_trials(Some(cfg), cfg.n_trials);
    let mapper = RayonMapper::new(opts.workers)?;
    let run_seed = derive_seed(seed, SEED_CRITICAL);
    let policy = cfg.policy;

    // Every probe reuses the same seed, so the efficiency sweep is coupled
    // pathwise and the bisection sees a clean monotone signal.
    let result = bell::find_critical_mu(
        |mu| {
            let setup = cfg
                .chsh_setup(mu)
                .map_err(|e| CoreError::InvalidSpec(e.message().into()))?;
            bell::run_chsh(&setup, policy, run_seed, trials, &mapper).map(|est| est.s)
        },
        args.mu_lo,
        args.mu_hi,
        args.threshold,
        args.s_tol,
        args.mu_tol,
    )?;

    let report = CriticalMuReport {
        report_version: "1",
        name: &cfg.name,
        policy: policy.label(),
        threshold: args.threshold,
        bracket_lo: args.mu_lo,
        bracket_hi: args.mu_hi,
        s_tol: args.s_tol,
        mu_tol: args.mu_tol,
        trials_per_pair: trials,
        seed,
        result,
    };
    let bytes = to_json_bytes(&report)?;

    let mut ws = Workspace::create(&opts.out_dir)?;
    if let Err(e) = ws.write_output(CRITICAL_MU_FILE, &bytes) {
        ws.discard();
        return Err(e);
    }
    let files = ws.finish("critical-mu", Some(cfg), seed, trials, opts.workers)?;

    let summary = vec![match result {
        bell::CriticalMuResult::Crossing { mu, s_at_mu } => format!(
            "|S| crosses {} at mu = {:.4} (S = {:.4} +/- {:.4})",
            args.threshold, mu, s_at_mu.value, s_at_mu.stderr
        ),
        bell::CriticalMuResult::NoCrossing { s_lo, s_hi } => format!(
            "no crossing of {} in [{}, {}]: S = {:.4} and {:.4} at the ends",
            args.threshold, args.mu_lo, args.mu_hi, s_lo.value, s_hi.value
        ),
    }];
    Ok(CommandOutput { files, summary, check_failed: false })
}

#[derive(Serialize)]
struct CriticalEtaSection {
    target_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_crit: Option<f64>,
    status: &'static str,
}

#[derive(Serialize)]
struct LhvBoundReport {
    report_version: &'static str,
    bound: lhv::LhvBound,
    #[serde(skip_serializing_if = "Option::is_none")]
    critical: Option<CriticalEtaSection>,
}

pub fn cmd_lhv_bound(
    cfg: Option<&ExperimentConfig>,
    opts: &GlobalOpts,
    eta: f64,
    target_s: Option<f64>,
) -> Result<CommandOutput, CliError> {
    // Flag values are user input, so domain failures are config errors here.
    let as_config_err = |e: CoreError| CliError::Config(format!("config error: {e}"));

    let bound = lhv::lhv_max_postselected_s(eta, &CorrelatorTargets::Free).map_err(as_config_err)?;
    let critical = match target_s {
        None => None,
        Some(target) => Some(match lhv::critical_eta_oracle(target).map_err(as_config_err)? {
            CriticalEta::Critical(eta_crit) => {
                CriticalEtaSection { target_s: target, eta_crit: Some(eta_crit), status: "critical" }
            }
            CriticalEta::NeverViolated => {
                CriticalEtaSection { target_s: target, eta_crit: None, status: "never_violated" }
            }
            CriticalEta::Unreachable => {
                CriticalEtaSection { target_s: target, eta_crit: None, status: "unreachable" }
            }
        }),
    };

    let mut summary = vec![format!("local bound at eta = {}: max |S| = {:.6}", bound.eta, bound.max_s)];
    if let Some(section) = &critical {
        summary.push(match (section.eta_crit, section.status) {
            (Some(e), _) => format!("|S| = {} becomes reachable below eta_crit = {:.6}", section.target_s, e),
            (None, status) => format!("|S| = {}: {status}", section.target_s),
        });
    }

    let report = LhvBoundReport { report_version: "1", bound, critical };
    let bytes = to_json_bytes(&report)?;

    let seed = opts.resolve_seed(cfg);
    let mut ws = Workspace::create(&opts.out_dir)?;
    if let Err(e) = ws.write_output(LHV_BOUND_FILE, &bytes) {
        ws.discard();
        return Err(e);
    }
    let files = ws.finish("lhv-bound", cfg, seed, 0, opts.workers)?;

    Ok(CommandOutput { files, summary, check_failed: false })
}

#[derive(Serialize)]
struct SpecSummary {
    label: String,
    preset: &'static str,
    gain: f64,
    sigma0_sq: f64,
    angle_a_rad: f64,
    angle_b_rad: f64,
    detector_a: String,
    detector_b: String,
}

struct CheckSpec {
    summary: SpecSummary,
    exp: Experiment,
}

#[derive(Serialize)]
struct QuantityRow {
    name: &'static str,
    mc: f64,
    stderr: f64,
    oracle: f64,
    /// Distance in standard errors; omitted when the standard error is zero.
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    pass: bool,
}

#[derive(Serialize)]
struct OracleCheckRow {
    spec: SpecSummary,
    quantities: Vec<QuantityRow>,
    max_abs_sigma: f64,
}

#[derive(Serialize)]
struct OracleCheckReport {
    report_version: &'static str,
    seed: u64,
    trials_per_spec: u64,
    sigma_tolerance: f64,
    abs_slack: f64,
    rows: Vec<OracleCheckRow>,
    max_abs_sigma: f64,
    pass: bool,
}

fn quantity_row(name: &'static str, mc: Estimate, oracle: f64) -> QuantityRow {
    let diff = (mc.value - oracle).abs();
    let pass = diff <= ORACLE_SIGMA_TOL * mc.stderr + ORACLE_ABS_SLACK;
    let sigma = (mc.stderr > 0.0).then(|| diff / mc.stderr);
    QuantityRow { name, mc: mc.value, stderr: mc.stderr, oracle, sigma, pass }
}

fn compare_to_oracle(stats: &PairStatistics, oracle: &OraclePrediction) -> Vec<QuantityRow> {
    vec![
        quantity_row("p_a", stats.p_a, oracle.p_a),
        quantity_row("p_b", stats.p_b, oracle.p_b),
        quantity_row("p_joint", stats.p_joint, oracle.p_joint),
        quantity_row("intensity_a", stats.intensity_a, oracle.intensity_a),
        quantity_row("intensity_b", stats.intensity_b, oracle.intensity_b),
        // The oracle's product moment comes from the Gaussian moment
        // identity, so this row doubles as the cross-moment consistency
        // check.
        quantity_row("intensity_product", stats.intensity_product, oracle.intensity_product),
    ]
}

fn detector_label(det: &DetectorModel) -> String {
    format!("{det:?}")
}

fn config_check_spec(cfg: &ExperimentConfig) -> Result<CheckSpec, CliError> {
    let exp = cfg.counting_experiment()?;
    let preset = match cfg.source.preset {
        SourcePresetConfig::SingletLike => "singlet_like",
        SourcePresetConfig::Uncorrelated => "uncorrelated",
    };
    Ok(CheckSpec {
        summary: SpecSummary {
            label: "config".into(),
            preset,
            gain: cfg.source.gain.unwrap_or(0.0),
            sigma0_sq: cfg.sigma0_sq,
            angle_a_rad: exp.setting_a.angle(),
            angle_b_rad: exp.setting_b.angle(),
            detector_a: detector_label(&exp.detector_a),
            detector_b: detector_label(&exp.detector_b),
        },
        exp,
    })
}

fn default_check_spec() -> Result<CheckSpec, CliError> {
    let cfg = crate::config::parse_config(r#"{"source": {"preset": "singlet_like"}}"#)
        .map_err(CliError::from)?;
    let mut spec = config_check_spec(&cfg)?;
    spec.summary.label = "default_singlet".into();
    Ok(spec)
}

fn random_detector(rng: &mut ChaCha8Rng, sigma0_sq: f64) -> DetectorModel {
    match rng.gen_range(0u32..4) {
        0 => DetectorModel::DeterministicThreshold {
            baseline: sigma0_sq,
            threshold: rng.gen_range(0.2..1.5),
        },
        1 => DetectorModel::ProbabilisticLinear {
            baseline: sigma0_sq,
            threshold: rng.gen_range(0.05..0.8),
            saturation: rng.gen_range(0.5..2.5),
        },
        2 => DetectorModel::CommonModeCorrelated {
            baseline: sigma0_sq,
            threshold: rng.gen_range(0.05..0.8),
            saturation: rng.gen_range(0.5..2.5),
            rho: rng.gen_range(-0.6..0.9),
        },
        _ => DetectorModel::Constant { value: rng.gen_range(0.15..0.9) },
    }
}

fn random_check_spec(rng: &mut ChaCha8Rng, index: u32) -> Result<CheckSpec, CliError> {
    let sigma0_sq = rng.gen_range(0.3..0.8);
    let singlet = rng.gen_range(0u32..5) < 4;
    let gain = if singlet { rng.gen_range(0.2..1.1) } else { 0.0 };
    let source = if singlet {
        SourceTransform::singlet_like(gain).map_err(CliError::from)?
    } else {
        SourceTransform::uncorrelated()
    };
    let angle_a = rng.gen_range(0.0..std::f64::consts::PI);
    let angle_b = rng.gen_range(0.0..std::f64::consts::PI);
    let detector_a = random_detector(rng, sigma0_sq);
    let detector_b = random_detector(rng, sigma0_sq);
    let exp = Experiment {
        source,
        vacuum: VacuumDistribution::new(ModeSet::source_only(), sigma0_sq).map_err(CliError::from)?,
        setting_a: PolarizerSetting::new(angle_a).map_err(CliError::from)?,
        setting_b: PolarizerSetting::new(angle_b).map_err(CliError::from)?,
        detector_a,
        detector_b,
    };
    Ok(CheckSpec {
        summary: SpecSummary {
            label: format!("random_{index}"),
            preset: if singlet { "singlet_like" } else { "uncorrelated" },
            gain,
            sigma0_sq,
            angle_a_rad: angle_a,
            angle_b_rad: angle_b,
            detector_a: detector_label(&exp.detector_a),
            detector_b: detector_label(&exp.detector_b),
        },
        exp,
    })
}

pub fn cmd_oracle_check(
    cfg: Option<&ExperimentConfig>,
    opts: &GlobalOpts,
    random_specs: u32,
) -> Result<CommandOutput, CliError> {
    let seed = opts.resolve_seed(cfg);
    let trials = opts.resolve_trials(cfg, DEFAULT_CHECK_TRIALS);
    let mapper = RayonMapper::new(opts.workers)?;

    let mut specs = vec![match cfg {
        Some(cfg) => config_check_spec(cfg)?,
        None => default_check_spec()?,
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SEED_ORACLE_BASE));
    for k in 0..random_specs {
        specs.push(random_check_spec(&mut rng, k)?);
    }

    let mut rows = Vec::with_capacity(specs.len());
    let mut max_abs_sigma = 0.0f64;
    let mut pass = true;
    for (k, spec) in specs.into_iter().enumerate() {
        let stats = engine::estimate_pair(
            &spec.exp,
            derive_seed(seed, SEED_ORACLE_BASE + 1 + k as u64),
            trials,
            &mapper,
        )?;
        let oracle = quadrature::predict(&spec.exp, &QuadratureSettings::default())?;
        let quantities = compare_to_oracle(&stats, &oracle);
        let row_max = quantities.iter().filter_map(|q| q.sigma).fold(0.0f64, f64::max);
        pass &= quantities.iter().all(|q| q.pass);
        max_abs_sigma = max_abs_sigma.max(row_max);
        rows.push(OracleCheckRow { spec: spec.summary, quantities, max_abs_sigma: row_max });
    }

    let report = OracleCheckReport {
        report_version: "1",
        seed,
        trials_per_spec: trials,
        sigma_tolerance: ORACLE_SIGMA_TOL,
        abs_slack: ORACLE_ABS_SLACK,
        rows,
        max_abs_sigma,
        pass,
    };
    let bytes = to_json_bytes(&report)?;

    let mut ws = Workspace::create(&opts.out_dir)?;
    if let Err(e) = ws.write_output(ORACLE_CHECK_FILE, &bytes) {
        ws.discard();
        return Err(e);
    }
    let files = ws.finish("oracle-check", cfg, seed, trials, opts.workers)?;

    let summary = vec![format!(
        "{} specs checked, max |sigma| = {:.3}, pass = {}",
        report.rows.len(),
        max_abs_sigma,
        pass
    )];
    Ok(CommandOutput { files, summary, check_failed: !pass })
}
