//! Run manifest: enough provenance to re-run a command and verify that the
//! files on disk are the ones it produced.
//!
//! Timestamps live only here; report files carry none, so a rerun with the
//! same config and seed reproduces them byte for byte.

use serde::Serialize;
use sha2::{Digest, Sha256};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::config::ExperimentConfig;

pub const MANIFEST_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Digest of one file the run wrote.
#[derive(Clone, Debug, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub manifest_version: &'static str,
    pub tool_name: &'static str,
    pub tool_version: &'static str,
    pub command: &'a str,
    /// Seed actually used, after any command line override.
    pub seed: u64,
    /// Trials actually used, after any command line override.
    pub n_trials: u64,
    /// Worker threads requested; 0 means the library default. Worker count
    /// never changes the numbers, only the wall time.
    pub workers: usize,
    pub started_at: String,
    pub finished_at: String,
    /// Fully resolved configuration (defaults materialized), or null for
    /// commands that run without one.
    pub config: Option<&'a ExperimentConfig>,
    pub outputs: &'a [OutputDigest],
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn rfc3339_now() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_else(|_| String::from("unknown"))
}
