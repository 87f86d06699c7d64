//! Deterministic trial execution.
//!
//! Monte Carlo runs are split into fixed-size chunks of consecutive trial
//! indices. A [`TrialMapper`] evaluates chunks (possibly concurrently and
//! out of order) and returns the per-chunk outputs in chunk order. Because
//! every trial derives its randomness from its own index via counter-based
//! streams, and because callers fold the outputs sequentially, results are
//! bitwise independent of how many workers evaluated the chunks.

use alloc::vec::Vec;

/// Number of consecutive trials evaluated per chunk. Fixed so that chunk
/// boundaries, and therefore merge order, never depend on worker count.
pub const TRIAL_CHUNK: u64 = 16_384;

/// Half-open range of trial indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialRange {
    pub start: u64,
    pub end: u64,
}

impl TrialRange {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn iter(&self) -> core::ops::Range<u64> {
        self.start..self.end
    }
}

/// Splits `[0, trials)` into consecutive chunks of at most [`TRIAL_CHUNK`].
pub fn chunk_ranges(trials: u64) -> Vec<TrialRange> {
    let mut out = Vec::with_capacity(((trials + TRIAL_CHUNK - 1) / TRIAL_CHUNK) as usize);
    let mut start = 0;
    while start < trials {
        let end = (start + TRIAL_CHUNK).min(trials);
        out.push(TrialRange { start, end });
        start = end;
    }
    out
}

/// Output of evaluating one chunk of trials: floating-point accumulator
/// sums, exact integer counts, and an optional byte stream of per-trial
/// records. Unused sections stay empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChunkOutput {
    pub sums: Vec<f64>,
    pub counts: Vec<u64>,
    pub bytes: Vec<u8>,
}

/// Strategy for evaluating independent chunks of trials.
///
/// Implementations must call `eval` exactly once per range and return the
/// outputs indexed like `ranges`, but may evaluate them in any order or
/// concurrently.
pub trait TrialMapper: Sync {
    fn map_chunks(
        &self,
        ranges: &[TrialRange],
        eval: &(dyn Fn(TrialRange) -> ChunkOutput + Sync),
    ) -> Vec<ChunkOutput>;
}

/// Evaluates chunks one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct SerialMapper;

impl TrialMapper for SerialMapper {
    fn map_chunks(
        &self,
        ranges: &[TrialRange],
        eval: &(dyn Fn(TrialRange) -> ChunkOutput + Sync),
    ) -> Vec<ChunkOutput> {
        ranges.iter().map(|&r| eval(r)).collect()
    }
}
