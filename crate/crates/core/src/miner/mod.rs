//! Level-wise lattice miners.
//!
//! Both miners walk the lattice top-down, from the full mask to the empty
//! mask. A node is only sent to the model when none of its parents is known
//! to be invalid; a failing node invalidates its whole down-set, which is
//! propagated one level at a time through an invalid frontier.

mod dual;
mod mono;

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Interpretation, LatticeError, SourceMask};
use crate::model::ModelError;
use crate::predicate::PredicateError;

pub use dual::{
    mine_dual, CacheStats, DualLevelTrace, DualMiner, DualOptions, DualOutcome, DualTelemetry,
    ResponseCache, SideOutcome,
};
pub use mono::{mine, MonoMiner, MonoOutcome};

/// Why a single node could not be judged.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("inference failed: {0}")]
    Model(#[from] ModelError),
    #[error("predicate evaluation failed: {0}")]
    Predicate(#[from] PredicateError),
}

#[derive(Debug, Error)]
pub enum MineError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error("{interpretation} mining aborted at node {mask}: {cause}")]
    Aborted {
        interpretation: Interpretation,
        mask: SourceMask,
        cause: EvalError,
        telemetry: Box<MineTelemetry>,
    },
    #[error("dual mining aborted at {interpretation} node {mask}: {cause}")]
    DualAborted {
        interpretation: Interpretation,
        mask: SourceMask,
        cause: EvalError,
        telemetry: Box<DualTelemetry>,
    },
}

impl MineError {
    /// The node whose evaluation failed, if the run got that far.
    pub fn failing_mask(&self) -> Option<SourceMask> {
        match self {
            MineError::Aborted { mask, .. } | MineError::DualAborted { mask, .. } => Some(*mask),
            _ => None,
        }
    }
}

/// Per-run counters for one interpretation.
///
/// Per-level vectors are indexed by level size `l` (number of implicated
/// sources), so they have `n + 1` entries. Levels that were never processed
/// because the search stopped early hold zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineTelemetry {
    pub width: usize,
    /// Inference requests issued for this interpretation.
    pub model_calls: usize,
    pub evaluated_per_level: Vec<usize>,
    pub pruned_per_level: Vec<usize>,
    pub levels_processed: usize,
    /// Level whose completion ended the search before level 0 was reached.
    pub early_terminated_at: Option<usize>,
    pub cache_hits: usize,
}

impl MineTelemetry {
    pub fn new(width: usize) -> Self {
        MineTelemetry {
            width,
            model_calls: 0,
            evaluated_per_level: vec![0; width + 1],
            pruned_per_level: vec![0; width + 1],
            levels_processed: 0,
            early_terminated_at: None,
            cache_hits: 0,
        }
    }

    pub fn nodes_evaluated(&self) -> usize {
        self.evaluated_per_level.iter().sum()
    }

    pub fn lattice_size(&self) -> f64 {
        (self.width as f64).exp2()
    }

    /// Evaluated nodes over `2^n`.
    pub fn proportion_explored(&self) -> f64 {
        self.nodes_evaluated() as f64 / self.lattice_size()
    }

    pub fn terminated_early(&self) -> bool {
        self.early_terminated_at.is_some()
    }
}

/// Nodes touched at one level of a mono run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelTrace {
    pub level: usize,
    pub pruned: Vec<SourceMask>,
    pub evaluated: Vec<SourceMask>,
    pub failed: Vec<SourceMask>,
}

/// Runs `f` over `items`, optionally on a worker pool, keeping input order.
///
/// The sequential path stops at the first error.
pub(crate) fn map_ordered<I, T, F>(
    pool: Option<&ThreadPool>,
    items: &[I],
    f: F,
) -> Result<Vec<T>, (usize, EvalError)>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T, EvalError> + Sync + Send,
{
    match pool {
        Some(pool) => pool.install(|| {
            items
                .par_iter()
                .enumerate()
                .map(|(i, item)| f(item).map_err(|e| (i, e)))
                .collect()
        }),
        None => items
            .iter()
            .enumerate()
            .map(|(i, item)| f(item).map_err(|e| (i, e)))
            .collect(),
    }
}

pub(crate) fn build_pool(parallelism: usize) -> Result<Option<ThreadPool>, MineError> {
    if parallelism <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map(Some)
        .map_err(|e| MineError::Pool(e.to_string()))
}
