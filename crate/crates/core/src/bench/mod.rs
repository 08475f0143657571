//! Experiment harnesses: the exhaustive synthetic sweep and the HotpotQA
//! pruning curves, with CSV/JSON emission shaped for plotting.

mod curves;
mod hotpot;
mod sweep;

use std::io;

use thiserror::Error;

use crate::lattice::LatticeError;
use crate::miner::MineError;

pub use curves::{
    hotpot_predicates, run_curves, CALLS_HEADER, EXPLORED_HEADER, RULE_FRACTION_HEADER, SCATTER_HEADER, write_curve_files, CurveOptions, CurveReport, ExampleRun, ExcludedRun,
    LatticeMetrics, ScatterPoint,
};
pub use hotpot::{build_source_set, load_hotpot, HotpotExample, HotpotLoad, SkippedExample};
pub use sweep::{sweep_csv, sweep_points, synth_sweep, write_sweep_csv, SweepPoint, SweepRow, MAX_SWEEP_WIDTH};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("sweep over width {0} refused: 2^(2^n) assignments is intractable beyond n = {MAX_SWEEP_WIDTH}")]
    SweepTooWide(usize),
    #[error("requested {requested} sources but the example only has {available} sentences")]
    NotEnoughSentences { requested: usize, available: usize },
    #[error("miner disagreed with the oracle on assignment {assignment:#x}")]
    OracleMismatch { assignment: u64 },
    #[error("failed to read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("dataset {path} is not a JSON array of examples: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Mine(#[from] MineError),
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: io::Error,
    },
}
