use std::collections::HashSet;
use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{concrete_mask, Interpretation, SourceMask};
use crate::miner::{DualMiner, DualOptions, MineError, MonoMiner, MonoOutcome};
use std::sync::Arc;

use crate::model::{ChatModel, ChatSettings, CountingClient, ModelClient};
use crate::predicate::{JudgeFallback, OutputPredicate, PredicatePair};

use super::hotpot::{build_source_set, HotpotExample};
use super::BenchError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveOptions {
    pub ks: RangeInclusive<usize>,
    /// Examples processed concurrently.
    pub parallel_examples: bool,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            ks: 0..=6,
            parallel_examples: false,
        }
    }
}

/// Measurements for one example at one lattice width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRun {
    pub example_id: String,
    pub n: usize,
    pub mono_retention_evaluated: usize,
    pub mono_omission_evaluated: usize,
    pub retention_rules: usize,
    pub omission_rules: usize,
    /// Nodes Dual evaluated under at least one interpretation.
    pub dual_visited: usize,
    /// Calls the cached Dual run sent to the model.
    pub dual_calls: usize,
    pub dual_duplicate_calls: usize,
    /// Concrete inputs evaluated by both Mono runs.
    pub two_mono_duplicates: usize,
    pub dual_matches_mono: bool,
}

/// Per-width averages, one row per plotted point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeMetrics {
    pub n: usize,
    pub examples: usize,
    /// Evaluated nodes over `2^n`, retention Mono.
    pub mono_retention_explored: f64,
    pub mono_omission_explored: f64,
    /// Nodes visited at least once over `2^n`, cached Dual.
    pub dual_explored: f64,
    pub retention_rule_fraction: f64,
    pub omission_rule_fraction: f64,
    /// Evaluations over `2 * 2^n`.
    pub two_mono_evaluated: f64,
    pub dual_evaluated: f64,
    /// Repeated concrete inputs over `2 * 2^n`.
    pub two_mono_duplicate_fraction: f64,
    pub duplicate_subset_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub example_id: String,
    pub interpretation: Interpretation,
    pub valid_rules: usize,
    pub visited: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRun {
    pub example_id: String,
    pub n: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub metrics: Vec<LatticeMetrics>,
    pub runs: Vec<ExampleRun>,
    /// Per-example points at the widest lattice.
    pub scatter: Vec<ScatterPoint>,
    pub excluded: Vec<ExcludedRun>,
}

/// Answer correctness for retention and its complement for omission, judged
/// by `chat` whenever the gold answer is not quoted verbatim.
pub fn hotpot_predicates(
    example: &HotpotExample,
    chat: &Arc<dyn ChatModel>,
    judge: &ChatSettings,
) -> PredicatePair {
    let correct = OutputPredicate::JudgeFallback(JudgeFallback::new(
        example.answer.clone(),
        chat.clone(),
        judge.clone(),
    ));
    PredicatePair {
        retention: correct.clone(),
        omission: correct.negate(),
    }
}

fn concrete_evaluated(run: &MonoOutcome) -> HashSet<SourceMask> {
    run.trace
        .iter()
        .flatten()
        .flat_map(|level| level.evaluated.iter())
        .map(|&node| concrete_mask(node, run.interpretation))
        .collect()
}

fn run_one(
    example: &HotpotExample,
    k: usize,
    client: &dyn ModelClient,
    predicates: &PredicatePair,
) -> Result<ExampleRun, BenchError> {
    let input = build_source_set(example, k)?;
    let mono_ret = MonoMiner::new(&input, &predicates.retention, client, Interpretation::Retention)
        .trace(true)
        .run()?;
    let mono_omi = MonoMiner::new(&input, &predicates.omission, client, Interpretation::Omission)
        .trace(true)
        .run()?;
    let counted = CountingClient::new(client);
    let dual = DualMiner::new(&input, predicates, &counted)
        .options(DualOptions {
            cache: true,
            ..Default::default()
        })
        .run()?;

    let ret_inputs = concrete_evaluated(&mono_ret);
    let omi_inputs = concrete_evaluated(&mono_omi);
    Ok(ExampleRun {
        example_id: example.id.clone(),
        n: k,
        mono_retention_evaluated: mono_ret.telemetry.nodes_evaluated(),
        mono_omission_evaluated: mono_omi.telemetry.nodes_evaluated(),
        retention_rules: mono_ret.valid.len(),
        omission_rules: mono_omi.valid.len(),
        dual_visited: dual.telemetry.nodes_visited(),
        dual_calls: counted.calls(),
        dual_duplicate_calls: counted.duplicate_calls(),
        two_mono_duplicates: ret_inputs.intersection(&omi_inputs).count(),
        dual_matches_mono: dual.retention.valid == mono_ret.valid
            && dual.omission.valid == mono_omi.valid,
    })
}

fn aggregate(n: usize, runs: &[&ExampleRun]) -> LatticeMetrics {
    let lattice = (n as f64).exp2();
    let count = runs.len() as f64;
    let mean = |f: &dyn Fn(&ExampleRun) -> usize, denom: f64| {
        runs.iter().map(|r| f(r) as f64 / denom).sum::<f64>() / count
    };
    LatticeMetrics {
        n,
        examples: runs.len(),
        mono_retention_explored: mean(&|r| r.mono_retention_evaluated, lattice),
        mono_omission_explored: mean(&|r| r.mono_omission_evaluated, lattice),
        dual_explored: mean(&|r| r.dual_visited, lattice),
        retention_rule_fraction: mean(&|r| r.retention_rules, lattice),
        omission_rule_fraction: mean(&|r| r.omission_rules, lattice),
        two_mono_evaluated: mean(
            &|r| r.mono_retention_evaluated + r.mono_omission_evaluated,
            2.0 * lattice,
        ),
        dual_evaluated: mean(&|r| r.dual_calls, 2.0 * lattice),
        two_mono_duplicate_fraction: mean(&|r| r.two_mono_duplicates, 2.0 * lattice),
        duplicate_subset_fraction: mean(&|r| r.dual_duplicate_calls, 2.0 * lattice),
    }
}

/// Runs both Mono interpretations and a cached Dual for every example and width.
///
/// Failing runs are recorded in `excluded` and do not contribute to averages.
pub fn run_curves<P>(
    examples: &[HotpotExample],
    client: &dyn ModelClient,
    predicates: P,
    options: &CurveOptions,
) -> CurveReport
where
    P: Fn(&HotpotExample) -> PredicatePair + Sync,
{
    let jobs: Vec<(usize, &HotpotExample)> = options
        .ks
        .clone()
        .flat_map(|k| examples.iter().map(move |ex| (k, ex)))
        .collect();
    let work = |&(k, ex): &(usize, &HotpotExample)| {
        let pair = predicates(ex);
        (k, ex.id.clone(), run_one(ex, k, client, &pair))
    };
    let results: Vec<_> = if options.parallel_examples {
        jobs.par_iter().map(work).collect()
    } else {
        jobs.iter().map(work).collect()
    };

    let mut runs = Vec::new();
    let mut excluded = Vec::new();
    for (k, id, result) in results {
        match result {
            Ok(run) => runs.push(run),
            Err(err) => {
                let error = match &err {
                    BenchError::Mine(MineError::Aborted { mask, .. })
                    | BenchError::Mine(MineError::DualAborted { mask, .. }) => {
                        format!("{err} (node {:?})", mask.indices())
                    }
                    _ => err.to_string(),
                };
                warn!("excluding example {id} at n = {k}: {error}");
                excluded.push(ExcludedRun {
                    example_id: id,
                    n: k,
                    error,
                });
            }
        }
    }

    let metrics = options
        .ks
        .clone()
        .filter_map(|k| {
            let at_k: Vec<&ExampleRun> = runs.iter().filter(|r| r.n == k).collect();
            (!at_k.is_empty()).then(|| aggregate(k, &at_k))
        })
        .collect();
    let widest = runs.iter().map(|r| r.n).max();
    let scatter = runs
        .iter()
        .filter(|r| Some(r.n) == widest)
        .flat_map(|r| {
            [
                ScatterPoint {
                    example_id: r.example_id.clone(),
                    interpretation: Interpretation::Retention,
                    valid_rules: r.retention_rules,
                    visited: r.mono_retention_evaluated,
                },
                ScatterPoint {
                    example_id: r.example_id.clone(),
                    interpretation: Interpretation::Omission,
                    valid_rules: r.omission_rules,
                    visited: r.mono_omission_evaluated,
                },
            ]
        })
        .collect();

    CurveReport {
        metrics,
        runs,
        scatter,
        excluded,
    }
}

pub const EXPLORED_HEADER: &str = "k,examples,mono_retention_explored,mono_omission_explored,dual_explored";
pub const RULE_FRACTION_HEADER: &str = "k,examples,retention_rule_fraction,omission_rule_fraction";
pub const CALLS_HEADER: &str =
    "k,examples,two_mono_evaluated,dual_evaluated,two_mono_duplicate_fraction,dual_duplicate_fraction";
pub const SCATTER_HEADER: &str = "example_id,interpretation,valid_rules,visited";

/// Writes `fig4a.csv`, `fig4b.csv`, `fig5.csv`, `fig6b.csv` and `curves.json`.
pub fn write_curve_files(dir: &Path, report: &CurveReport) -> Result<(), BenchError> {
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| BenchError::Write {
            path: path.display().to_string(),
            source,
        })
    };
    fs::create_dir_all(dir).map_err(|source| BenchError::Write {
        path: dir.display().to_string(),
        source,
    })?;

    let mut explored = format!("{EXPLORED_HEADER}\n");
    let mut fractions = format!("{RULE_FRACTION_HEADER}\n");
    let mut calls = format!("{CALLS_HEADER}\n");
    for m in &report.metrics {
        explored.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            m.n, m.examples, m.mono_retention_explored, m.mono_omission_explored, m.dual_explored
        ));
        fractions.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            m.n, m.examples, m.retention_rule_fraction, m.omission_rule_fraction
        ));
        calls.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            m.n,
            m.examples,
            m.two_mono_evaluated,
            m.dual_evaluated,
            m.two_mono_duplicate_fraction,
            m.duplicate_subset_fraction
        ));
    }
    let mut scatter = format!("{SCATTER_HEADER}\n");
    for p in &report.scatter {
        scatter.push_str(&format!(
            "{},{},{},{}\n",
            p.example_id, p.interpretation, p.valid_rules, p.visited
        ));
    }
    write("fig4a.csv", explored)?;
    write("fig4b.csv", fractions)?;
    write("fig5.csv", calls)?;
    write("fig6b.csv", scatter)?;
    write(
        "curves.json",
        serde_json::to_string_pretty(report).expect("report serializes") + "\n",
    )
}
