use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::lattice::{
    children, concrete_mask, enumerate_level, minimal_rules, rules_from_valid, InputSet,
    Interpretation, Rule, SourceMask,
};
use crate::model::{ModelClient, ModelInput};
use crate::predicate::OutputPredicate;

use super::{build_pool, map_ordered, EvalError, LevelTrace, MineError, MineTelemetry};

/// Result of a single-interpretation run.
#[derive(Debug, Clone, PartialEq)]
pub struct MonoOutcome {
    pub interpretation: Interpretation,
    /// Every valid node, ascending.
    pub valid: Vec<SourceMask>,
    pub minimal: Vec<SourceMask>,
    pub telemetry: MineTelemetry,
    pub trace: Option<Vec<LevelTrace>>,
}

impl MonoOutcome {
    pub fn rules(&self) -> Vec<Rule> {
        rules_from_valid(self.interpretation, &self.valid)
    }
}

/// Top-down breadth-first miner for one rule interpretation.
pub struct MonoMiner<'a> {
    input: &'a InputSet,
    predicate: &'a OutputPredicate,
    client: &'a dyn ModelClient,
    interpretation: Interpretation,
    parallelism: usize,
    trace: bool,
}

impl<'a> MonoMiner<'a> {
    pub fn new(
        input: &'a InputSet,
        predicate: &'a OutputPredicate,
        client: &'a dyn ModelClient,
        interpretation: Interpretation,
    ) -> Self {
        MonoMiner {
            input,
            predicate,
            client,
            interpretation,
            parallelism: 1,
            trace: false,
        }
    }

    /// Worker threads used to evaluate the nodes of one level.
    pub fn parallelism(mut self, threads: usize) -> Self {
        self.parallelism = threads;
        self
    }

    /// Keep the per-level node lists in the outcome.
    pub fn trace(mut self, enabled: bool) -> Self {
        self.trace = enabled;
        self
    }

    fn judge(&self, node: SourceMask, calls: &AtomicUsize) -> Result<bool, EvalError> {
        let retained = concrete_mask(node, self.interpretation);
        let sources = self.input.select(retained).expect("mask width matches input");
        calls.fetch_add(1, Ordering::Relaxed);
        let output = self.client.infer(&ModelInput {
            retained,
            sources: &sources,
            context: self.input.context(),
        })?;
        Ok(self.predicate.evaluate(&output)?)
    }

    pub fn run(&self) -> Result<MonoOutcome, MineError> {
        let width = self.input.len();
        let pool = build_pool(self.parallelism)?;
        let calls = AtomicUsize::new(0);
        let mut telemetry = MineTelemetry::new(width);
        let mut trace = self.trace.then(Vec::new);
        let mut valid = Vec::new();
        // Invalid nodes of the previous level: failed or pruned.
        let mut frontier: HashSet<SourceMask> = HashSet::new();

        for level in (0..=width).rev() {
            let pruned: HashSet<SourceMask> =
                frontier.iter().flat_map(|&z| children(z)).collect();
            let candidates: Vec<SourceMask> = enumerate_level(width, level)?
                .filter(|m| !pruned.contains(m))
                .collect();

            let verdicts = map_ordered(pool.as_ref(), &candidates, |&m| self.judge(m, &calls));
            telemetry.model_calls = calls.load(Ordering::Relaxed);
            let verdicts = match verdicts {
                Ok(v) => v,
                Err((i, cause)) => {
                    telemetry.pruned_per_level[level] = pruned.len();
                    telemetry.evaluated_per_level[level] = i;
                    return Err(MineError::Aborted {
                        interpretation: self.interpretation,
                        mask: candidates[i],
                        cause,
                        telemetry: Box::new(telemetry),
                    });
                }
            };

            telemetry.levels_processed += 1;
            telemetry.evaluated_per_level[level] = candidates.len();
            telemetry.pruned_per_level[level] = pruned.len();

            let mut failed = Vec::new();
            let mut added = 0usize;
            for (&mask, ok) in candidates.iter().zip(verdicts) {
                if ok {
                    valid.push(mask);
                    added += 1;
                } else {
                    failed.push(mask);
                }
            }

            if let Some(trace) = trace.as_mut() {
                let mut pruned_sorted: Vec<_> = pruned.iter().copied().collect();
                pruned_sorted.sort_unstable();
                trace.push(LevelTrace {
                    level,
                    pruned: pruned_sorted,
                    evaluated: candidates.clone(),
                    failed: failed.clone(),
                });
            }

            // Nothing valid here means nothing valid below.
            if added == 0 {
                if level > 0 {
                    telemetry.early_terminated_at = Some(level);
                }
                break;
            }
            frontier = pruned;
            frontier.extend(failed);
        }

        valid.sort_unstable();
        let minimal = minimal_rules(&valid);
        Ok(MonoOutcome {
            interpretation: self.interpretation,
            valid,
            minimal,
            telemetry,
            trace,
        })
    }
}

pub fn mine(
    input: &InputSet,
    predicate: &OutputPredicate,
    client: &dyn ModelClient,
    interpretation: Interpretation,
) -> Result<MonoOutcome, MineError> {
    MonoMiner::new(input, predicate, client, interpretation).run()
}
