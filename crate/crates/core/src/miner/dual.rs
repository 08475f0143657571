use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::lattice::{
    children, concrete_mask, enumerate_level, minimal_rules, rules_from_valid, InputSet,
    Interpretation, Rule, SourceMask,
};
use crate::model::{ModelClient, ModelInput};
use crate::predicate::{OutputPredicate, PredicatePair};

use super::{build_pool, map_ordered, EvalError, MineError, MineTelemetry};

/// Model responses indexed by the canonical mask of the retained sources.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: HashMap<u64, String>,
    bytes: usize,
    max_bytes: Option<usize>,
    rejected: usize,
}

impl ResponseCache {
    pub fn new(max_bytes: Option<usize>) -> Self {
        ResponseCache {
            max_bytes,
            ..Default::default()
        }
    }

    pub fn get(&self, key: SourceMask) -> Option<&String> {
        self.entries.get(&key.bits())
    }

    /// Stores a response unless that would exceed the byte budget.
    pub fn insert(&mut self, key: SourceMask, response: String) -> bool {
        let size = response.len();
        let freed = self.entries.get(&key.bits()).map_or(0, String::len);
        if self.max_bytes.is_some_and(|cap| self.bytes - freed + size > cap) {
            self.rejected += 1;
            return false;
        }
        if let Some(old) = self.entries.insert(key.bits(), response) {
            self.bytes -= old.len();
        }
        self.bytes += size;
        true
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            entries: self.entries.len(),
            bytes: self.bytes,
            rejected_inserts: self.rejected,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: usize,
    pub rejected_inserts: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DualOptions {
    pub cache: bool,
    pub cache_max_bytes: Option<usize>,
    pub parallelism: usize,
    pub trace: bool,
}

/// Whole-run counters of a dual run; per-type counters live in each side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualTelemetry {
    pub width: usize,
    /// Calls that reached the model client.
    pub model_calls: usize,
    /// Requests answered from the response cache.
    pub cache_hits: usize,
    /// Nodes with at least one interpretation evaluated, per level.
    pub visited_per_level: Vec<usize>,
    /// Nodes invalid under both interpretations, per level.
    pub skipped_per_level: Vec<usize>,
    pub early_terminated_at: Option<usize>,
    pub cache: Option<CacheStats>,
}

impl DualTelemetry {
    fn new(width: usize, cache: bool) -> Self {
        DualTelemetry {
            width,
            model_calls: 0,
            cache_hits: 0,
            visited_per_level: vec![0; width + 1],
            skipped_per_level: vec![0; width + 1],
            early_terminated_at: None,
            cache: cache.then(CacheStats::default),
        }
    }

    pub fn nodes_visited(&self) -> usize {
        self.visited_per_level.iter().sum()
    }

    /// Nodes visited at least once over `2^n`.
    pub fn proportion_explored(&self) -> f64 {
        self.nodes_visited() as f64 / (self.width as f64).exp2()
    }
}

/// Rules and counters for one interpretation of a dual run.
#[derive(Debug, Clone, PartialEq)]
pub struct SideOutcome {
    pub interpretation: Interpretation,
    pub valid: Vec<SourceMask>,
    pub minimal: Vec<SourceMask>,
    pub telemetry: MineTelemetry,
}

impl SideOutcome {
    pub fn rules(&self) -> Vec<Rule> {
        rules_from_valid(self.interpretation, &self.valid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualLevelTrace {
    pub level: usize,
    pub retention_evaluated: Vec<SourceMask>,
    pub omission_evaluated: Vec<SourceMask>,
    pub skipped: Vec<SourceMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualOutcome {
    pub retention: SideOutcome,
    pub omission: SideOutcome,
    pub telemetry: DualTelemetry,
    pub trace: Option<Vec<DualLevelTrace>>,
}

struct Side {
    interpretation: Interpretation,
    active: bool,
    frontier: HashSet<SourceMask>,
    valid: Vec<SourceMask>,
    telemetry: MineTelemetry,
}

impl Side {
    fn new(interpretation: Interpretation, width: usize) -> Self {
        Side {
            interpretation,
            active: true,
            frontier: HashSet::new(),
            valid: Vec::new(),
            telemetry: MineTelemetry::new(width),
        }
    }

    fn finish(mut self) -> SideOutcome {
        self.valid.sort_unstable();
        SideOutcome {
            interpretation: self.interpretation,
            minimal: minimal_rules(&self.valid),
            valid: self.valid,
            telemetry: self.telemetry,
        }
    }
}

#[derive(Clone, Copy)]
struct Request {
    node: SourceMask,
    interpretation: Interpretation,
    key: SourceMask,
}

/// Breadth-first miner for retention and omission rules in one pass.
///
/// Each lattice node is read twice: as the retained set (retention) and as
/// the omitted set (omission). A node is skipped only when both
/// interpretations already know it is invalid.
pub struct DualMiner<'a> {
    input: &'a InputSet,
    predicates: &'a PredicatePair,
    client: &'a dyn ModelClient,
    options: DualOptions,
}

impl<'a> DualMiner<'a> {
    pub fn new(
        input: &'a InputSet,
        predicates: &'a PredicatePair,
        client: &'a dyn ModelClient,
    ) -> Self {
        DualMiner {
            input,
            predicates,
            client,
            options: DualOptions::default(),
        }
    }

    pub fn options(mut self, options: DualOptions) -> Self {
        self.options = options;
        self
    }

    pub fn cache(mut self, enabled: bool) -> Self {
        self.options.cache = enabled;
        self
    }

    fn predicate(&self, interpretation: Interpretation) -> &OutputPredicate {
        match interpretation {
            Interpretation::Retention => &self.predicates.retention,
            Interpretation::Omission => &self.predicates.omission,
        }
    }

    fn infer(&self, key: SourceMask) -> Result<String, EvalError> {
        let sources = self.input.select(key).expect("mask width matches input");
        Ok(self.client.infer(&ModelInput {
            retained: key,
            sources: &sources,
            context: self.input.context(),
        })?)
    }

    pub fn run(&self) -> Result<DualOutcome, MineError> {
        let width = self.input.len();
        let pool = build_pool(self.options.parallelism)?;
        let mut cache = self
            .options
            .cache
            .then(|| ResponseCache::new(self.options.cache_max_bytes));
        let mut telemetry = DualTelemetry::new(width, self.options.cache);
        let mut trace = self.options.trace.then(Vec::new);
        let mut ret = Side::new(Interpretation::Retention, width);
        let mut omi = Side::new(Interpretation::Omission, width);

        for level in (0..=width).rev() {
            let ret_pruned = children_of(&ret.frontier);
            let omi_pruned = children_of(&omi.frontier);

            let mut requests: Vec<Request> = Vec::new();
            let mut skipped = Vec::new();
            let mut visited = 0usize;
            for node in enumerate_level(width, level)? {
                let v_ret = ret.active && !ret_pruned.contains(&node);
                let v_omi = omi.active && !omi_pruned.contains(&node);
                if !v_ret && !v_omi {
                    skipped.push(node);
                    continue;
                }
                visited += 1;
                for (live, interpretation) in [
                    (v_ret, Interpretation::Retention),
                    (v_omi, Interpretation::Omission),
                ] {
                    if live {
                        requests.push(Request {
                            node,
                            interpretation,
                            key: concrete_mask(node, interpretation),
                        });
                    }
                }
            }

            let outputs = self.resolve(pool.as_ref(), &requests, cache.as_mut(), &mut telemetry);
            let outputs = match outputs {
                Ok(o) => o,
                Err((req, cause)) => {
                    return Err(self.abort(req, cause, telemetry, cache.as_ref()));
                }
            };

            let verdicts = map_ordered(pool.as_ref(), &requests, |req| {
                Ok(self
                    .predicate(req.interpretation)
                    .evaluate(&outputs[&req.key])?)
            });
            let verdicts = match verdicts {
                Ok(v) => v,
                Err((i, cause)) => {
                    return Err(self.abort(requests[i], cause, telemetry, cache.as_ref()));
                }
            };

            telemetry.visited_per_level[level] = visited;
            telemetry.skipped_per_level[level] = skipped.len();

            let mut ret_evaluated = Vec::new();
            let mut omi_evaluated = Vec::new();
            let mut ret_failed: HashSet<SourceMask> = HashSet::new();
            let mut omi_failed: HashSet<SourceMask> = HashSet::new();
            for (req, ok) in requests.iter().zip(verdicts) {
                let (side, evaluated, failed) = match req.interpretation {
                    Interpretation::Retention => (&mut ret, &mut ret_evaluated, &mut ret_failed),
                    Interpretation::Omission => (&mut omi, &mut omi_evaluated, &mut omi_failed),
                };
                evaluated.push(req.node);
                if ok {
                    side.valid.push(req.node);
                } else {
                    failed.insert(req.node);
                }
            }

            let mut added = [0usize; 2];
            for (idx, (side, pruned, evaluated, failed)) in [
                (&mut ret, ret_pruned, &ret_evaluated, ret_failed),
                (&mut omi, omi_pruned, &omi_evaluated, omi_failed),
            ]
            .into_iter()
            .enumerate()
            {
                if !side.active {
                    continue;
                }
                let t = &mut side.telemetry;
                t.levels_processed += 1;
                t.model_calls += evaluated.len();
                t.evaluated_per_level[level] = evaluated.len();
                t.pruned_per_level[level] = pruned.len();
                added[idx] = evaluated.len() - failed.len();
                if added[idx] == 0 {
                    // No rule of this type can exist further down.
                    side.active = false;
                    side.frontier.clear();
                    if level > 0 {
                        t.early_terminated_at = Some(level);
                    }
                } else {
                    side.frontier = pruned;
                    side.frontier.extend(failed);
                }
            }

            if let Some(trace) = trace.as_mut() {
                trace.push(DualLevelTrace {
                    level,
                    retention_evaluated: ret_evaluated,
                    omission_evaluated: omi_evaluated,
                    skipped,
                });
            }

            if !ret.active && !omi.active {
                if level > 0 {
                    telemetry.early_terminated_at = Some(level);
                }
                break;
            }
        }

        telemetry.cache = cache.as_ref().map(ResponseCache::stats);
        Ok(DualOutcome {
            retention: ret.finish(),
            omission: omi.finish(),
            telemetry,
            trace,
        })
    }

    /// Fetches one output per distinct key when caching, else one per request.
    fn resolve(
        &self,
        pool: Option<&rayon::ThreadPool>,
        requests: &[Request],
        cache: Option<&mut ResponseCache>,
        telemetry: &mut DualTelemetry,
    ) -> Result<HashMap<SourceMask, String>, (Request, EvalError)> {
        match cache {
            Some(cache) => {
                let mut outputs = HashMap::new();
                // First request per missing key, in ascending key order.
                let mut missing: BTreeMap<SourceMask, Request> = BTreeMap::new();
                for req in requests {
                    if let Some(hit) = cache.get(req.key) {
                        outputs.insert(req.key, hit.clone());
                    } else {
                        missing.entry(req.key).or_insert(*req);
                    }
                }
                let pending: Vec<Request> = missing.into_values().collect();
                let fetched = map_ordered(pool, &pending, |req| self.infer(req.key));
                telemetry.model_calls += match &fetched {
                    Ok(_) => pending.len(),
                    Err((i, _)) => *i + 1,
                };
                telemetry.cache_hits += requests.len() - pending.len();
                let fetched = fetched.map_err(|(i, e)| (pending[i], e))?;
                for (req, output) in pending.iter().zip(fetched) {
                    cache.insert(req.key, output.clone());
                    outputs.insert(req.key, output);
                }
                Ok(outputs)
            }
            None => {
                let fetched = map_ordered(pool, requests, |req| self.infer(req.key));
                telemetry.model_calls += match &fetched {
                    Ok(_) => requests.len(),
                    Err((i, _)) => *i + 1,
                };
                let fetched = fetched.map_err(|(i, e)| (requests[i], e))?;
                // Without a cache the duplicate requests above still went to the
                // client; outputs for one key are identical for deterministic models.
                Ok(requests.iter().map(|r| r.key).zip(fetched).collect())
            }
        }
    }

    fn abort(
        &self,
        req: Request,
        cause: EvalError,
        mut telemetry: DualTelemetry,
        cache: Option<&ResponseCache>,
    ) -> MineError {
        telemetry.cache = cache.map(ResponseCache::stats);
        MineError::DualAborted {
            interpretation: req.interpretation,
            mask: req.node,
            cause,
            telemetry: Box::new(telemetry),
        }
    }
}

fn children_of(frontier: &HashSet<SourceMask>) -> HashSet<SourceMask> {
    frontier.iter().flat_map(|&z| children(z)).collect()
}

pub fn mine_dual(
    input: &InputSet,
    predicates: &PredicatePair,
    client: &dyn ModelClient,
    cache_enabled: bool,
) -> Result<DualOutcome, MineError> {
    DualMiner::new(input, predicates, client)
        .cache(cache_enabled)
        .run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Context;
    use crate::miner::mine;
    use crate::model::{CountingClient, ValidityAssignment};

    fn input(n: usize) -> InputSet {
        InputSet::new(
            (1..=n).map(|i| format!("source {i}")).collect(),
            Context::new("q"),
        )
        .unwrap()
    }

    fn token_pair() -> PredicatePair {
        PredicatePair {
            retention: OutputPredicate::token(),
            omission: OutputPredicate::token(),
        }
    }

    fn m(idx: &[usize], n: usize) -> SourceMask {
        SourceMask::from_indices(idx.iter().copied(), n).unwrap()
    }

    #[test]
    fn cached_run_never_repeats_an_input() {
        let model = CountingClient::new(ValidityAssignment::from_fn(4, |_| true));
        let out = mine_dual(&input(4), &token_pair(), &model, true).unwrap();
        assert_eq!(out.telemetry.model_calls, 16);
        assert_eq!(model.calls(), 16);
        assert_eq!(model.duplicate_calls(), 0);
        assert_eq!(out.telemetry.cache_hits, 16);
        assert_eq!(out.retention.valid.len(), 16);
        assert_eq!(out.omission.valid.len(), 16);
    }

    #[test]
    fn uncached_run_asks_twice() {
        let model = CountingClient::new(ValidityAssignment::from_fn(3, |_| true));
        let out = mine_dual(&input(3), &token_pair(), &model, false).unwrap();
        assert_eq!(out.telemetry.model_calls, 16);
        assert_eq!(model.duplicate_calls(), 8);
    }

    #[test]
    fn totally_invalid_node_prunes_its_children() {
        // The model answers "1" exactly when s2 is kept. Retention uses the
        // token, omission its negation, so {s1} fails under both readings
        // and {} is never visited.
        let n = 2;
        let model = CountingClient::new(ValidityAssignment::from_fn(n, |kept| kept.contains(1)));
        let pair = PredicatePair {
            retention: OutputPredicate::token(),
            omission: OutputPredicate::token().negate(),
        };
        let out = DualMiner::new(&input(n), &pair, &model)
            .options(DualOptions {
                cache: true,
                trace: true,
                ..Default::default()
            })
            .run()
            .unwrap();
        let (s1, s2, full) = (m(&[1], n), m(&[2], n), SourceMask::full(n).unwrap());
        assert_eq!(out.retention.valid, vec![s2, full]);
        assert_eq!(out.omission.valid, vec![s2, full]);
        assert_eq!(out.telemetry.visited_per_level, vec![0, 2, 1]);
        assert_eq!(out.telemetry.skipped_per_level, vec![1, 0, 0]);
        let trace = out.trace.unwrap();
        assert_eq!(trace[1].retention_evaluated, vec![s1, s2]);
        assert_eq!(trace[2].skipped, vec![SourceMask::empty(n).unwrap()]);
        assert_eq!((model.calls(), out.telemetry.cache_hits), (4, 2));
    }

    #[test]
    fn sides_match_mono_runs() {
        let model = ValidityAssignment::from_fn(5, |m| m.bits() % 5 != 1);
        let dual = mine_dual(&input(5), &token_pair(), &model, true).unwrap();
        for side in [&dual.retention, &dual.omission] {
            let mono = mine(&input(5), &OutputPredicate::token(), &model, side.interpretation).unwrap();
            assert_eq!(side.valid, mono.valid);
            assert_eq!(side.minimal, mono.minimal);
            assert_eq!(side.telemetry, mono.telemetry);
        }
    }

    #[test]
    fn byte_budget_limits_cache() {
        let mut cache = ResponseCache::new(Some(3));
        let a = m(&[1], 2);
        assert!(cache.insert(a, "ab".into()));
        assert!(!cache.insert(m(&[2], 2), "cd".into()));
        assert_eq!(
            cache.stats(),
            CacheStats {
                entries: 1,
                bytes: 2,
                rejected_inserts: 1
            }
        );
        assert!(cache.insert(a, "xyz".into()));
        assert_eq!(cache.stats().bytes, 3);
    }

    #[test]
    fn parallel_dual_matches_sequential() {
        let model = ValidityAssignment::from_fn(6, |m| m.bits().count_ones() != 2 || m.bits() & 1 == 0);
        let seq = mine_dual(&input(6), &token_pair(), &model, true).unwrap();
        let par = DualMiner::new(&input(6), &token_pair(), &model)
            .options(DualOptions {
                cache: true,
                parallelism: 3,
                ..Default::default()
            })
            .run()
            .unwrap();
        assert_eq!(seq, par);
    }
}
