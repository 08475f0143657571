//! Brute-force rule validity, straight from the definitions.
//!
//! The oracle judges every node of the lattice and derives validity from
//! those judgments without any pruning. It is the reference the miners are
//! tested against and the engine behind the synthetic sweep.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use thiserror::Error;

use crate::lattice::{
    concrete_mask, minimal_rules, subsets, InputSet, Interpretation, LatticeError, SourceMask,
};
use crate::miner::EvalError;
use crate::model::{ModelClient, ModelInput};
use crate::predicate::OutputPredicate;

/// Exhaustive enumeration refuses lattices wider than this.
pub const MAX_ORACLE_WIDTH: usize = 20;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle refuses width {0}; exhaustive enumeration is limited to {MAX_ORACLE_WIDTH}")]
    TooWide(usize),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("evaluation of retained set {mask} failed: {cause}")]
    Evaluation { mask: SourceMask, cause: EvalError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub interpretation: Interpretation,
    /// Valid lattice nodes, ascending.
    pub valid: Vec<SourceMask>,
    pub minimal: Vec<SourceMask>,
    /// Always `2^n`.
    pub evaluations: usize,
    /// Predicate outcome per lattice node (node mask, not concrete mask).
    pub per_node_satisfaction: BTreeMap<u64, u8>,
}

/// Validity from raw node satisfaction: a node is valid iff it and all of
/// its supersets are satisfied. `satisfied[b]` is the outcome of node `b`.
pub fn propagate_validity(width: usize, satisfied: &[bool]) -> Vec<bool> {
    assert_eq!(satisfied.len(), 1 << width);
    let mut valid = satisfied.to_vec();
    // Supersets have larger numeric values, so descending order sees them first.
    for bits in (0..satisfied.len()).rev() {
        if !valid[bits] {
            continue;
        }
        let missing = !bits & ((1 << width) - 1);
        let mut free = missing;
        while free != 0 {
            let bit = free & free.wrapping_neg();
            if !valid[bits | bit] {
                valid[bits] = false;
                break;
            }
            free &= free - 1;
        }
    }
    valid
}

/// Oracle over one input set, predicate and model.
///
/// Predicate outcomes are cached per concrete retained set, so repeated
/// [`Oracle::verify_rule`] calls never re-query the model. For stochastic
/// models this means each concrete input is sampled once.
pub struct Oracle<'a> {
    input: &'a InputSet,
    predicate: &'a OutputPredicate,
    client: &'a dyn ModelClient,
    judged: Mutex<HashMap<u64, bool>>,
}

impl<'a> Oracle<'a> {
    pub fn new(
        input: &'a InputSet,
        predicate: &'a OutputPredicate,
        client: &'a dyn ModelClient,
    ) -> Result<Self, OracleError> {
        if input.len() > MAX_ORACLE_WIDTH {
            return Err(OracleError::TooWide(input.len()));
        }
        Ok(Oracle {
            input,
            predicate,
            client,
            judged: Mutex::new(HashMap::new()),
        })
    }

    /// Whether the model output for this exact retained set satisfies the predicate.
    pub fn satisfies(&self, retained: SourceMask) -> Result<bool, OracleError> {
        if let Some(&hit) = self.judged.lock().unwrap().get(&retained.bits()) {
            return Ok(hit);
        }
        let sources = self.input.select(retained)?;
        let verdict = self
            .client
            .infer(&ModelInput {
                retained,
                sources: &sources,
                context: self.input.context(),
            })
            .map_err(EvalError::from)
            .and_then(|out| self.predicate.evaluate(&out).map_err(EvalError::from))
            .map_err(|cause| OracleError::Evaluation {
                mask: retained,
                cause,
            })?;
        self.judged.lock().unwrap().insert(retained.bits(), verdict);
        Ok(verdict)
    }

    /// Checks one rule by quantifying over every input set it covers.
    ///
    /// Retention: every `t ⊇ mask` must satisfy the predicate. Omission: every
    /// `t` disjoint from `mask` must. Both enumerate the subsets of the
    /// complement, `2^(n - |mask|)` judgments, without short-circuiting.
    pub fn verify_rule(
        &self,
        mask: SourceMask,
        interpretation: Interpretation,
    ) -> Result<bool, OracleError> {
        if mask.width() != self.input.len() {
            return Err(LatticeError::WidthMismatch {
                expected: self.input.len(),
                found: mask.width(),
            }
            .into());
        }
        let mut holds = true;
        for free in subsets(mask.complement()) {
            let t = match interpretation {
                Interpretation::Retention => SourceMask::new(mask.bits() | free.bits(), mask.width())?,
                Interpretation::Omission => free,
            };
            holds &= self.satisfies(t)?;
        }
        Ok(holds)
    }

    /// Judges all `2^n` nodes, then derives validity by propagation.
    pub fn brute_force_valid(
        &self,
        interpretation: Interpretation,
    ) -> Result<OracleResult, OracleError> {
        let width = self.input.len();
        let mut satisfied = Vec::with_capacity(1 << width);
        for bits in 0..(1u64 << width) {
            let node = SourceMask::new(bits, width)?;
            satisfied.push(self.satisfies(concrete_mask(node, interpretation))?);
        }
        let validity = propagate_validity(width, &satisfied);
        let valid: Vec<SourceMask> = validity
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(|(b, _)| SourceMask::new(b as u64, width))
            .collect::<Result<_, _>>()?;
        Ok(OracleResult {
            interpretation,
            minimal: minimal_rules(&valid),
            valid,
            evaluations: satisfied.len(),
            per_node_satisfaction: satisfied
                .iter()
                .enumerate()
                .map(|(b, s)| (b as u64, *s as u8))
                .collect(),
        })
    }
}

pub fn verify_rule(
    mask: SourceMask,
    interpretation: Interpretation,
    input: &InputSet,
    predicate: &OutputPredicate,
    client: &dyn ModelClient,
) -> Result<bool, OracleError> {
    Oracle::new(input, predicate, client)?.verify_rule(mask, interpretation)
}

pub fn brute_force_valid(
    interpretation: Interpretation,
    input: &InputSet,
    predicate: &OutputPredicate,
    client: &dyn ModelClient,
) -> Result<OracleResult, OracleError> {
    Oracle::new(input, predicate, client)?.brute_force_valid(interpretation)
}
