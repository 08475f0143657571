//! Exact rule-based explanations for retrieval-augmented models.
//!
//! Given an ordered set of sources, a black-box model and a boolean output
//! predicate, the miners find every subset of sources whose retention (or
//! omission) guarantees that the predicate holds, no matter which of the
//! remaining sources are present. Search is a top-down walk of the powerset
//! lattice that prunes the down-set of any failing node and stops as soon as
//! a level yields no rule.
//!
//! - [`lattice`]: masks, levels, subsumption and minimality.
//! - [`predicate`]: output predicates, including an LLM-judge fallback.
//! - [`model`]: model clients (scripted, validity tables, HTTP, replay).
//! - [`miner`]: the single-interpretation and dual miners.
//! - [`oracle`]: brute-force validity used as ground truth.
//! - [`bench`]: the synthetic sweep and the HotpotQA curve harness.
//! - [`report`]: JSON run reports and their if-then rendering.

pub mod bench;
pub mod lattice;
pub mod miner;
pub mod model;
pub mod oracle;
pub mod predicate;
pub mod report;

pub use lattice::{
    children, concrete_input, enumerate_level, minimal_rules, parents, subsumes, Context,
    InputSet, Interpretation, LatticeError, Level, Rule, SourceMask,
};
pub use miner::{
    mine, mine_dual, DualMiner, DualOptions, DualOutcome, MineError, MineTelemetry, MonoMiner,
    MonoOutcome,
};
pub use model::{ModelClient, ModelError, ModelInput, ScriptedModel, ValidityAssignment};
pub use oracle::{brute_force_valid, verify_rule, Oracle, OracleResult};
pub use predicate::{OutputPredicate, PredicatePair};
