//! Output predicates: boolean judgments over model output text.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use regex::Regex;
use thiserror::Error;

use crate::model::{ChatMessage, ChatModel, ChatSettings, ModelError};

#[derive(Debug, Error)]
pub enum PredicateError {
    #[error("target string must not be empty")]
    EmptyTarget,
    #[error("invalid pattern: {0}")]
    Pattern(#[from] regex::Error),
    #[error("scripted predicate has no verdict for output {0:?}")]
    Unscripted(String),
    #[error("judge response {0:?} is not a verdict (expected `1` or `0`)")]
    UnparseableVerdict(String),
    #[error("judge call failed: {0}")]
    Judge(#[from] ModelError),
}

pub const DEFAULT_JUDGE_TEMPLATE: &str = "You are grading an answer to a question.\n\
Ground truth answer: {ground_truth}\n\
Candidate answer: {output}\n\
Does the candidate answer state the ground truth answer (allowing for aliases and \
rephrasing)? Reply with the single digit 1 if it does and 0 if it does not.";

/// Lowercases, trims and collapses internal whitespace runs to one space.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// LLM-as-judge fallback behind fast string checks.
#[derive(Clone)]
pub struct JudgeFallback {
    ground_truth: String,
    pattern: Option<Regex>,
    template: String,
    judge: Arc<dyn ChatModel>,
    settings: ChatSettings,
}

impl fmt::Debug for JudgeFallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JudgeFallback")
            .field("ground_truth", &self.ground_truth)
            .field("pattern", &self.pattern.as_ref().map(Regex::as_str))
            .field("settings", &self.settings)
            .finish_non_exhaustive()
    }
}

impl JudgeFallback {
    pub fn new(
        ground_truth: impl Into<String>,
        judge: Arc<dyn ChatModel>,
        settings: ChatSettings,
    ) -> Self {
        JudgeFallback {
            ground_truth: ground_truth.into(),
            pattern: None,
            template: DEFAULT_JUDGE_TEMPLATE.to_string(),
            judge,
            settings,
        }
    }

    pub fn with_pattern(mut self, pattern: &str) -> Result<Self, PredicateError> {
        self.pattern = Some(Regex::new(pattern)?);
        Ok(self)
    }

    /// Template with `{output}` and `{ground_truth}` placeholders.
    pub fn with_template(mut self, template: impl Into<String>) -> Self {
        self.template = template.into();
        self
    }

    pub fn ground_truth(&self) -> &str {
        &self.ground_truth
    }

    fn judge_prompt(&self, output: &str) -> String {
        self.template
            .replace("{ground_truth}", &self.ground_truth)
            .replace("{output}", output)
    }

    /// Exact-token verdict parsing: `1` or `0` after trimming.
    pub fn parse_verdict(response: &str) -> Result<bool, PredicateError> {
        match response.trim() {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(PredicateError::UnparseableVerdict(other.to_string())),
        }
    }

    fn evaluate(&self, output: &str) -> Result<bool, PredicateError> {
        if fast_match(&self.ground_truth, output) {
            return Ok(true);
        }
        if let Some(pattern) = &self.pattern {
            if pattern.is_match(output) {
                return Ok(true);
            }
        }
        let request = self
            .settings
            .request(vec![ChatMessage::user(self.judge_prompt(output))]);
        let response = self.judge.complete(&request)?;
        Self::parse_verdict(&response)
    }
}

fn fast_match(target: &str, output: &str) -> bool {
    let target = normalize(target);
    !target.is_empty() && normalize(output).contains(&target)
}

/// The user-defined predicate `O: output -> {0, 1}`.
#[derive(Debug, Clone)]
pub enum OutputPredicate {
    /// Normalized target appears as a substring of the normalized output.
    TargetMatch { target: String },
    Regex { pattern: Regex },
    JudgeFallback(JudgeFallback),
    /// Exact output lookup with an optional verdict for everything else.
    Scripted {
        table: HashMap<String, bool>,
        default: Option<bool>,
    },
    /// Logical complement of another predicate.
    Not(Box<OutputPredicate>),
}

impl OutputPredicate {
    pub fn target_match(target: impl Into<String>) -> Result<Self, PredicateError> {
        let target = target.into();
        if normalize(&target).is_empty() {
            return Err(PredicateError::EmptyTarget);
        }
        Ok(OutputPredicate::TargetMatch { target })
    }

    pub fn regex(pattern: &str) -> Result<Self, PredicateError> {
        Ok(OutputPredicate::Regex {
            pattern: Regex::new(pattern)?,
        })
    }

    pub fn scripted<I, S>(table: I, default: Option<bool>) -> Self
    where
        I: IntoIterator<Item = (S, bool)>,
        S: Into<String>,
    {
        OutputPredicate::Scripted {
            table: table.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            default,
        }
    }

    /// Accepts exactly `1`, rejects exactly `0`; pairs with validity-assignment models.
    pub fn token() -> Self {
        Self::scripted([("1", true), ("0", false)], None)
    }

    pub fn negate(self) -> Self {
        OutputPredicate::Not(Box::new(self))
    }

    /// Whether results may vary between calls on the same output.
    pub fn is_deterministic(&self) -> bool {
        match self {
            OutputPredicate::JudgeFallback(_) => false,
            OutputPredicate::Not(inner) => inner.is_deterministic(),
            _ => true,
        }
    }

    pub fn evaluate(&self, output: &str) -> Result<bool, PredicateError> {
        match self {
            OutputPredicate::TargetMatch { target } => Ok(fast_match(target, output)),
            OutputPredicate::Regex { pattern } => Ok(pattern.is_match(output)),
            OutputPredicate::JudgeFallback(judge) => judge.evaluate(output),
            OutputPredicate::Scripted { table, default } => table
                .get(output)
                .copied()
                .or(*default)
                .ok_or_else(|| PredicateError::Unscripted(output.to_string())),
            OutputPredicate::Not(inner) => inner.evaluate(output).map(|v| !v),
        }
    }
}

/// Predicates for the two interpretations of a dual run.
#[derive(Debug, Clone)]
pub struct PredicatePair {
    pub retention: OutputPredicate,
    pub omission: OutputPredicate,
}
