//! Versioned JSON run reports and their plain-language rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lattice::{InputSet, Interpretation, SourceMask};
use crate::miner::{DualTelemetry, MineTelemetry};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("malformed report: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported report schema version {0} (this tool reads version {REPORT_SCHEMA_VERSION})")]
    Version(u32),
    #[error("report references source {index} but lists only {count} sources")]
    UnknownSource { index: usize, count: usize },
}

/// A mask as both its integer value and its 1-based source indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub mask: u64,
    pub sources: Vec<usize>,
}

impl From<SourceMask> for MaskRecord {
    fn from(mask: SourceMask) -> Self {
        MaskRecord {
            mask: mask.bits(),
            sources: mask.indices(),
        }
    }
}

/// Sources are referenced by index and content hash, not copied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub index: usize,
    pub label: String,
    pub sha256: String,
}

pub fn source_records(input: &InputSet) -> Vec<SourceRecord> {
    input
        .sources()
        .iter()
        .zip(input.labels())
        .enumerate()
        .map(|(i, (text, label))| SourceRecord {
            index: i + 1,
            label: label.clone(),
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSetReport {
    pub interpretation: Interpretation,
    /// Consequent in words, e.g. "the response contains misinformation".
    pub predicate: String,
    pub valid: Vec<MaskRecord>,
    pub minimal: Vec<MaskRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub telemetry: Option<MineTelemetry>,
}

impl RuleSetReport {
    pub fn new(
        interpretation: Interpretation,
        predicate: impl Into<String>,
        valid: &[SourceMask],
        minimal: &[SourceMask],
        telemetry: Option<MineTelemetry>,
    ) -> Self {
        RuleSetReport {
            interpretation,
            predicate: predicate.into(),
            valid: valid.iter().copied().map(MaskRecord::from).collect(),
            minimal: minimal.iter().copied().map(MaskRecord::from).collect(),
            telemetry,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub interpretation: Interpretation,
    pub rule: MaskRecord,
    pub predicate: String,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleDump {
    pub interpretation: Interpretation,
    pub evaluations: usize,
    /// Lattice node mask to 0/1.
    pub per_node_satisfaction: BTreeMap<u64, u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub mode: String,
    pub width: usize,
    pub sources: Vec<SourceRecord>,
    pub config_digest: String,
    #[serde(default)]
    pub rule_sets: Vec<RuleSetReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual: Option<DualTelemetry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleDump>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyRecord>,
}

impl Report {
    pub fn new(mode: &str, input: &InputSet, config_digest: impl Into<String>) -> Self {
        Report {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            mode: mode.to_string(),
            width: input.len(),
            sources: source_records(input),
            config_digest: config_digest.into(),
            rule_sets: Vec::new(),
            dual: None,
            oracle: None,
            verify: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let report: Report = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(ReportError::Version(report.schema_version));
        }
        Ok(report)
    }
}

pub const EMPTY_RULES: &str = "No valid rules exist for this predicate.";
pub const UNIVERSAL_RULE: &str = "The predicate holds for every subset of sources.";

fn join_labels(labels: &[&str]) -> String {
    match labels {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

fn sentence(report: &Report, set: &RuleSetReport, rule: &MaskRecord) -> Result<String, ReportError> {
    if rule.sources.is_empty() {
        return Ok(UNIVERSAL_RULE.to_string());
    }
    let labels = rule
        .sources
        .iter()
        .map(|&i| {
            report
                .sources
                .get(i.wrapping_sub(1))
                .map(|s| s.label.as_str())
                .ok_or(ReportError::UnknownSource {
                    index: i,
                    count: report.sources.len(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let verb = if labels.len() == 1 { "is" } else { "are" };
    let action = match set.interpretation {
        Interpretation::Retention => "retained",
        Interpretation::Omission => "omitted",
    };
    Ok(format!(
        "If {} {verb} {action}, then {}.",
        join_labels(&labels),
        set.predicate.trim_end_matches('.')
    ))
}

/// One if-then line per minimal rule, grouped by interpretation.
pub fn explain_report(report: &Report) -> Result<String, ReportError> {
    let mut lines = Vec::new();
    if let Some(v) = &report.verify {
        let set = RuleSetReport {
            interpretation: v.interpretation,
            predicate: v.predicate.clone(),
            valid: Vec::new(),
            minimal: Vec::new(),
            telemetry: None,
        };
        let status = if v.valid { "valid" } else { "not valid" };
        lines.push(format!(
            "{} rule {:?} is {status}: {}",
            capitalize(v.interpretation.as_str()),
            v.rule.sources,
            sentence(report, &set, &v.rule)?
        ));
    }
    let headed = report.rule_sets.len() > 1;
    for set in &report.rule_sets {
        if headed {
            lines.push(format!("{} rules:", capitalize(set.interpretation.as_str())));
        }
        if set.minimal.is_empty() {
            lines.push(EMPTY_RULES.to_string());
        }
        for rule in &set.minimal {
            lines.push(sentence(report, set, rule)?);
        }
    }
    let mut out = lines.join("\n");
    out.push('\n');
    Ok(out)
}

pub fn explain_json(text: &str) -> Result<String, ReportError> {
    explain_report(&Report::from_json(text)?)
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
