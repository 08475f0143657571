use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{Context, InputSet, Interpretation};
use crate::miner::mine;
use crate::model::ValidityAssignment;
use crate::oracle::propagate_validity;
use crate::predicate::OutputPredicate;

use super::BenchError;

pub const MAX_SWEEP_WIDTH: usize = 4;

/// Mono behaviour on one satisfaction assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Bit `b` set when node `b` satisfies the predicate.
    pub assignment: u64,
    pub valid_rules: usize,
    pub visited: usize,
}

/// Assignments grouped by their number of valid rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub valid_rule_count: usize,
    pub mean_visited: f64,
    pub min_visited: usize,
    pub max_visited: usize,
    pub assignment_count: usize,
}

impl SweepRow {
    /// Visits beyond the unavoidable `max(valid, 1)`.
    pub fn mean_overshoot(&self) -> f64 {
        self.mean_visited - self.valid_rule_count.max(1) as f64
    }
}

/// Runs retention Mono on every satisfaction assignment of a width-`n` lattice.
pub fn sweep_points(width: usize) -> Result<Vec<SweepPoint>, BenchError> {
    if width > MAX_SWEEP_WIDTH {
        return Err(BenchError::SweepTooWide(width));
    }
    let nodes = 1usize << width;
    let input = InputSet::new(
        (1..=width).map(|i| format!("source {i}")).collect(),
        Context::new("synthetic"),
    )?;
    let token = OutputPredicate::token();
    (0..1u64 << nodes)
        .into_par_iter()
        .map(|assignment| {
            let model = ValidityAssignment::from_table(width, assignment);
            let run = mine(&input, &token, &model, Interpretation::Retention)?;
            let satisfied: Vec<bool> = (0..nodes).map(|b| assignment >> b & 1 == 1).collect();
            let valid_rules = propagate_validity(width, &satisfied)
                .into_iter()
                .filter(|v| *v)
                .count();
            if valid_rules != run.valid.len() {
                return Err(BenchError::OracleMismatch { assignment });
            }
            Ok(SweepPoint {
                assignment,
                valid_rules,
                visited: run.telemetry.model_calls,
            })
        })
        .collect()
}

pub fn synth_sweep(width: usize) -> Result<Vec<SweepRow>, BenchError> {
    let points = sweep_points(width)?;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); (1 << width) + 1];
    for p in &points {
        groups[p.valid_rules].push(p.visited);
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .filter(|(_, visits)| !visits.is_empty())
        .map(|(count, visits)| SweepRow {
            valid_rule_count: count,
            mean_visited: visits.iter().sum::<usize>() as f64 / visits.len() as f64,
            min_visited: *visits.iter().min().unwrap(),
            max_visited: *visits.iter().max().unwrap(),
            assignment_count: visits.len(),
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("valid_rule_count,mean_visited,min_visited,max_visited,assignment_count\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{},{},{}\n",
            r.valid_rule_count, r.mean_visited, r.min_visited, r.max_visited, r.assignment_count
        ));
    }
    out
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), BenchError> {
    fs::write(path, sweep_csv(rows)).map_err(|source| BenchError::Write {
        path: path.display().to_string(),
        source,
    })
}
