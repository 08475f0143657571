//! Independent reference implementations shared by the integration tests.
//!
//! Everything here works on raw `u64` bit patterns and is written straight
//! from the definitions, without the library's lattice helpers.
#![allow(dead_code)]

use std::collections::HashMap;

use rulemine_core::lattice::{Context, InputSet, Interpretation, SourceMask};

pub fn input(n: usize) -> InputSet {
    InputSet::new(
        (1..=n).map(|i| format!("source text {i}")).collect(),
        Context::new("question?"),
    )
    .unwrap()
}

pub fn mask(bits: u64, n: usize) -> SourceMask {
    SourceMask::new(bits, n).unwrap()
}

fn all(n: usize) -> u64 {
    if n == 0 {
        0
    } else {
        u64::MAX >> (64 - n)
    }
}

/// Quantified definition: retention needs every superset satisfied, omission
/// every set disjoint from the rule.
pub fn quantified_valid(
    n: usize,
    satisfied: &dyn Fn(u64) -> bool,
    interpretation: Interpretation,
) -> Vec<u64> {
    (0..1u64 << n)
        .filter(|&rule| {
            (0..1u64 << n).all(|t| {
                let covered = match interpretation {
                    Interpretation::Retention => t & rule == rule,
                    Interpretation::Omission => t & rule == 0,
                };
                !covered || satisfied(t)
            })
        })
        .collect()
}

/// Recursive definition: a node is valid when its own input satisfies the
/// predicate and every parent is valid. Memoized top-down.
pub fn recursive_valid(
    n: usize,
    satisfied: &dyn Fn(u64) -> bool,
    interpretation: Interpretation,
) -> Vec<u64> {
    fn go(
        node: u64,
        n: usize,
        sat: &dyn Fn(u64) -> bool,
        interp: Interpretation,
        memo: &mut HashMap<u64, bool>,
    ) -> bool {
        if let Some(&v) = memo.get(&node) {
            return v;
        }
        let concrete = match interp {
            Interpretation::Retention => node,
            Interpretation::Omission => !node & all(n),
        };
        let mut v = sat(concrete);
        for i in 0..n {
            if v && node >> i & 1 == 0 {
                v = go(node | 1 << i, n, sat, interp, memo);
            }
        }
        memo.insert(node, v);
        v
    }
    let mut memo = HashMap::new();
    (0..1u64 << n)
        .filter(|&node| go(node, n, satisfied, interpretation, &mut memo))
        .collect()
}

pub fn bits(masks: &[SourceMask]) -> Vec<u64> {
    masks.iter().map(|m| m.bits()).collect()
}

pub fn is_antichain(masks: &[SourceMask]) -> bool {
    masks.iter().all(|a| {
        masks
            .iter()
            .all(|b| a == b || !(a.bits() & b.bits() == a.bits()))
    })
}

/// Every superset of some member, as sorted bit patterns.
pub fn upward_closure(n: usize, floors: &[SourceMask]) -> Vec<u64> {
    (0..1u64 << n)
        .filter(|t| floors.iter().any(|f| t & f.bits() == f.bits()))
        .collect()
}
