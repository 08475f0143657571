//! Powerset lattice over the sources of an input set.
//!
//! Every node of the lattice is a [`SourceMask`]: bit `i` set means source
//! `i + 1` is implicated. Masks are ordered by their numeric value, which is
//! the iteration order used throughout the crate.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest number of sources a mask can address.
pub const MAX_WIDTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("lattice width {0} exceeds the supported maximum of {MAX_WIDTH}")]
    WidthTooLarge(usize),
    #[error("level {level} is out of range for a lattice of width {width}")]
    LevelOutOfRange { level: usize, width: usize },
    #[error("mask width {found} does not match expected width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("cannot compare a {0} rule with a {1} rule")]
    InterpretationMismatch(Interpretation, Interpretation),
    #[error("source index {index} is out of range for width {width}")]
    IndexOutOfRange { index: usize, width: usize },
}

/// How a mask is applied to the input set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpretation {
    /// Set bits are the sources kept in the prompt.
    Retention,
    /// Set bits are the sources removed from the prompt.
    Omission,
}

impl Interpretation {
    pub fn as_str(self) -> &'static str {
        match self {
            Interpretation::Retention => "retention",
            Interpretation::Omission => "omission",
        }
    }
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Interpretation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "retention" | "retain" | "ret" => Ok(Interpretation::Retention),
            "omission" | "omit" | "omi" => Ok(Interpretation::Omission),
            other => Err(format!("unknown interpretation `{other}`")),
        }
    }
}

/// A lattice node: a subset of the `width` sources of one mining session.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceMask {
    bits: u64,
    width: u8,
}

#[inline]
fn width_bits(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl SourceMask {
    pub fn new(bits: u64, width: usize) -> Result<Self, LatticeError> {
        if width > MAX_WIDTH {
            return Err(LatticeError::WidthTooLarge(width));
        }
        if bits & !width_bits(width) != 0 {
            let index = 64 - bits.leading_zeros() as usize;
            return Err(LatticeError::IndexOutOfRange { index, width });
        }
        Ok(SourceMask {
            bits,
            width: width as u8,
        })
    }

    /// Caller guarantees `bits` fits in `width`.
    #[inline]
    pub(crate) fn from_raw(bits: u64, width: usize) -> Self {
        debug_assert!(width <= MAX_WIDTH && bits & !width_bits(width) == 0);
        SourceMask {
            bits,
            width: width as u8,
        }
    }

    pub fn empty(width: usize) -> Result<Self, LatticeError> {
        SourceMask::new(0, width)
    }

    pub fn full(width: usize) -> Result<Self, LatticeError> {
        SourceMask::new(width_bits(width), width)
    }

    /// Builds a mask from 1-based source indices.
    pub fn from_indices<I>(indices: I, width: usize) -> Result<Self, LatticeError>
    where
        I: IntoIterator<Item = usize>,
    {
        if width > MAX_WIDTH {
            return Err(LatticeError::WidthTooLarge(width));
        }
        let mut bits = 0u64;
        for index in indices {
            if index == 0 || index > width {
                return Err(LatticeError::IndexOutOfRange { index, width });
            }
            bits |= 1 << (index - 1);
        }
        Ok(SourceMask::from_raw(bits, width))
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn width(self) -> usize {
        self.width as usize
    }

    #[inline]
    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    /// Whether the 0-based source position is implicated.
    #[inline]
    pub fn contains(self, position: usize) -> bool {
        position < self.width() && self.bits >> position & 1 == 1
    }

    #[inline]
    pub fn complement(self) -> Self {
        SourceMask::from_raw(!self.bits & width_bits(self.width()), self.width())
    }

    #[inline]
    pub fn is_subset_of(self, other: SourceMask) -> bool {
        self.bits & other.bits == self.bits
    }

    #[inline]
    pub fn is_strict_subset_of(self, other: SourceMask) -> bool {
        self.bits != other.bits && self.is_subset_of(other)
    }

    #[inline]
    pub fn is_disjoint(self, other: SourceMask) -> bool {
        self.bits & other.bits == 0
    }

    /// 0-based positions of the set bits, ascending.
    pub fn positions(self) -> impl Iterator<Item = usize> {
        let mut bits = self.bits;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let pos = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(pos)
            }
        })
    }

    /// 1-based source indices, as written in reports.
    pub fn indices(self) -> Vec<usize> {
        self.positions().map(|p| p + 1).collect()
    }

    fn check_width(self, other: SourceMask) -> Result<(), LatticeError> {
        if self.width != other.width {
            return Err(LatticeError::WidthMismatch {
                expected: self.width(),
                found: other.width(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for SourceMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SourceMask({:0w$b}", self.bits, w = self.width())?;
        write!(f, " {:?})", self.indices())
    }
}

impl fmt::Display for SourceMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, idx) in self.positions().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "s{}", idx + 1)?;
        }
        f.write_str("}")
    }
}

/// The part of the prompt that never varies across lattice nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub question: String,
    #[serde(default = "Context::default_instructions")]
    pub instructions: String,
}

impl Context {
    pub const DEFAULT_INSTRUCTIONS: &'static str = "Answer the question below using only the \
        information contained in the provided sources. Do not rely on outside knowledge. \
        Reply with a short answer.";

    fn default_instructions() -> String {
        Self::DEFAULT_INSTRUCTIONS.to_string()
    }

    pub fn new(question: impl Into<String>) -> Self {
        Context {
            question: question.into(),
            instructions: Self::default_instructions(),
        }
    }

    pub fn with_instructions(mut self, instructions: impl Into<String>) -> Self {
        self.instructions = instructions.into();
        self
    }
}

/// The ordered sources under study plus the fixed remainder of the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSet {
    sources: Vec<String>,
    labels: Vec<String>,
    context: Context,
}

impl InputSet {
    pub fn new(sources: Vec<String>, context: Context) -> Result<Self, LatticeError> {
        if sources.len() > MAX_WIDTH {
            return Err(LatticeError::WidthTooLarge(sources.len()));
        }
        let labels = (1..=sources.len()).map(|i| format!("s{i}")).collect();
        Ok(InputSet {
            sources,
            labels,
            context,
        })
    }

    /// Replaces the default `s1..sn` display labels.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, LatticeError> {
        if labels.len() != self.sources.len() {
            return Err(LatticeError::WidthMismatch {
                expected: self.sources.len(),
                found: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn context(&self) -> &Context {
        &self.context
    }

    pub fn full_mask(&self) -> SourceMask {
        SourceMask::from_raw(width_bits(self.len()), self.len())
    }

    /// Source texts selected by a concrete (retained) mask, in input order.
    pub fn select(&self, retained: SourceMask) -> Result<Vec<&str>, LatticeError> {
        if retained.width() != self.len() {
            return Err(LatticeError::WidthMismatch {
                expected: self.len(),
                found: retained.width(),
            });
        }
        Ok(retained
            .positions()
            .map(|p| self.sources[p].as_str())
            .collect())
    }
}

/// A certified rule. Only miners and the oracle construct these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rule {
    pub interpretation: Interpretation,
    pub mask: SourceMask,
    pub minimal: bool,
}

impl Rule {
    pub(crate) fn certified(interpretation: Interpretation, mask: SourceMask, minimal: bool) -> Self {
        Rule {
            interpretation,
            mask,
            minimal,
        }
    }
}

/// Builds rules from a certified valid set, flagging the minimal frontier.
pub fn rules_from_valid(interpretation: Interpretation, valid: &[SourceMask]) -> Vec<Rule> {
    let minimal = minimal_rules(valid);
    valid
        .iter()
        .map(|&m| Rule::certified(interpretation, m, minimal.binary_search(&m).is_ok()))
        .collect()
}

/// All nodes of one lattice level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level {
    pub size: usize,
    pub nodes: Vec<SourceMask>,
}

impl Level {
    pub fn new(width: usize, size: usize) -> Result<Self, LatticeError> {
        Ok(Level {
            size,
            nodes: enumerate_level(width, size)?.collect(),
        })
    }
}

/// Iterator over the masks of popcount `l` in ascending numeric order.
#[derive(Debug, Clone)]
pub struct LevelIter {
    next: Option<u128>,
    limit: u128,
    width: usize,
}

impl Iterator for LevelIter {
    type Item = SourceMask;

    fn next(&mut self) -> Option<SourceMask> {
        let current = self.next?;
        // Gosper's hack: next larger integer with the same popcount.
        self.next = if current == 0 {
            None
        } else {
            let low = current & current.wrapping_neg();
            let ripple = current + low;
            let next = (((ripple ^ current) >> 2) / low) | ripple;
            (next < self.limit).then_some(next)
        };
        Some(SourceMask::from_raw(current as u64, self.width))
    }
}

pub fn enumerate_level(width: usize, level: usize) -> Result<LevelIter, LatticeError> {
    if width > MAX_WIDTH {
        return Err(LatticeError::WidthTooLarge(width));
    }
    if level > width {
        return Err(LatticeError::LevelOutOfRange { level, width });
    }
    Ok(LevelIter {
        next: Some((1u128 << level) - 1),
        limit: 1u128 << width,
        width,
    })
}

/// Immediate subsets: one set bit cleared.
pub fn children(mask: SourceMask) -> impl Iterator<Item = SourceMask> {
    mask.positions()
        .map(move |p| SourceMask::from_raw(mask.bits & !(1 << p), mask.width()))
}

/// Immediate supersets: one unset bit set.
pub fn parents(mask: SourceMask) -> impl Iterator<Item = SourceMask> {
    mask.complement()
        .positions()
        .map(move |p| SourceMask::from_raw(mask.bits | 1 << p, mask.width()))
}

/// Every superset of `mask` within its width, including `mask` itself.
pub fn supersets(mask: SourceMask) -> impl Iterator<Item = SourceMask> {
    subsets(mask.complement())
        .map(move |free| SourceMask::from_raw(mask.bits | free.bits, mask.width()))
}

/// Every subset of `mask`, including the empty set and `mask` itself.
pub fn subsets(mask: SourceMask) -> impl Iterator<Item = SourceMask> {
    let set = mask.bits;
    let width = mask.width();
    let mut next = Some(0u64);
    std::iter::from_fn(move || {
        let current = next?;
        let following = current.wrapping_sub(set) & set;
        next = (following != 0).then_some(following);
        Some(SourceMask::from_raw(current, width))
    })
}

/// `r1` subsumes `r2` when every per-source predicate of `r2` also appears in `r1`.
pub fn subsumes(r1: &Rule, r2: &Rule) -> Result<bool, LatticeError> {
    if r1.interpretation != r2.interpretation {
        return Err(LatticeError::InterpretationMismatch(
            r1.interpretation,
            r2.interpretation,
        ));
    }
    r1.mask.check_width(r2.mask)?;
    Ok(r2.mask.is_subset_of(r1.mask))
}

/// The ⊂-minimal elements of a valid set, ascending.
pub fn minimal_rules(valid: &[SourceMask]) -> Vec<SourceMask> {
    let mut sorted: Vec<SourceMask> = valid.to_vec();
    sorted.sort_unstable_by_key(|m| (m.len(), m.bits()));
    sorted.dedup();
    let mut frontier: Vec<SourceMask> = Vec::new();
    for mask in sorted {
        // Smaller sets come first, so any strict subset is already in the frontier.
        if !frontier.iter().any(|f| f.is_strict_subset_of(mask)) {
            frontier.push(mask);
        }
    }
    frontier.sort_unstable();
    frontier
}

/// The concrete retained mask sent to the model for a lattice node.
#[inline]
pub fn concrete_mask(mask: SourceMask, interpretation: Interpretation) -> SourceMask {
    match interpretation {
        Interpretation::Retention => mask,
        Interpretation::Omission => mask.complement(),
    }
}

/// Ordered source texts the model sees for a node under an interpretation.
pub fn concrete_input<'a>(
    mask: SourceMask,
    interpretation: Interpretation,
    input_set: &'a InputSet,
) -> Result<Vec<&'a str>, LatticeError> {
    input_set.select(concrete_mask(mask, interpretation))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(indices: &[usize], width: usize) -> SourceMask {
        SourceMask::from_indices(indices.iter().copied(), width).unwrap()
    }

    fn bits(masks: impl IntoIterator<Item = SourceMask>) -> Vec<u64> {
        masks.into_iter().map(SourceMask::bits).collect()
    }

    #[test]
    fn enumerate_level_examples() {
        assert_eq!(bits(enumerate_level(4, 4).unwrap()), vec![0b1111]);
        assert_eq!(bits(enumerate_level(4, 0).unwrap()), vec![0]);
        assert_eq!(
            bits(enumerate_level(4, 3).unwrap()),
            vec![0b0111, 0b1011, 0b1101, 0b1110]
        );
        assert_eq!(bits(enumerate_level(0, 0).unwrap()), vec![0]);
    }

    #[test]
    fn enumerate_level_errors() {
        assert_eq!(
            enumerate_level(3, 4).unwrap_err(),
            LatticeError::LevelOutOfRange { level: 4, width: 3 }
        );
        assert_eq!(
            enumerate_level(65, 1).unwrap_err(),
            LatticeError::WidthTooLarge(65)
        );
    }

    #[test]
    fn enumerate_level_at_full_width() {
        let top: Vec<_> = enumerate_level(64, 64).unwrap().collect();
        assert_eq!(bits(top), vec![u64::MAX]);
        assert_eq!(enumerate_level(64, 63).unwrap().count(), 64);
        assert_eq!(enumerate_level(64, 1).unwrap().last().unwrap().bits(), 1 << 63);
    }

    #[test]
    fn children_examples() {
        let kids: Vec<_> = children(m(&[1, 2, 3], 3)).collect();
        let mut expected = vec![m(&[1, 2], 3), m(&[1, 3], 3), m(&[2, 3], 3)];
        expected.sort();
        let mut kids_sorted = kids.clone();
        kids_sorted.sort();
        assert_eq!(kids_sorted, expected);
        assert_eq!(children(m(&[], 3)).count(), 0);
        assert_eq!(bits(children(m(&[2], 3))), vec![0]);
    }

    #[test]
    fn parents_examples() {
        assert_eq!(parents(SourceMask::full(4).unwrap()).count(), 0);
        let mut ps: Vec<_> = parents(m(&[2], 3)).collect();
        ps.sort();
        assert_eq!(ps, vec![m(&[1, 2], 3), m(&[2, 3], 3)]);
        let mut ps: Vec<_> = parents(m(&[], 2)).collect();
        ps.sort();
        assert_eq!(ps, vec![m(&[1], 2), m(&[2], 2)]);
    }

    #[test]
    fn subsumes_examples() {
        let r = |idx: &[usize]| Rule::certified(Interpretation::Retention, m(idx, 3), false);
        assert!(subsumes(&r(&[1, 2, 3]), &r(&[2])).unwrap());
        assert!(subsumes(&r(&[2]), &r(&[2])).unwrap());
        assert!(!subsumes(&r(&[1]), &r(&[2])).unwrap());
    }

    #[test]
    fn subsumes_rejects_mixed_rules() {
        let a = Rule::certified(Interpretation::Retention, m(&[1], 3), false);
        let b = Rule::certified(Interpretation::Omission, m(&[1], 3), false);
        assert!(matches!(
            subsumes(&a, &b),
            Err(LatticeError::InterpretationMismatch(..))
        ));
        let c = Rule::certified(Interpretation::Retention, m(&[1], 4), false);
        assert!(matches!(
            subsumes(&a, &c),
            Err(LatticeError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn minimal_rules_examples() {
        let core = m(&[2, 4], 5);
        let valid: Vec<_> = supersets(core).collect();
        assert_eq!(valid.len(), 8);
        assert_eq!(minimal_rules(&valid), vec![core]);

        let valid = vec![m(&[2], 3), m(&[1, 2], 3), m(&[2, 3], 3), m(&[1, 2, 3], 3)];
        assert_eq!(minimal_rules(&valid), vec![m(&[2], 3)]);

        let all: Vec<_> = subsets(SourceMask::full(2).unwrap()).collect();
        assert_eq!(minimal_rules(&all), vec![m(&[], 2)]);
        assert!(minimal_rules(&[]).is_empty());
    }

    #[test]
    fn concrete_input_examples() {
        let input = InputSet::new(
            vec!["a".into(), "b".into(), "c".into()],
            Context::new("q"),
        )
        .unwrap();
        let s2 = m(&[2], 3);
        assert_eq!(
            concrete_input(s2, Interpretation::Retention, &input).unwrap(),
            vec!["b"]
        );
        assert_eq!(
            concrete_input(s2, Interpretation::Omission, &input).unwrap(),
            vec!["a", "c"]
        );
        assert!(concrete_input(input.full_mask(), Interpretation::Omission, &input)
            .unwrap()
            .is_empty());
        assert!(matches!(
            concrete_input(m(&[1], 4), Interpretation::Retention, &input),
            Err(LatticeError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn mask_construction_guards() {
        assert!(SourceMask::new(0b100, 2).is_err());
        assert!(SourceMask::from_indices([0], 3).is_err());
        assert!(SourceMask::from_indices([4], 3).is_err());
        assert_eq!(m(&[2, 3], 4).bits(), 0b0110);
        assert_eq!(m(&[2, 3], 4).indices(), vec![2, 3]);
        assert_eq!(SourceMask::full(64).unwrap().complement().bits(), 0);
    }

    #[test]
    fn subset_iterators_cover_powersets() {
        let mask = m(&[1, 3, 4], 5);
        assert_eq!(subsets(mask).count(), 8);
        assert!(subsets(mask).all(|s| s.is_subset_of(mask)));
        assert_eq!(supersets(mask).count(), 4);
        assert!(supersets(mask).all(|s| mask.is_subset_of(s)));
    }
}
