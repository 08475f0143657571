use std::collections::HashSet;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::lattice::{Context, InputSet};

use super::BenchError;

/// One question in the HotpotQA distribution format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HotpotExample {
    #[serde(rename = "_id", default)]
    pub id: String,
    pub question: String,
    pub answer: String,
    /// `(title, sentences)` paragraphs in dataset order.
    pub context: Vec<(String, Vec<String>)>,
    /// `(title, sentence index)` pointers into `context`.
    pub supporting_facts: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedExample {
    pub position: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct HotpotLoad {
    pub examples: Vec<HotpotExample>,
    pub skipped: Vec<SkippedExample>,
}

struct Sentence<'a> {
    title: &'a str,
    index: usize,
    text: &'a str,
    supporting: bool,
}

impl HotpotExample {
    fn validate(&self) -> Result<(), String> {
        if self.supporting_facts.len() < 2 {
            return Err(format!(
                "has {} supporting facts, expected at least 2",
                self.supporting_facts.len()
            ));
        }
        for (title, index) in &self.supporting_facts {
            let paragraph = self
                .context
                .iter()
                .find(|(t, _)| t == title)
                .ok_or_else(|| format!("supporting fact refers to unknown title {title:?}"))?;
            if *index >= paragraph.1.len() {
                return Err(format!(
                    "supporting fact ({title:?}, {index}) is past the end of a {}-sentence paragraph",
                    paragraph.1.len()
                ));
            }
        }
        Ok(())
    }

    fn sentences(&self) -> Vec<Sentence<'_>> {
        let facts: HashSet<(&str, usize)> = self
            .supporting_facts
            .iter()
            .map(|(t, i)| (t.as_str(), *i))
            .collect();
        self.context
            .iter()
            .flat_map(|(title, sents)| {
                let facts = &facts;
                sents.iter().enumerate().map(move |(index, text)| Sentence {
                    title,
                    index,
                    text,
                    supporting: facts.contains(&(title.as_str(), index)),
                })
            })
            .collect()
    }

    pub fn sentence_count(&self) -> usize {
        self.context.iter().map(|(_, s)| s.len()).sum()
    }

    /// Distinct supporting sentences (duplicates in the fact list count once).
    pub fn supporting_fact_count(&self) -> usize {
        self.sentences().iter().filter(|s| s.supporting).count()
    }
}

/// Reads a HotpotQA-format JSON array, skipping entries that do not validate.
pub fn load_hotpot(path: &Path) -> Result<HotpotLoad, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let format_err = |message: String| BenchError::Format {
        path: path.display().to_string(),
        message,
    };
    let value: Value = serde_json::from_str(&text).map_err(|e| format_err(e.to_string()))?;
    let Value::Array(items) = value else {
        return Err(format_err("top-level value is not an array".into()));
    };

    let mut load = HotpotLoad::default();
    for (position, item) in items.into_iter().enumerate() {
        let parsed = serde_json::from_value::<HotpotExample>(item)
            .map_err(|e| e.to_string())
            .and_then(|ex| ex.validate().map(|_| ex));
        match parsed {
            Ok(example) => load.examples.push(example),
            Err(reason) => {
                warn!("skipping example #{position} in {}: {reason}", path.display());
                load.skipped.push(SkippedExample { position, reason });
            }
        }
    }
    Ok(load)
}

/// Picks `k` sentences as sources: up to three supporting facts first, then
/// non-supporting fillers, all in dataset order. The chosen sentences keep
/// their original relative order.
pub fn build_source_set(example: &HotpotExample, k: usize) -> Result<InputSet, BenchError> {
    let sentences = example.sentences();
    if k > sentences.len() {
        return Err(BenchError::NotEnoughSentences {
            requested: k,
            available: sentences.len(),
        });
    }
    let supporting: Vec<usize> = (0..sentences.len()).filter(|&i| sentences[i].supporting).collect();
    let others: Vec<usize> = (0..sentences.len()).filter(|&i| !sentences[i].supporting).collect();
    let lead = k.min(3).min(supporting.len());
    let mut chosen: Vec<usize> = supporting[..lead]
        .iter()
        .chain(&others)
        .chain(&supporting[lead..])
        .take(k)
        .copied()
        .collect();
    chosen.sort_unstable();

    let sources = chosen
        .iter()
        .map(|&i| format!("{}: {}", sentences[i].title, sentences[i].text.trim()))
        .collect();
    let labels = chosen
        .iter()
        .map(|&i| format!("{}#{}", sentences[i].title, sentences[i].index))
        .collect();
    Ok(InputSet::new(sources, Context::new(example.question.clone()))?.with_labels(labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> HotpotExample {
        HotpotExample {
            id: "x".into(),
            question: "Which element is named after the physicist behind relativity?".into(),
            answer: "Einsteinium".into(),
            context: vec![
                (
                    "Albert Einstein".into(),
                    vec![
                        "Albert Einstein was a theoretical physicist.".into(),
                        " He developed the theory of relativity.".into(),
                        " He received the Nobel Prize in 1921.".into(),
                    ],
                ),
                (
                    "Einsteinium".into(),
                    vec![
                        "Einsteinium is a synthetic element with symbol Es.".into(),
                        " It is named in honor of Albert Einstein.".into(),
                        " It was discovered in 1952.".into(),
                    ],
                ),
            ],
            supporting_facts: vec![
                ("Albert Einstein".into(), 1),
                ("Einsteinium".into(), 0),
                ("Einsteinium".into(), 1),
            ],
        }
    }

    #[test]
    fn three_sources_are_the_supporting_facts() {
        let input = build_source_set(&example(), 3).unwrap();
        assert_eq!(
            input.labels(),
            &["Albert Einstein#1", "Einsteinium#0", "Einsteinium#1"]
        );
        assert_eq!(
            input.sources()[0],
            "Albert Einstein: He developed the theory of relativity."
        );
    }

    #[test]
    fn zero_sources() {
        assert!(build_source_set(&example(), 0).unwrap().is_empty());
    }

    #[test]
    fn six_sources_add_fillers_in_order() {
        let input = build_source_set(&example(), 6).unwrap();
        assert_eq!(
            input.labels(),
            &[
                "Albert Einstein#0",
                "Albert Einstein#1",
                "Albert Einstein#2",
                "Einsteinium#0",
                "Einsteinium#1",
                "Einsteinium#2"
            ]
        );
        let four = build_source_set(&example(), 4).unwrap();
        assert_eq!(
            four.labels(),
            &["Albert Einstein#0", "Albert Einstein#1", "Einsteinium#0", "Einsteinium#1"]
        );
    }

    #[test]
    fn two_sources_are_a_supporting_prefix() {
        let input = build_source_set(&example(), 2).unwrap();
        assert_eq!(input.labels(), &["Albert Einstein#1", "Einsteinium#0"]);
    }

    #[test]
    fn too_many_sources() {
        assert!(matches!(
            build_source_set(&example(), 7),
            Err(BenchError::NotEnoughSentences {
                requested: 7,
                available: 6
            })
        ));
    }

    #[test]
    fn loader_skips_dangling_facts() {
        let mut bad = example();
        bad.supporting_facts.push(("Nobody".into(), 0));
        let mut short = example();
        short.supporting_facts.truncate(1);
        let mut out_of_range = example();
        out_of_range.supporting_facts[0].1 = 9;
        let raw = serde_json::json!([example(), bad, {"question": 3}, short, out_of_range]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        fs::write(&path, raw.to_string()).unwrap();
        let load = load_hotpot(&path).unwrap();
        assert_eq!(load.examples.len(), 1);
        let positions: Vec<_> = load.skipped.iter().map(|s| s.position).collect();
        assert_eq!(positions, vec![1, 2, 3, 4]);
    }

    #[test]
    fn loader_rejects_non_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        fs::write(&path, "not json").unwrap();
        assert!(matches!(load_hotpot(&path), Err(BenchError::Format { .. })));
        assert!(matches!(
            load_hotpot(&dir.path().join("missing.json")),
            Err(BenchError::Io { .. })
        ));
    }
}
