//! Regenerates `fixtures/hotpot_transcript.jsonl` from a simulated reader and
//! judge, so the curve harness can be replayed offline.
//!
//! The simulated reader answers correctly only when it sees all three
//! supporting sentences, paraphrases the answer when it sees two of them, and
//! is misled by the first non-supporting sentence of the example whenever the
//! evidence is incomplete. The judge accepts the gold answer or its known
//! paraphrase.
//!
//! Run with `cargo run -p rulemine-core --example record_hotpot_transcript`.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::Arc;

use rulemine_core::bench::{
    build_source_set, hotpot_predicates, load_hotpot, run_curves, CurveOptions,
};
use rulemine_core::model::{
    ChatModel, ChatRequest, ChatSettings, FnChatModel, ModelError, RagModel, RecordingChatModel,
};
use rulemine_core::predicate::normalize;

const MODEL: &str = "gpt-4o-mini-2024-07-18";

struct Simulated {
    answer: String,
    paraphrase: &'static str,
    wrong: &'static str,
    supporting: HashSet<String>,
    distractor: String,
}

fn flavour(id: &str) -> (&'static str, &'static str) {
    match id {
        "hq-einsteinium" => ("element 99", "Fermium"),
        "hq-jaws" => ("the Buckeye State", "California"),
        "hq-seine" => ("the river that runs past Notre-Dame", "the Loire"),
        "hq-red-special" => ("the Fireplace, his home-built guitar", "a Fender Stratocaster"),
        _ => ("(no paraphrase)", "I am not sure"),
    }
}

fn field<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(label))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let examples: Vec<_> = load_hotpot(&root.join("hotpot_sample.json"))?
        .examples
        .into_iter()
        .filter(|e| e.supporting_fact_count() == 3)
        .collect();

    let mut by_question = HashMap::new();
    for ex in &examples {
        let full = build_source_set(ex, ex.sentence_count())?;
        let three = build_source_set(ex, 3)?;
        let supporting: HashSet<String> = three.sources().iter().cloned().collect();
        let distractor = full
            .sources()
            .iter()
            .find(|s| !supporting.contains(*s))
            .cloned()
            .unwrap_or_default();
        let (paraphrase, wrong) = flavour(&ex.id);
        by_question.insert(
            ex.question.clone(),
            Simulated {
                answer: ex.answer.clone(),
                paraphrase,
                wrong,
                supporting,
                distractor,
            },
        );
    }
    let paraphrases: HashMap<String, &'static str> = by_question
        .values()
        .map(|s| (s.answer.clone(), s.paraphrase))
        .collect();

    let simulate = move |request: &ChatRequest| -> Result<String, ModelError> {
        let user = &request.messages.last().expect("non-empty request").content;
        if let (Some(truth), Some(candidate)) = (
            field(user, "Ground truth answer: "),
            field(user, "Candidate answer: "),
        ) {
            let cand = normalize(candidate);
            let ok = cand.contains(&normalize(truth))
                || paraphrases
                    .get(truth)
                    .is_some_and(|p| cand.contains(&normalize(p)));
            return Ok(if ok { "1" } else { "0" }.to_string());
        }
        let question = field(user, "Question: ").unwrap_or_default();
        let sim = by_question
            .get(question)
            .ok_or_else(|| ModelError::Other(format!("unknown question {question:?}")))?;
        let shown: Vec<&str> = user
            .lines()
            .filter(|l| l.starts_with("Source "))
            .filter_map(|l| l.split_once(": ").map(|(_, text)| text))
            .collect();
        let support = shown.iter().filter(|s| sim.supporting.contains(**s)).count();
        let misled = shown.contains(&sim.distractor.as_str());
        Ok(match (support, misled) {
            (3, _) => format!("{}.", sim.answer),
            (1..=2, true) => format!("{}.", sim.wrong),
            (2, false) => format!("It is {}.", sim.paraphrase),
            _ => "The sources do not contain enough information to answer.".to_string(),
        })
    };

    let recorder = Arc::new(RecordingChatModel::new(FnChatModel(simulate)));
    let chat: Arc<dyn ChatModel> = recorder.clone();
    let settings = ChatSettings::new(MODEL);
    let client = RagModel::new(chat.clone(), settings.clone());
    let report = run_curves(
        &examples,
        &client,
        |ex| hotpot_predicates(ex, &chat, &settings),
        &CurveOptions::default(),
    );
    assert!(report.excluded.is_empty(), "{:?}", report.excluded);

    let out = root.join("hotpot_transcript.jsonl");
    recorder.save(&out)?;
    println!(
        "{} requests recorded to {} ({} runs)",
        recorder.entries().len(),
        out.display(),
        report.runs.len()
    );
    Ok(())
}
