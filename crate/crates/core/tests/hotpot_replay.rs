use std::path::PathBuf;
use std::sync::Arc;

use rulemine_core::bench::{
    hotpot_predicates, load_hotpot, run_curves, write_curve_files, CurveOptions, HotpotExample,
};
use rulemine_core::model::{ChatModel, ChatSettings, RagModel, TranscriptReplay};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn examples() -> Vec<HotpotExample> {
    load_hotpot(&fixtures().join("hotpot_sample.json"))
        .unwrap()
        .examples
        .into_iter()
        .filter(|e| e.supporting_fact_count() == 3)
        .collect()
}

fn replay() -> Arc<dyn ChatModel> {
    Arc::new(TranscriptReplay::load(&fixtures().join("hotpot_transcript.jsonl")).unwrap())
}

#[test]
fn sample_loads_with_expected_filtering() {
    let load = load_hotpot(&fixtures().join("hotpot_sample.json")).unwrap();
    assert_eq!(load.examples.len(), 5);
    assert!(load.skipped.is_empty());
    assert_eq!(examples().len(), 4);
    assert!(examples().iter().all(|e| e.sentence_count() >= 6));

    let bad = load_hotpot(&fixtures().join("hotpot_malformed.json")).unwrap();
    assert_eq!(bad.examples.len(), 1);
    assert_eq!(bad.skipped.len(), 2);
}

#[test]
fn replayed_curves_are_deterministic() {
    let chat = replay();
    let settings = ChatSettings::new("gpt-4o-mini-2024-07-18");
    let client = RagModel::new(chat.clone(), settings.clone());
    let exs = examples();
    let run = |parallel| {
        run_curves(
            &exs,
            &client,
            |ex| hotpot_predicates(ex, &chat, &settings),
            &CurveOptions {
                parallel_examples: parallel,
                ..Default::default()
            },
        )
    };
    let first = run(false);
    assert!(first.excluded.is_empty(), "{:?}", first.excluded);
    assert_eq!(first.runs.len(), 4 * 7);
    assert_eq!(first.metrics.len(), 7);
    assert_eq!(first, run(true));

    for m in &first.metrics {
        assert_eq!(m.duplicate_subset_fraction, 0.0, "k={}", m.n);
        for p in [m.mono_retention_explored, m.mono_omission_explored, m.dual_explored] {
            assert!((0.0..=1.0).contains(&p));
        }
        // Dual visits a node iff at least one Mono run evaluates it.
        assert!(m.dual_explored >= m.mono_retention_explored.max(m.mono_omission_explored));
    }
    // A one-node lattice is always fully explored.
    assert_eq!(first.metrics[0].mono_retention_explored, 1.0);
    assert_eq!(first.metrics[0].dual_explored, 1.0);
    assert!(first.runs.iter().all(|r| r.dual_matches_mono));

    let dir = tempfile::tempdir().unwrap();
    write_curve_files(dir.path(), &first).unwrap();
    for name in ["fig4a.csv", "fig4b.csv", "fig5.csv", "fig6b.csv", "curves.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn replay_misses_are_reported_per_example() {
    // A different model name changes every request hash.
    let chat = replay();
    let settings = ChatSettings::new("some-other-model");
    let client = RagModel::new(chat.clone(), settings.clone());
    let exs = examples();
    let report = run_curves(
        &exs[..1],
        &client,
        |ex| hotpot_predicates(ex, &chat, &settings),
        &CurveOptions {
            ks: 2..=2,
            ..Default::default()
        },
    );
    assert!(report.runs.is_empty());
    assert_eq!(report.excluded.len(), 1);
    assert!(report.excluded[0].error.contains("no recorded response"));
}
