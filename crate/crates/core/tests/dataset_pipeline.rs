mod common;

use std::collections::BTreeSet;

use common::datasets::{big_repo, fixture_runs, jsonl, run};
use solrefine_core::llm::message_tokens;
use solrefine_core::model::{RequirementMode, Role};
use solrefine_core::trajectory::{
    build_dataset, dataset_stats, split, truncate, BuildOptions, Dataset, DatasetVariant, TruncateMode,
};
use tempfile::TempDir;

#[test]
fn stats_match_hand_counts() {
    let tmp = TempDir::new().unwrap();
    let runs = fixture_runs(&big_repo(tmp.path()));

    // king-a: round 0 = [system, user, assistant]; round 1 adds
    // [system, user, assistant(call), tool, assistant] -> samples of 3 and 8.
    // king-b: one sample of 3. king-c stagnated and is filtered out.
    let tracker = build_dataset(&runs, DatasetVariant::Tracker, BuildOptions::default()).unwrap();
    let s = dataset_stats(&tracker);
    assert_eq!(s.sample_count, 3);
    assert_eq!(s.total_messages, 3 + 8 + 3);
    assert_eq!(s.samples_with_tool_calls, 1);
    assert_eq!((s.tool_messages, s.assistant_tool_messages), (1, 1));
    assert!((s.avg_messages_per_sample - 14.0 / 3.0).abs() < 1e-12);

    let mix = build_dataset(&runs, DatasetVariant::Mix, BuildOptions::default()).unwrap();
    let m = dataset_stats(&mix);
    assert_eq!((m.sample_count, m.total_messages, m.samples_with_tool_calls), (6, 28, 2));
    assert_eq!((m.tool_messages, m.assistant_tool_messages), (2, 2));

    // the JSONL export carries the same counts
    let lines = jsonl(&mix);
    assert_eq!(lines.len(), 6);
    assert_eq!(lines.iter().map(|l| l.messages.len()).sum::<usize>(), 28);
    assert_eq!(lines.iter().filter(|l| l.tags == ["mix-summary"]).count(), 3);
    assert!(lines.iter().flat_map(|l| &l.messages).all(|m| m.meta.is_empty()));

    let all = build_dataset(&runs, DatasetVariant::Tracker, BuildOptions { include_all: true }).unwrap();
    assert_eq!(all.task_ids(), vec!["king-a", "king-b", "king-c"]);
}

#[test]
fn truncated_lines_fit_the_limit() {
    let tmp = TempDir::new().unwrap();
    let runs = fixture_runs(&big_repo(tmp.path()));
    let mix = build_dataset(&runs, DatasetVariant::Mix, BuildOptions::default()).unwrap();
    let longest = mix
        .samples
        .iter()
        .map(|s| s.messages.iter().map(message_tokens).sum::<usize>())
        .max()
        .unwrap();
    assert!(longest > 4096, "fixture must exceed the limit, longest is {longest}");
    for mode in [TruncateMode::Forward, TruncateMode::Backward] {
        let cut = Dataset {
            samples: mix.samples.iter().map(|s| truncate(s, 4096, mode)).collect(),
            ..mix.clone()
        };
        for line in jsonl(&cut) {
            let tokens: usize = line.messages.iter().map(message_tokens).sum();
            assert!(tokens <= 4096, "{mode:?}: {tokens}");
        }
        if mode == TruncateMode::Backward {
            for (orig, short) in mix.samples.iter().zip(&cut.samples) {
                assert_eq!(orig.messages.last(), short.messages.last());
                assert_eq!(short.messages.last().unwrap().role, Role::Assistant);
            }
        } else {
            for (orig, short) in mix.samples.iter().zip(&cut.samples) {
                assert_eq!(orig.messages.first(), short.messages.first());
            }
        }
    }
}

#[test]
fn split_never_leaks_over_a_hundred_seeds() {
    let tmp = TempDir::new().unwrap();
    let root = big_repo(tmp.path());
    let mut runs = fixture_runs(&root);
    for i in 0..7 {
        runs.push(run(&format!("extra-{i}"), &root, RequirementMode::Full, false, true));
    }
    let mix = build_dataset(&runs, DatasetVariant::Mix, BuildOptions::default()).unwrap();
    let n = mix.task_ids().len();
    assert_eq!(n, 9);
    for seed in 0..100 {
        let (train, test) = split(&mix, 0.8, seed).unwrap();
        let a: BTreeSet<_> = train.task_ids().into_iter().collect();
        let b: BTreeSet<_> = test.task_ids().into_iter().collect();
        assert!(a.is_disjoint(&b), "seed {seed}");
        assert_eq!(a.len(), 7);
        assert_eq!(train.samples.len() + test.samples.len(), mix.samples.len());
        assert_eq!(split(&mix, 0.8, seed).unwrap().0, train);
    }
}
