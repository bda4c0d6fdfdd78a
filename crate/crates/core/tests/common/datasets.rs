use std::fs;
use std::path::{Path, PathBuf};

use solrefine_core::llm::{ScriptedBackend, ScriptedReply};
use solrefine_core::model::{BenchmarkTask, RequirementMode, RunState, ToolCall};
use solrefine_core::refine::{prepare_workdir, LoopConfig, Refiner};
use solrefine_core::toolbox::{SandboxPolicy, Toolbox};
use solrefine_core::trajectory::{Dataset, JsonlRecord};
use solrefine_core::verify::{FakeRound, FakeVerifier};
use tempfile::TempDir;

use super::{code, codes, distinct, king_task};

/// Repository with a large library file so tool output pushes samples past
/// the truncation limit.
pub fn big_repo(dir: &Path) -> PathBuf {
    let root = dir.join("repo");
    fs::create_dir_all(root.join("src")).unwrap();
    fs::create_dir_all(root.join("test")).unwrap();
    fs::create_dir_all(root.join("lib")).unwrap();
    fs::write(root.join("test/King.t.sol"), "contract KingTest {}\n").unwrap();
    let words: Vec<String> = (0..6000).map(|i| format!("w{i}")).collect();
    fs::write(root.join("lib/Big.sol"), format!("// {}\n", words.join(" "))).unwrap();
    root
}

pub fn task(id: &str, root: &Path) -> BenchmarkTask {
    let mut t = king_task();
    t.task_id = id.into();
    t.repo_root = root.to_path_buf();
    t.reference_solution = None;
    t.requirement_summary = Some("Highest bidder becomes king; the old king is paid.".into());
    t
}

/// `tool_round`: coding, one refine round reading lib/Big.sol, success.
/// Otherwise: coding round passes immediately.
pub fn run(id: &str, root: &Path, mode: RequirementMode, tool_round: bool, succeed: bool) -> RunState {
    let task = task(id, root);
    let tmp = TempDir::new().unwrap();
    let work = prepare_workdir(&task, &tmp.path().join("w")).unwrap();
    let toolbox = Toolbox::new(&SandboxPolicy::new(work, task.deny_patterns.clone())).unwrap();
    let (script, rounds) = if tool_round {
        (
            vec![
                ScriptedReply::code(&code(0)),
                ScriptedReply::calls(vec![ToolCall::new("c1", "read_file").with_arg("path", "lib/Big.sol")]),
                ScriptedReply::code(&code(1)),
            ],
            vec![distinct(1, 3, "one"), FakeRound::tests(3, 3)],
        )
    } else if succeed {
        (codes(1), vec![FakeRound::tests(3, 3)])
    } else {
        (codes(5), vec![distinct(1, 3, "a"), distinct(1, 3, "b"), distinct(1, 3, "c")])
    };
    let llm = ScriptedBackend::new(script);
    let verifier = FakeVerifier::new(rounds);
    let config = LoopConfig::default();
    let refiner = Refiner::new(&task, &llm, &verifier, &toolbox, &config).with_mode(mode);
    refiner.run(refiner.fresh_state()).unwrap()
}

pub fn fixture_runs(root: &Path) -> Vec<RunState> {
    vec![
        run("king-a", root, RequirementMode::Full, true, true),
        run("king-b", root, RequirementMode::Full, false, true),
        run("king-c", root, RequirementMode::Full, false, false),
        run("king-a", root, RequirementMode::Summary, true, true),
        run("king-b", root, RequirementMode::Summary, false, true),
    ]
}

pub fn jsonl(ds: &Dataset) -> Vec<JsonlRecord> {
    let mut buf = Vec::new();
    ds.write_jsonl(&mut buf).unwrap();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}
