//! Acceptance suite: one PASS/FAIL/SKIP line per criterion, non-zero exit
//! on any failure.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use solrefine_core::analysis::{sequence_match_ratio, source_metrics};
use solrefine_core::llm::{message_tokens, transcript_tokens, ScriptedBackend, ScriptedReply};
use solrefine_core::metrics::{compile_rate, overall_pass1, pass_at_k, token_report, FileResult, VulnComparison};
use solrefine_core::model::{validate_transcript, RequirementMode, Role, TerminationKind, ToolCall};
use solrefine_core::refine::{
    prepare_workdir, prune_messages, resume_or_run, task_dir, LoopConfig, Refiner, TERMINAL_FILE,
};
use solrefine_core::toolbox::{SandboxPolicy, Toolbox};
use solrefine_core::trajectory::{build_dataset, dataset_stats, split, truncate, BuildOptions, DatasetVariant, TruncateMode};
use solrefine_core::verify::{FakeRound, FakeVerifier, ToolchainVerifier, Verifier, VerifierConfig};
use tempfile::TempDir;

enum Verdict {
    Pass(String),
    Skip(String),
}

type Check = Result<Verdict, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn pass(detail: impl Into<String>) -> Check {
    Ok(Verdict::Pass(detail.into()))
}

fn kind_of(state: &solrefine_core::model::RunState) -> Option<TerminationKind> {
    state.terminated.as_ref().map(|t| t.kind)
}

// ---------------------------------------------------------------- pass@k

/// Fraction of k-subsets of n samples (the first c correct) holding at
/// least one correct sample, by enumerating bitmasks.
fn pass_at_k_enumerated(n: u32, c: u32, k: u32) -> f64 {
    let correct: u32 = (1u32 << c) - 1;
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() == k {
            total += 1;
            if mask & correct != 0 {
                hit += 1;
            }
        }
    }
    hit as f64 / total as f64
}

fn check_pass_at_k() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in 1..=12u32 {
        for c in 0..=n {
            for k in 1..=n {
                let got = pass_at_k(n.into(), c.into(), k.into()).map_err(|e| format!("n={n} c={c} k={k}: {e}"))?;
                let want = pass_at_k_enumerated(n, c, k);
                worst = worst.max((got - want).abs());
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(worst <= 1e-12, "max abs error {worst:e}");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    pass(format!("{cases} cases, max error {worst:e}, {elapsed:.2?}"))
}

// ------------------------------------------------------- table arithmetic

fn file(id: usize, compiled: bool, total: u32, passed: u32, usage: serde_json::Value) -> FileResult {
    serde_json::from_value(json!({
        "task_id": format!("f{id:04}"),
        "compiled": compiled,
        "total_tests": total,
        "passed_tests": passed,
        "gas_by_test": {},
        "findings": {"high": 0, "medium": 0, "low": 0},
        "source_metrics": {"loc": 0, "ploc": 0, "functions": [], "complexity": 0},
        "usage": usage,
    }))
    .unwrap()
}

fn within(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, want {want}"))
    }
}

fn check_table_arithmetic() -> Check {
    let files: Vec<FileResult> = (0..1188).map(|i| file(i, i < 765, 1, 0, json!([]))).collect();
    let rate = compile_rate(&files).map_err(|e| e.to_string())?;
    within(100.0 * rate, 64.39, 0.01, "compile rate 765/1188")?;

    let suite = vec![file(0, true, 81, 77, json!([]))];
    let p1 = overall_pass1(&suite).map_err(|e| e.to_string())?;
    within(100.0 * p1, 95.06, 0.01, "pass@1 77/81")?;

    for (method, baseline, want) in [(156, 259, -39.77), (247, 293, -15.70)] {
        let d = VulnComparison::from_totals(1, baseline, method).delta_pct.ok_or("no delta")?;
        within(d, want, 0.01, &format!("vuln delta {method}/{baseline}"))?;
    }

    let mut compiled: Vec<FileResult> = (0..77).map(|i| file(i, true, 1, 1, json!([]))).collect();
    compiled[0] = file(
        0,
        true,
        1,
        1,
        json!([
            {"phase": "coding", "round": 0, "prompt_tokens": 1_000_000, "completion_tokens": 100_000},
            {"phase": "refine", "round": 1, "prompt_tokens": 4_044_241, "completion_tokens": 312_959},
        ]),
    );
    let tokens = token_report(&compiled);
    ensure!(tokens.total_prompt == 5_044_241 && tokens.total_completion == 412_959, "token totals off");
    let prompt = tokens.avg_total_prompt_per_file.ok_or("no prompt average")?.round();
    let completion = tokens.avg_total_completion_per_file.ok_or("no completion average")?.round();
    ensure!(prompt == 65_510.0, "prompt per file {prompt}");
    ensure!(completion == 5_363.0, "completion per file {completion}");
    pass("64.39%, 95.06%, -39.77%, -15.70%, 65,510, 5,363")
}

// ------------------------------------------------------------ similarity

/// Ratcliff-Obershelp: longest common block (earliest in `a`, then in
/// `b`), recursing on both sides.
fn ro_matches(a: &[char], b: &[char]) -> usize {
    let (mut bi, mut bj, mut bk) = (0, 0, 0);
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut k = 0;
            while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                k += 1;
            }
            if k > bk {
                (bi, bj, bk) = (i, j, k);
            }
        }
    }
    if bk == 0 {
        return 0;
    }
    bk + ro_matches(&a[..bi], &b[..bj]) + ro_matches(&a[bi + bk..], &b[bj + bk..])
}

fn ro_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * ro_matches(&a, &b) as f64 / (a.len() + b.len()) as f64
}

fn random_string(rng: &mut ChaCha8Rng, alphabet: &[u8]) -> String {
    let len = rng.gen_range(0..=64);
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())] as char).collect()
}

fn check_similarity() -> Check {
    let exact = sequence_match_ratio("abcd", "bcde");
    ensure!(exact == 0.75, "(abcd, bcde) = {exact}");
    let alphabets: [&[u8]; 4] = [b"ab", b"abcd", b"abcdefghij", b"abcdefghijklmnopqrstuvwxyz {}();=+"];
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b5e);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let alphabet = alphabets[i % alphabets.len()];
        let a = random_string(&mut rng, alphabet);
        let b = if rng.gen_bool(0.3) {
            // near-duplicate: a few point edits
            let mut chars: Vec<char> = a.chars().collect();
            for _ in 0..rng.gen_range(0..4) {
                if !chars.is_empty() {
                    let at = rng.gen_range(0..chars.len());
                    chars[at] = alphabet[rng.gen_range(0..alphabet.len())] as char;
                }
            }
            chars.into_iter().collect()
        } else {
            random_string(&mut rng, alphabet)
        };
        let err = (sequence_match_ratio(&a, &b) - ro_ratio(&a, &b)).abs();
        ensure!(err <= 1e-12, "{a:?} vs {b:?}: error {err}");
        worst = worst.max(err);
    }
    pass(format!("10,000 pairs, max error {worst:e}"))
}

// -------------------------------------------------------------- stopping

fn check_stopping() -> Check {
    let start = Instant::now();
    let config = LoopConfig::default();

    let o = run_scripted(codes(10), vec![FakeRound::tests(1, 3)], &config);
    ensure!(kind_of(&o.state) == Some(TerminationKind::Oscillation), "(a) ended {:?}", kind_of(&o.state));
    ensure!(o.state.history.len() <= 2, "(a) took {} verifications", o.state.history.len());

    let flat = vec![distinct(2, 4, "alpha"), distinct(2, 4, "bravo"), distinct(2, 4, "charlie")];
    let o = run_scripted(codes(10), flat, &config);
    ensure!(kind_of(&o.state) == Some(TerminationKind::Stagnation), "(b) ended {:?}", kind_of(&o.state));
    let rates: Vec<f64> = o.state.history.iter().map(|r| r.forge.pass_rate()).collect();
    ensure!(rates == [0.5, 0.5, 0.5], "(b) pass rates {rates:?}");

    let o = run_scripted(codes(10), vec![distinct(1, 3, "first"), FakeRound::tests(3, 3)], &config);
    ensure!(kind_of(&o.state) == Some(TerminationKind::Success), "(c) ended {:?}", kind_of(&o.state));

    // (d) a climbing script that defeats every other rule, then random ones
    let climbing: Vec<FakeRound> = (1..=60).map(|i| FakeRound::tests(i, 60)).collect();
    let open = LoopConfig {
        similarity_tau: 1.0,
        ..Default::default()
    };
    let o = run_scripted(codes(60), climbing, &open);
    ensure!(o.state.round == 50, "(d) climbing run stopped at round {}", o.state.round);
    ensure!(kind_of(&o.state) == Some(TerminationKind::MaxRounds), "(d) ended {:?}", kind_of(&o.state));
    let mut rng = ChaCha8Rng::seed_from_u64(0xd0d0);
    let mut longest = 0;
    for case in 0..40 {
        let rounds: Vec<FakeRound> = (0..rng.gen_range(1..8))
            .map(|r| {
                let total = rng.gen_range(1..6);
                distinct(rng.gen_range(0..=total), total, &format!("c{case}r{r}x"))
            })
            .collect();
        let tau = rng.gen_range(0.5..=1.0);
        let config = LoopConfig {
            similarity_tau: tau,
            ..Default::default()
        };
        let o = run_scripted(codes(60), rounds, &config);
        ensure!(o.state.round <= 50, "(d) case {case} reached round {}", o.state.round);
        ensure!(o.state.terminated.is_some(), "(d) case {case} did not terminate");
        longest = longest.max(o.state.round);
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "suite took {elapsed:?}");
    pass(format!("oscillation, stagnation, success, cap 50 (longest random run {longest}); {elapsed:.2?}"))
}

// ---------------------------------------------------------- best tracking

fn check_best_tracking() -> Check {
    let rounds = vec![distinct(9, 10, "first"), distinct(3, 10, "second"), distinct(3, 10, "third")];
    let o = run_scripted(codes(10), rounds, &LoopConfig::default());
    let best = o.state.best.as_ref().ok_or("no best candidate")?;
    ensure!(best.score.pass_rate == 0.9, "best pass rate {}", best.score.pass_rate);
    ensure!(best.round == 0 && best.code == code(0), "best is round {}", best.round);
    pass("0.9 kept over later 0.3")
}

// ---------------------------------------------------------- crash/resume

fn check_resume() -> Check {
    let (expected, steps) = scenarios::uninterrupted();
    for kill_after in 1..=steps {
        let task = king_task();
        let ws = Workspace::new(&task);
        let config = LoopConfig::default();
        {
            let (script, fake) = scenarios::scenario();
            let llm = ScriptedBackend::new(script);
            let verifier = FakeVerifier::new(fake);
            let refiner = Refiner::new(&task, &llm, &verifier, &ws.toolbox, &config).with_checkpoints(ws.checkpoints());
            let mut state = refiner.fresh_state();
            for _ in 0..kill_after {
                refiner.step(&mut state).map_err(|e| e.to_string())?;
            }
        }
        let (script, fake) = scenarios::scenario();
        let llm = ScriptedBackend::new(script);
        let verifier = FakeVerifier::new(fake);
        let refiner = Refiner::new(&task, &llm, &verifier, &ws.toolbox, &config).with_checkpoints(ws.checkpoints());
        resume_or_run(&refiner).map_err(|e| e.to_string())?;
        let got = std::fs::read_to_string(task_dir(&ws.checkpoints(), &task.task_id).join(TERMINAL_FILE))
            .map_err(|e| e.to_string())?;
        ensure!(got == expected, "state differs after kill at step {kill_after}");

        let (script, fake) = scenarios::scenario();
        let llm = ScriptedBackend::new(script);
        let verifier = FakeVerifier::new(fake);
        let refiner = Refiner::new(&task, &llm, &verifier, &ws.toolbox, &config).with_checkpoints(ws.checkpoints());
        resume_or_run(&refiner).map_err(|e| e.to_string())?;
        ensure!(
            (llm.calls(), verifier.calls()) == (0, 0),
            "finished task made {} model / {} verifier calls",
            llm.calls(),
            verifier.calls()
        );
    }
    pass(format!("{steps} kill points byte-identical; finished runs make zero calls"))
}

// --------------------------------------------------------------- sandbox

fn check_sandbox() -> Check {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let root = sandbox::build(tmp.path());
    let policy = SandboxPolicy::new(&root, sandbox::DENY.map(String::from).to_vec());
    let toolbox = Toolbox::new(&policy).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut denied = 0;
    for i in 0..1000 {
        let path = sandbox::random_path(&mut rng);
        let tool = if i % 2 == 0 { "read_file" } else { "list_directory" };
        let call = ToolCall::new(format!("c{i}"), tool).with_arg("path", path.as_str());
        let outcome = catch_unwind(AssertUnwindSafe(|| toolbox.dispatch(&call))).map_err(|_| format!("{tool} {path:?} panicked"))?;
        ensure!(outcome.message.role == Role::Tool, "{path:?} did not yield a tool message");
        for marker in sandbox::MARKERS {
            ensure!(!outcome.message.content.contains(marker), "{tool} {path:?} leaked {marker}");
        }
        denied += usize::from(outcome.failed);
    }
    pass(format!("1,000 paths, {denied} refused, nothing leaked"))
}

// ------------------------------------------------------------ complexity

fn check_complexity() -> Check {
    let all = complexity::expected();
    ensure!(all.len() == 10, "{} fixtures", all.len());
    for (name, want) in &all {
        let got = source_metrics(&complexity::source(name));
        ensure!(
            (got.loc, got.ploc, got.complexity) == (want.loc, want.ploc, want.complexity),
            "{name}: got {}/{}/{}, want {}/{}/{}",
            got.loc,
            got.ploc,
            got.complexity,
            want.loc,
            want.ploc,
            want.complexity
        );
    }
    const WORDS: [&str; 10] = ["if", "while", "for", "case", "catch", "&&", "||", "?", "require", "assert"];
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0c0);
    let mut variants = 0;
    for (name, want) in &all {
        let src = complexity::source(name);
        for _ in 0..30 {
            let words: Vec<&str> = (0..rng.gen_range(1..6)).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
            let words = words.join(" ");
            // block comment appended to the first line
            let m = source_metrics(&complexity::inject(&src, 1, &format!(" /* {words} */")));
            ensure!(m.complexity == want.complexity && m.loc == want.loc, "{name}: block comment {words:?} changed metrics");
            // string literal: same metrics as the line with neutral content
            let m = source_metrics(&format!("{src}\nstring constant NOISE = \"{words}\";\n"));
            let plain = source_metrics(&format!("{src}\nstring constant NOISE = \"x\";\n"));
            ensure!(
                (m.loc, m.ploc, m.complexity) == (plain.loc, plain.ploc, plain.complexity) && m.loc == want.loc + 1,
                "{name}: string {words:?} changed metrics"
            );
            // whole comment line: only ploc grows
            let m = source_metrics(&format!("// {words}\n{src}"));
            ensure!(
                (m.loc, m.ploc, m.complexity) == (want.loc, want.ploc + 1, want.complexity),
                "{name}: comment line {words:?} changed metrics"
            );
            variants += 3;
        }
    }
    pass(format!("10 fixtures exact, {variants} metamorphic variants unchanged"))
}

// --------------------------------------------------------------- pruning

fn check_pruning() -> Check {
    let t = scenarios::long_transcript(20);
    let total = transcript_tokens(&t);
    let tool: usize = t.iter().filter(|m| m.role == Role::Tool).map(message_tokens).sum();
    ensure!(tool * 10 >= total * 7, "tool outputs are only {tool}/{total} tokens");
    let pruned = prune_messages(&t, 2);
    validate_transcript(&pruned).map_err(|e| format!("pruned transcript invalid: {e}"))?;
    let after = transcript_tokens(&pruned);
    let saved = 1.0 - after as f64 / total as f64;
    ensure!(saved >= 0.5, "only {:.1}% saved", 100.0 * saved);
    pass(format!("{total} -> {after} tokens ({:.1}% saved)", 100.0 * saved))
}

// --------------------------------------------------------------- dataset

fn check_dataset() -> Check {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let root = datasets::big_repo(tmp.path());
    let mut runs = datasets::fixture_runs(&root);
    let err = |e: solrefine_core::trajectory::TrajectoryError| e.to_string();

    let tracker = build_dataset(&runs, DatasetVariant::Tracker, BuildOptions::default()).map_err(err)?;
    let s = dataset_stats(&tracker);
    ensure!(
        (s.sample_count, s.total_messages, s.samples_with_tool_calls, s.tool_messages, s.assistant_tool_messages)
            == (3, 14, 1, 1, 1),
        "tracker stats {s:?}"
    );
    let mix = build_dataset(&runs, DatasetVariant::Mix, BuildOptions::default()).map_err(err)?;
    let m = dataset_stats(&mix);
    ensure!(
        (m.sample_count, m.total_messages, m.samples_with_tool_calls, m.tool_messages, m.assistant_tool_messages)
            == (6, 28, 2, 2, 2),
        "mix stats {m:?}"
    );
    let exported = datasets::jsonl(&mix);
    ensure!(exported.len() == 6, "{} JSONL lines", exported.len());

    let mut longest = 0;
    for mode in [TruncateMode::Forward, TruncateMode::Backward] {
        for sample in &mix.samples {
            let cut = truncate(sample, 4096, mode);
            let tokens: usize = cut.messages.iter().map(message_tokens).sum();
            ensure!(tokens <= 4096, "{mode:?} line has {tokens} tokens");
            validate_transcript(&cut.messages).map_err(|e| format!("{mode:?}: {e}"))?;
            longest = longest.max(sample.messages.iter().map(message_tokens).sum::<usize>());
        }
    }
    ensure!(longest > 4096, "fixture never exceeds the limit");

    for i in 0..7 {
        runs.push(datasets::run(&format!("extra-{i}"), &root, RequirementMode::Full, false, true));
    }
    let mix = build_dataset(&runs, DatasetVariant::Mix, BuildOptions::default()).map_err(err)?;
    for seed in 0..100 {
        let (train, test) = split(&mix, 0.8, seed).map_err(err)?;
        let a: BTreeSet<_> = train.task_ids().into_iter().collect();
        let b: BTreeSet<_> = test.task_ids().into_iter().collect();
        ensure!(a.is_disjoint(&b), "seed {seed} leaks {:?}", a.intersection(&b).collect::<Vec<_>>());
        ensure!(train.samples.len() + test.samples.len() == mix.samples.len(), "seed {seed} lost samples");
    }
    pass(format!("stats 3/14/1 and 6/28/2, truncation <= 4096 (longest {longest}), 100 seeds leak-free"))
}

// ----------------------------------------------------------- integration

fn check_integration() -> Check {
    let verifier = ToolchainVerifier::new(VerifierConfig::default());
    let missing = verifier.missing_tools();
    if !missing.is_empty() {
        return Ok(Verdict::Skip(format!("not installed: {}", missing.join(", "))));
    }
    let task = king_task();
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let work = prepare_workdir(&task, &tmp.path().join("work")).map_err(|e| e.to_string())?;
    let findings = verifier.run_slither(&work, &task).map_err(|e| e.to_string())?;
    ensure!(
        findings.iter().any(|f| f.detector_id.starts_with("reentrancy")),
        "no reentrancy finding on the baseline: {findings:?}"
    );

    let fixed = std::fs::read_to_string(fixtures().join("king/reference/King.sol")).map_err(|e| e.to_string())?;
    std::fs::write(work.join(&task.target_file), &fixed).map_err(|e| e.to_string())?;
    let findings = verifier.run_slither(&work, &task).map_err(|e| e.to_string())?;
    ensure!(
        !findings.iter().any(|f| f.detector_id.starts_with("reentrancy")),
        "reentrancy reported on the fixed contract: {findings:?}"
    );

    let start = Instant::now();
    let ws = Workspace::new(&task);
    let llm = ScriptedBackend::new(vec![ScriptedReply::code(&fixed)]);
    let config = LoopConfig::default();
    let refiner = Refiner::new(&task, &llm, &verifier, &ws.toolbox, &config);
    let state = refiner.run(refiner.fresh_state()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(kind_of(&state) == Some(TerminationKind::Success), "run ended {:?}", state.terminated);
    ensure!(elapsed < Duration::from_secs(300), "run took {elapsed:?}");
    pass(format!("baseline flagged, fixed clean, success in {elapsed:.1?}"))
}

fn main() -> ExitCode {
    let checks: [Criterion; 11] = [
        ("pass@k oracle equivalence", check_pass_at_k),
        ("table arithmetic reproduction", check_table_arithmetic),
        ("similarity conformance", check_similarity),
        ("stopping behavior", check_stopping),
        ("best-tracking regression", check_best_tracking),
        ("crash/resume idempotency", check_resume),
        ("sandbox path fuzzing", check_sandbox),
        ("complexity analyzer", check_complexity),
        ("pruning bound", check_pruning),
        ("dataset pipeline", check_dataset),
        ("toolchain integration", check_integration),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(Verdict::Pass(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Verdict::Skip(reason)) => println!("SKIP  {name}: {reason}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name}: {reason}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
