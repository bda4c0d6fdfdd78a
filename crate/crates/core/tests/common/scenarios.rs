use solrefine_core::llm::{ScriptedBackend, ScriptedReply};
use solrefine_core::model::{Message, ToolCall};
use solrefine_core::refine::{task_dir, LoopConfig, Refiner, TERMINAL_FILE};
use solrefine_core::verify::{FakeRound, FakeVerifier};

use super::{code, distinct, king_task, Workspace};

/// Five verifications with one tool round, ending in success.
pub fn scenario() -> (Vec<ScriptedReply>, Vec<FakeRound>) {
    let script = vec![
        ScriptedReply::code(&code(0)),
        ScriptedReply::calls(vec![ToolCall::new("c1", "read_file").with_arg("path", "foundry.toml")]),
        ScriptedReply::code(&code(1)),
        ScriptedReply::code(&code(2)),
        ScriptedReply::code(&code(3)),
        ScriptedReply::code(&code(4)),
    ];
    let rounds = vec![
        distinct(1, 5, "north"),
        distinct(2, 5, "east"),
        distinct(3, 5, "south"),
        distinct(4, 5, "west"),
        FakeRound::tests(5, 5),
    ];
    (script, rounds)
}

/// Terminal checkpoint bytes and verification count of an unbroken run.
pub fn uninterrupted() -> (String, usize) {
    let task = king_task();
    let ws = Workspace::new(&task);
    let (script, rounds) = scenario();
    let llm = ScriptedBackend::new(script);
    let verifier = FakeVerifier::new(rounds);
    let config = LoopConfig::default();
    let refiner = Refiner::new(&task, &llm, &verifier, &ws.toolbox, &config).with_checkpoints(ws.checkpoints());
    let state = refiner.run(refiner.fresh_state()).unwrap();
    let bytes = std::fs::read_to_string(task_dir(&ws.checkpoints(), &task.task_id).join(TERMINAL_FILE)).unwrap();
    assert_eq!(state.to_json(), bytes.trim_end());
    (bytes, state.history.len())
}

/// `rounds` refinement rounds, each with feedback, one large tool read and
/// a code reply.
pub fn long_transcript(rounds: u32) -> Vec<Message> {
    let mut t = vec![
        Message::system("You write Solidity."),
        Message::user("Implement the token."),
        Message::assistant("```solidity\ncontract T {}\n```"),
    ];
    for r in 1..=rounds {
        t.push(Message::user(format!(
            "Verification feedback for round {r}: passed 1/2\ncompile: success\npassed: 1/2\nfailures (1):\n- T::test_x: boom"
        )));
        let id = format!("call-{r}");
        t.push(Message::assistant_with_calls("", vec![ToolCall::new(&id, "read_file").with_arg("path", "src/I.sol")]));
        t.push(Message::tool(&id, "interface I { function f() external; } ".repeat(40)));
        t.push(Message::assistant("```solidity\ncontract T { uint x; }\n```"));
    }
    t
}
