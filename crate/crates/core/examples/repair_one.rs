//! One failing call through the full loop: retrieval from both collections,
//! the reflection prompt, a scripted model that gets it right on the second
//! try, and replayed execution.

use rag_repair::corpus::{Chunk, SourceKind};
use rag_repair::executor::{Executor, ReplayEntry, ReplayFixture};
use rag_repair::repair::{repair_loop, AttemptOutcome, FailingCall, RepairCondition, RepairSettings, ScriptedLlm};
use rag_repair::retrieval::{Bm25Params, LexicalIndex};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let chunks = vec![
        Chunk { doc_id: "man/kubectl_logs.md".into(), ordinal: 0, source_kind: SourceKind::Manual, text: "kubectl logs [-f] [-p] POD [-c CONTAINER]: print the logs for a container in a pod".into() },
        Chunk { doc_id: "ts/00003".into(), ordinal: 0, source_kind: SourceKind::Troubleshooting, text: "Use kubectl logs deploy/cart to read logs through the deployment".into() },
    ];
    let index = LexicalIndex::new(chunks, Bm25Params::default())?;

    let mut fixture = ReplayFixture::new();
    fixture.insert("kubectl logs deploy/cart", ReplayEntry { return_code: 0, stdout: "started\n".into(), stderr: String::new() });
    fixture.insert("kubectl log deploy/cart", ReplayEntry { return_code: 1, stdout: String::new(), stderr: "error: unknown command \"log\" for \"kubectl\"".into() });
    let executor = Executor::replay(fixture);

    let llm = ScriptedLlm::sequence(
        "scripted",
        [
            Ok("Command: kubectl log deploy/cart\n- Read the deployment logs.".to_string()),
            Ok("Command: kubectl logs deploy/cart\n- The subcommand is `logs`, not `log`.".to_string()),
        ],
    );
    let failing = FailingCall::new("show the cart logs", "kubectl log cart", "error: unknown command \"log\" for \"kubectl\"")?;
    let settings = RepairSettings { condition: RepairCondition::Full, max_attempts: 3, ..Default::default() };
    let run = repair_loop(&failing, &llm, &executor, Some(&index), &settings)?;

    let mut out = String::new();
    for e in run.context.manual_evidence.iter().chain(&run.context.troubleshooting_evidence) {
        out += &format!("evidence {} {:.3}\n", e.chunk.doc_id, e.score);
    }
    for a in &run.attempts {
        if let AttemptOutcome::Repaired(o) = &a.outcome {
            out += &format!("attempt {}: {} -> rc {}\n", a.attempt, o.repaired_command, a.execution.return_code);
        }
    }
    out += &format!("passed: {}\n", run.passed());
    let second_prompt = &llm.prompts()[1];
    out += &format!("second prompt ends with:\n{}\n", &second_prompt[second_prompt.find("Reflection:").unwrap()..]);
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
