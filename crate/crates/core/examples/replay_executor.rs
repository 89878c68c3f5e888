//! Replay, deny and policy checks of the command executor. Nothing here
//! launches a process.

use rag_repair::executor::{
    parse_command, system_spawn_count, ExecError, Executor, ExecutorMode, LiveConfig, ReplayEntry, ReplayFixture,
    SafetyPolicy,
};

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let spawned = system_spawn_count();
    let mut fixture = ReplayFixture::new();
    fixture.insert("kubectl get pods -n shop", ReplayEntry { return_code: 0, stdout: "cart-7d9 1/1 Running\n".into(), stderr: String::new() });
    let replay = Executor::replay(fixture);

    let mut out = String::new();
    for cmd in ["kubectl  get pods   -n shop", "kubectl get pods -n nowhere"] {
        let r = replay.execute(cmd)?;
        out += &format!("replay {cmd:?} -> rc {} {:?}\n", r.return_code, r.stdout.trim());
    }
    let denied = Executor::deny().execute("kubectl delete ns shop")?;
    out += &format!("deny -> rc {} {:?}\n", denied.return_code, denied.stderr);

    let live = Executor::new(ExecutorMode::Live(LiveConfig::default()), SafetyPolicy::default());
    match live.execute("kubectl get pods") {
        Err(ExecError::LiveNotEnabled) => out += "live without opt-in -> refused\n",
        other => out += &format!("live -> {other:?}\n"),
    }
    let parsed = parse_command("kubectl get pods -n shop -o=json")?;
    out += &format!("parsed verb {:?}, namespace {:?}\n", parsed.verb, parsed.flag("-n"));
    assert_eq!(system_spawn_count(), spawned);
    Ok(out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", run_example()?);
    Ok(())
}
