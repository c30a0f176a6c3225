use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rapp_core::experiment::{run_experiment, RunMode, RunReport, RunStatus};
use rapp_core::ran_sim::ScenarioSpec;
use rapp_core::sweep::SweepResult;

fn rapp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rapp"))
        .args(args)
        .env_remove("RAPP_AGENT")
        .env_remove("RAPP_SCENARIO_DIR")
        .output()
        .expect("run rapp binary")
}

fn report(path: &Path) -> RunReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn core_fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/transcripts/reference")
}

#[test]
fn baseline_run_writes_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = rapp(&["run", "--scenario", "ref", "--mode", "baseline", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r.body.mode, RunMode::Baseline);
    assert!(r.phase("misconfigured").unwrap().ping_pongs_crossing >= 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("misconfigured"));
}

#[test]
fn usage_errors_exit_with_2() {
    let o = rapp(&["run", "--scenario", "does/not/exist.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
    assert_eq!(rapp(&["run", "--mode", "sideways"]).status.code(), Some(2));
    assert_eq!(rapp(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rapp(&["replay", "/nonexistent/trace.ndjson"]).status.code(), Some(2));
    assert_eq!(rapp(&["serve", "--config", "/nonexistent/rapp.toml"]).status.code(), Some(2));
}

#[test]
fn invalid_scenario_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "seed = 1\n").unwrap();
    assert_eq!(rapp(&["run", "--scenario", arg(&path)]).status.code(), Some(1));
}

#[test]
fn repeated_runs_differ_only_in_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let o = rapp(&["run", "--mode", "with-rapp", "--auto-approve", "--out", arg(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        bodies.push(report(&out).body_json());
    }
    assert_eq!(bodies[0], bodies[1]);

    // Same report as an in-process run.
    let local = run_experiment(&ScenarioSpec::reference(), RunMode::WithRapp, true).unwrap();
    assert_eq!(bodies[0], local.body_json());
}

#[test]
fn scenario_files_are_found_by_name() {
    let scenarios = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let o = Command::new(env!("CARGO_BIN_EXE_rapp"))
        .args(["run", "--scenario", "reference", "--mode", "baseline"])
        .env("RAPP_SCENARIO_DIR", &scenarios)
        .output()
        .unwrap();
    assert!(o.status.success());
    let r: RunReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r.body.scenario, ScenarioSpec::reference().name);
}

#[test]
fn unanswered_run_waits_for_approval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert!(rapp(&["run", "--out", arg(&out)]).status.success());
    let r = report(&out);
    assert_eq!(r.body.status, RunStatus::AwaitingApproval);
    assert_eq!(r.body.config_version, 0);
}

#[test]
fn trace_files_replay_against_the_grammar() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.ndjson");
    let o = rapp(&["run", "--auto-approve", "--trace-out", arg(&trace), "--out", arg(&dir.path().join("r.json"))]);
    assert!(o.status.success());

    let o = rapp(&["replay", arg(&trace)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("cycle-0001 ok EVENT NEXT(LOG_QUERY) NEXT(CONFIG_GET) HUMAN(PROPOSAL)"), "{stdout}");

    // A tool step after STOP breaks the grammar.
    let text = std::fs::read_to_string(&trace).unwrap();
    let step = text.lines().find(|l| l.contains("NEXT(LOG_QUERY)")).unwrap().to_string();
    let mut lines: Vec<&str> = text.lines().collect();
    let end = lines.iter().position(|l| l.contains("\"record\":\"end\"")).unwrap();
    lines.insert(end, &step);
    let broken = dir.path().join("broken.ndjson");
    std::fs::write(&broken, lines.join("\n")).unwrap();
    let o = rapp(&["replay", arg(&broken)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("INVALID"));
}

#[test]
fn transcript_directory_replays_the_reference_run() {
    let o = rapp(&["replay", arg(&core_fixtures())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("cycle-0001 EVENT NEXT(LOG_QUERY) NEXT(CONFIG_GET) HUMAN(PROPOSAL) HUMAN(MESSAGE) STOP"));
    assert!(stdout.contains("config version 1"));
}

#[test]
fn sweep_paths_agree() {
    let run = |extra: &[&str]| -> Vec<SweepResult> {
        let mut args = vec!["sweep", "--seeds", "42,43"];
        args.extend_from_slice(extra);
        let o = rapp(&args);
        assert!(o.status.success());
        serde_json::from_slice(&o.stdout).unwrap()
    };
    let parallel = run(&[]);
    assert_eq!(parallel.len(), 4);
    assert_eq!(parallel, run(&["--sequential"]));
    assert!(parallel[0].ping_pongs_crossing > parallel[1].ping_pongs_crossing);
}

#[test]
fn remote_backend_without_endpoint_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_rapp"))
        .args(["run", "--agent", "remote"])
        .env_remove("RAPP_REMOTE_URL")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("RAPP_REMOTE_URL"));
}

fn http(port: u16, method: &str, path: &str, body: &str) -> Option<String> {
    use std::io::{Read, Write};
    let mut s = std::net::TcpStream::connect(("127.0.0.1", port)).ok()?;
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Type: application/x-ndjson\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).ok()?;
    let mut out = String::new();
    s.read_to_string(&mut out).ok()?;
    Some(out)
}

#[test]
fn served_events_are_batched_on_the_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("rapp.toml");
    std::fs::write(&config, "[batch_policy]\nquiescence_ms = 200\nmax_count = 50\n").unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_rapp"))
        .args(["serve", "--port", &port.to_string(), "--config", arg(&config)])
        .env_remove("RAPP_PORT")
        .env_remove("RAPP_AGENT")
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();

    let ready = (0..100).find_map(|_| {
        let r = http(port, "GET", "/healthz", "").filter(|r| r.contains("ready"));
        if r.is_none() {
            std::thread::sleep(std::time::Duration::from_millis(100));
        }
        r
    });
    let result = std::panic::catch_unwind(|| {
        assert!(ready.is_some(), "service never became ready");
        let event = &rapp_core::ran_sim::run_scenario(&ScenarioSpec::reference()).unwrap().events[0];
        let line = rapp_core::event_pipeline::wire::encode(event);
        assert!(http(port, "POST", "/events", &line).unwrap().contains("\"accepted\":1"));
        std::thread::sleep(std::time::Duration::from_millis(800));
        let batches = http(port, "GET", "/batches", "").unwrap();
        assert!(batches.contains("batch-000001"), "{batches}");
        assert!(batches.contains("\"trigger_reason\":\"QUIESCENCE\""), "{batches}");
    });
    child.kill().unwrap();
    child.wait().unwrap();
    result.unwrap();
}
