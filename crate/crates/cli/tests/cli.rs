use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use raftguard::net::live::LiveClient;
use raftguard::net::load_config;
use raftguard::raft::NodeId;
use raftguard::scenario::set_command;

fn raftguard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raftguard"))
        .args(args)
        .env_remove("RAFT_CHAOS_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn line<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
}

#[test]
fn model_prints_latency() {
    let out = raftguard(&["model", "--rtt", "100", "--n", "1", "--m", "4", "--q", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("t_l = 187.5"));
    let out = raftguard(&["model", "--rtt", "100", "--n", "1", "--m", "4", "--q", "0.5", "--t-r", "12.5"]);
    assert!(stdout(&out).contains("t_c = 200"));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["frobnicate"],
        vec!["sim", "--scenario", "nope"],
        vec!["model", "--rtt", "1", "--n", "0", "--m", "0", "--q", "0"],
        vec!["attack", "replaylast", "--live"],
        vec!["attack", "entryattack", "--command", "xyz"],
        vec!["attack", "entryattack", "--target", "9"],
        vec!["node", "--config", "/nonexistent/raft.conf", "--id", "1"],
    ] {
        let out = raftguard(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn sim_is_reproducible() {
    let args = ["sim", "--scenario", "three-node-happy", "--seed", "7"];
    let a = raftguard(&args);
    let b = raftguard(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(line(&stdout(&a), "trace_hash"), line(&stdout(&b), "trace_hash"));
    assert_eq!(line(&stdout(&a), "violations"), "0");
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_raftguard"));
        cmd.args(["sim", "--scenario", "fuzz"]).args(extra);
        match env {
            Some(v) => cmd.env("RAFT_CHAOS_SEED", v),
            None => cmd.env_remove("RAFT_CHAOS_SEED"),
        };
        stdout(&cmd.output().unwrap())
    };
    let from_env = run(Some("42"), &[]);
    assert_eq!(line(&from_env, "seed"), "42");
    assert_eq!(from_env, run(None, &["--seed", "42"]));
    assert_eq!(line(&run(None, &[]), "seed"), "1");
}

#[test]
fn demo_reports_both_phases() {
    let out = raftguard(&["demo", "--seed", "1"]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert_eq!(line(&text, "plaintext"), "compromised");
    assert_eq!(line(&text, "secure"), "clean");
}

#[test]
fn sim_attacks_follow_flags() {
    let out = raftguard(&[
        "attack", "entryattack", "--target", "2", "--impersonate", "1", "--term", "50", "--command", "00ff",
    ]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(line(&text, "target"), "2");
    assert_eq!(line(&text, "consensus_compromised"), "true");

    let out = raftguard(&[
        "attack", "replaylast", "--count", "3", "--delay", "10", "--target", "2", "--mode", "secure",
    ]);
    let text = stdout(&out);
    assert_eq!(line(&text, "frames_injected"), "3");
    assert_eq!(line(&text, "frames_accepted"), "0");
    assert_eq!(line(&text, "frames_rejected.replay_detected"), "3");

    let out = raftguard(&["attack", "replaylast", "--count", "0"]);
    assert_eq!(line(&stdout(&out), "frames_injected"), "0");
    assert_eq!(line(&stdout(&out), "consensus_compromised"), "false");
}

#[test]
fn sim_bench_emits_comparison() {
    let out = raftguard(&["bench", "--sim", "--ops", "300", "--mode", "both"]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0));
    assert!(text.contains("throughput_change_pct\t"));
    assert!(text.contains("mode\tplaintext") && text.contains("mode\tsecure"));
    let again = stdout(&raftguard(&["bench", "--sim", "--ops", "300", "--mode", "both"]));
    assert_eq!(text, again);
}

struct Nodes(Vec<Child>);

impl Drop for Nodes {
    fn drop(&mut self) {
        for child in &mut self.0 {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let mut text = String::new();
    for id in 1..=3 {
        text.push_str(&format!("node = {id}@127.0.0.1:{}\n", free_port()));
    }
    text.push_str("transport = secure\n");
    text.push_str(&format!("master_key = 1:{}\n", "ab".repeat(32)));
    text.push_str("active_key_id = 1\n");
    text.push_str(&format!("tap_file = {}\n", dir.join("tap.log").display()));
    let path = dir.join("cluster.conf");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn live_nodes_reject_replayed_and_forged_frames() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path());
    let conf = path.to_str().unwrap();
    let _nodes = Nodes(
        (1..=3)
            .map(|id| {
                Command::new(env!("CARGO_BIN_EXE_raftguard"))
                    .args(["node", "--config", conf, "--id", &id.to_string()])
                    .stdout(Stdio::null())
                    .stderr(Stdio::null())
                    .spawn()
                    .unwrap()
            })
            .collect(),
    );
    let config = load_config(&path).unwrap();
    let mut client = LiveClient::new(&config, NodeId::client(0)).unwrap();
    for i in 0..5 {
        client.submit(&set_command("cli", i, 8), Duration::from_secs(15)).unwrap();
    }

    let out = raftguard(&["attack", "replaylast", "--live", "--config", conf, "--target", "2", "--count", "3"]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(line(&text, "frames_injected"), "3");
    assert_eq!(line(&text, "delta.replay_detected"), "3", "{text}");
    assert_eq!(line(&text, "delta.auth_failure"), "0");

    let out = raftguard(&[
        "attack", "entryattack", "--live", "--config", conf, "--target", "3", "--impersonate", "1",
    ]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(line(&text, "delta.auth_failure"), "1", "{text}");
}
