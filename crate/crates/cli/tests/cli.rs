use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mteqa"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Worlds and a dataset shared by the tests, built once through the CLI.
fn corpus() -> &'static (PathBuf, PathBuf) {
    static C: OnceLock<(tempfile::TempDir, PathBuf, PathBuf)> = OnceLock::new();
    let c = C.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let (worlds, data) = (dir.path().join("worlds"), dir.path().join("data"));
        let out = run(&["gen-world", "--seed", "0", "--count", "6", "--out", s(&worlds)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = run(&["gen-dataset", "--worlds", s(&worlds), "--out", s(&data)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (dir, worlds, data)
    });
    static P: OnceLock<(PathBuf, PathBuf)> = OnceLock::new();
    P.get_or_init(|| (c.1.clone(), c.2.clone()))
}

#[test]
fn gen_world_writes_one_file_per_house() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = run(&["gen-world", "--seed", "7", "--count", "2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 2);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let o = run(&["gen-world", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    for sub in ["gen-world", "gen-dataset", "train", "eval", "replay", "serve"] {
        let o = run(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(!o.stdout.is_empty());
    }
}

#[test]
fn runtime_failures_exit_two() {
    let o = run(&["eval", "--dataset", "/nonexistent", "--worlds", "/nonexistent", "--oracle"]);
    assert_eq!(o.status.code(), Some(2));
    let (worlds, data) = corpus();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("a.bin");
    let o = run(&["train", "--dataset", s(data), "--worlds", s(worlds), "--stage", "rl", "--ckpt-out", s(&ckpt)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_eval_scores_one_hundred_percent() {
    let (worlds, data) = corpus();
    let o = run(&["eval", "--dataset", s(data), "--worlds", s(worlds), "--oracle", "--report", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["pct_overall"], 100.0);
    assert_eq!(report["h_t"], 1.0);
    let text = run(&["eval", "--dataset", s(data), "--worlds", s(worlds), "--oracle"]);
    assert!(String::from_utf8_lossy(&text.stdout).contains("100.00"));
}

#[test]
fn train_then_eval_and_replay_a_checkpoint() {
    let (worlds, data) = corpus();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.json");
    std::fs::write(
        &cfg,
        r#"{"agent": {"hidden": 8, "embed": 8, "attr": 8, "head_hidden": 8, "seed": 1},
            "il": {"epochs": 1}, "rl": {"iterations": 1, "episodes": 2, "budget": 30}}"#,
    )
    .unwrap();
    let il = dir.path().join("il.bin");
    let o = run(&["train", "--dataset", s(data), "--worlds", s(worlds), "--stage", "il", "--ckpt-out", s(&il), "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("epoch 0"));
    let rl = dir.path().join("rl.bin");
    let o = run(&[
        "train", "--dataset", s(data), "--worlds", s(worlds), "--stage", "rl", "--ckpt-in", s(&il), "--ckpt-out", s(&rl),
        "--config", s(&cfg),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(rl.exists());
    let traces = dir.path().join("traces.jsonl");
    let o = run(&[
        "eval", "--dataset", s(data), "--worlds", s(worlds), "--ckpt", s(&rl), "--budget", "20", "--traces", s(&traces),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("EQA accuracy"));
    let lines = std::fs::read_to_string(&traces).unwrap().lines().count();
    assert!(lines > 0);

    let test = std::fs::read_to_string(data.join("test.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(test.lines().next().unwrap()).unwrap();
    let id = first["id"].as_str().unwrap();
    let frames = dir.path().join("frames");
    let o = run(&["replay", "--dataset", s(data), "--worlds", s(worlds), "--question", id, "--out", s(&frames)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ppm = std::fs::read(frames.join("frame_0000.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n"));
    assert!(frames.join("trace.json").exists());
}

#[test]
fn serve_answers_every_line_over_stdio() {
    let (worlds, data) = corpus();
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let mut child = bin()
        .args(["serve", "--dataset", s(data), "--worlds", s(worlds), "--transcript", s(&transcript)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let requests = [
        r#"{"cmd":"step","action":"forward"}"#,
        r#"{"cmd":"reset"}"#,
        r#"{"cmd":"step","action":"turn_left"}"#,
        "garbage",
        r#"{"cmd":"step","action":"forward"}"#,
        r#"{"cmd":"close"}"#,
    ];
    child.stdin.take().unwrap().write_all((requests.join("\n") + "\n").as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let oks: Vec<bool> = stdout
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["ok"].as_bool().unwrap())
        .collect();
    assert_eq!(oks, [false, true, true, false, true, true]);
    assert_eq!(std::fs::read_to_string(&transcript).unwrap(), stdout);
}

#[test]
fn serve_listens_on_a_tcp_port() {
    use std::io::{BufRead, BufReader};
    use std::net::{TcpListener, TcpStream};
    let (worlds, data) = corpus();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port().to_string();
    let mut child = bin()
        .args(["serve", "--dataset", s(data), "--worlds", s(worlds), "--port", &port])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stream = None;
    for _ in 0..100 {
        match TcpStream::connect(format!("127.0.0.1:{port}")) {
            Ok(st) => {
                stream = Some(st);
                break;
            }
            Err(_) => std::thread::sleep(std::time::Duration::from_millis(50)),
        }
    }
    let mut stream = stream.expect("server accepts");
    stream.write_all(b"{\"cmd\":\"reset\"}\n{\"cmd\":\"close\"}\n").unwrap();
    let lines: Vec<String> = BufReader::new(stream).lines().map(Result::unwrap).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains("\"observation\""));
    assert!(child.wait().unwrap().success());
}
