use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use relfeed::corpus::{load_corpus, AttributeFilter};
use relfeed::engine::{Algorithm, EngineConfig, Session};
use relfeed::network::{to_checkpoint_json, ProjectionNet};
use relfeed::simulator::ViewCombo;
use serde_json::Value;

fn relfeed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relfeed")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = relfeed(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, n: usize, seed: u64) -> std::path::PathBuf {
    ok(&["synth", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", s(dir)]);
    dir.join("manifest.json")
}

#[test]
fn synth_writes_a_reproducible_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth(&tmp.path().join("a"), 100, 3);
    let b = synth(&tmp.path().join("b"), 100, 3);
    let manifest: Value = serde_json::from_slice(&std::fs::read(&a).unwrap()).unwrap();
    assert_eq!(manifest["records"].as_array().unwrap().len(), 100);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(load_corpus(&a).unwrap().len(), 100);
}

#[test]
fn synth_with_schema_and_bad_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let schema = tmp.path().join("schema.json");
    std::fs::write(&schema, r#"{"attributes": [{"name": "hair", "classes": 3}, {"name": "age", "classes": 2}], "sensitive": ["age"]}"#).unwrap();
    let out = tmp.path().join("c");
    ok(&["synth", "--n", "30", "--schema", s(&schema), "--views", "a:8,b:4", "--out", s(&out)]);
    let c = load_corpus(&out.join("manifest.json")).unwrap();
    assert_eq!(c.schema().keys().collect::<Vec<_>>(), ["age", "hair"]);
    assert_eq!(c.views().len(), 2);

    std::fs::write(&schema, r#"{"attributes": [{"name": "hair", "classes": 1}]}"#).unwrap();
    let bad = relfeed(&["synth", "--n", "30", "--schema", s(&schema), "--out", s(&tmp.path().join("d"))]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("classes"));
    assert!(bad.stdout.is_empty());
}

#[test]
fn simulate_with_a_planted_target_reports_zero_rounds() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("c"), 150, 1);
    let corpus = Arc::new(load_corpus(&m).unwrap());
    let combo: ViewCombo = "facenet+mix+hog".parse().unwrap();
    let cfg = EngineConfig {
        view_weights: Some(combo.weights),
        seed: 4,
        ..Default::default()
    };
    let first = Session::start(corpus, AttributeFilter::new(), cfg, Algorithm::Contrastive).unwrap();
    let target = first.batch_ids()[7].clone();
    let out = ok(&["simulate", "--corpus", s(&m), "--seed", "4", "--target", &target]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["iterations"], 0);
    assert_eq!(v["converged"], true);
    assert_eq!(v["target"], target.as_str());
}

#[test]
fn simulate_outputs_are_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("c"), 150, 2);
    let run = |tag: &str| {
        let log = tmp.path().join(format!("{tag}.jsonl"));
        let emb = tmp.path().join(format!("{tag}.csv"));
        let sum = tmp.path().join(format!("{tag}.json"));
        ok(&[
            "simulate", "--corpus", s(&m), "--seed", "9", "--algorithm", "contrastive", "--log", s(&log),
            "--export-embeddings", s(&emb), "--out", s(&sum),
        ]);
        [log, emb, sum].map(|p| std::fs::read(p).unwrap())
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let rows = String::from_utf8(a[1].clone()).unwrap();
    assert_eq!(rows.lines().count(), 150);
    assert_eq!(rows.lines().next().unwrap().split(',').count(), 65);
}

#[test]
fn experiment_writes_one_row_per_metric_and_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("c"), 120, 3);
    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        ok(&[
            "experiment", "--corpus", s(&m), "--algorithms", "rocchio", "--views-combos", "mix", "--runs", "1",
            "--seed", "2", "--jobs", "2", "--out", s(&out),
        ]);
        out
    };
    let a = run("r1");
    let b = run("r2");
    let csv = std::fs::read_to_string(a.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "combo,algorithm,metric,value,runs,converged_runs");
    assert!(lines[1..].iter().all(|l| l.starts_with("mix,rocchio,")));
    let metrics: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap()).collect();
    let mut unique = metrics.clone();
    unique.dedup();
    assert_eq!(metrics, unique);
    for f in ["report.csv", "report.json", "report.md"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

fn write_factor_fixture(dir: &Path, n: usize) -> (std::path::PathBuf, std::path::PathBuf) {
    let factors = dir.join("factors.csv");
    let emb = dir.join("z.csv");
    let mut f = String::from("id,a,b,c\n");
    let mut z = String::new();
    for i in 0..n {
        let (a, b, c) = (i % 3, (i / 3) % 3, (i / 9) % 3);
        f.push_str(&format!("r{i},{a},{b},{c}\n"));
        z.push_str(&format!("{a},{b},{c}\n"));
    }
    std::fs::write(&factors, f).unwrap();
    std::fs::write(&emb, z).unwrap();
    (factors, emb)
}

#[test]
fn metrics_dci_on_matching_latents() {
    let tmp = tempfile::tempdir().unwrap();
    let (factors, emb) = write_factor_fixture(tmp.path(), 270);
    let out = ok(&["metrics", "dci", "--embeddings", s(&emb), "--factors", s(&factors)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["disentanglement", "completeness"] {
        assert!(v["scores"][key].as_f64().unwrap() >= 0.9, "{key}: {}", v["scores"][key]);
    }
    assert!(v["informativeness"]["informativeness"].as_f64().unwrap() >= 0.9);
}

#[test]
fn metrics_fairness_on_independent_attributes() {
    let tmp = tempfile::tempdir().unwrap();
    let (factors, _) = write_factor_fixture(tmp.path(), 270);
    let noise = tmp.path().join("noise.csv");
    let mut text = String::new();
    let mut x: u64 = 12345;
    for _ in 0..270 {
        let mut row = Vec::new();
        for _ in 0..4 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            row.push(format!("{}", (x >> 11) as f64 / (1u64 << 53) as f64));
        }
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&noise, text).unwrap();
    let maps = tmp.path().join("maps");
    let out = ok(&[
        "metrics", "fairness", "--embeddings", s(&noise), "--factors", s(&factors), "--heatmaps", s(&maps),
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["f_score"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-9);
    assert_eq!(std::fs::read_dir(&maps).unwrap().count(), 6);
}

#[test]
fn metrics_dist_with_everything_selected_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let (factors, _) = write_factor_fixture(tmp.path(), 30);
    let sel = tmp.path().join("sel.txt");
    std::fs::write(&sel, (0..30).map(|i| format!("r{i}\n")).collect::<String>()).unwrap();
    let out = ok(&["metrics", "dist", "--factors", s(&factors), "--selected", s(&sel)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["tv_distance"] == 0.0));
}

#[test]
fn metrics_read_from_a_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("c"), 200, 4);
    let out = tmp.path().join("dci.json");
    ok(&["metrics", "dci", "--corpus", s(&m), "--view", "mix", "--regressor", "ridge", "--out", s(&out)]);
    let v: Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    assert_eq!(v["importance"]["rows"].as_array().unwrap().len(), 64);
}

#[test]
fn pretrain_with_zero_steps_writes_the_initial_network() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("c"), 60, 5);
    let ck = tmp.path().join("net.json");
    ok(&["pretrain", "--corpus", s(&m), "--views", "mix", "--steps", "0", "--seed", "11", "--out", s(&ck)]);
    let init = ProjectionNet::new(64, &[128], 64, 11).unwrap();
    assert_eq!(std::fs::read_to_string(&ck).unwrap(), to_checkpoint_json(&init));

    let trained = tmp.path().join("trained.json");
    ok(&["pretrain", "--corpus", s(&m), "--steps", "5", "--out", s(&trained)]);
    let out = ok(&["simulate", "--corpus", s(&m), "--network", s(&trained), "--max-iterations", "3"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["iterations"].as_u64().unwrap() <= 3);
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let out = relfeed(&["simulate", "--corpus", "/nonexistent/manifest.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = relfeed(&["simulate", "--corpus", "x", "--algorithm", "magic"]);
    assert!(!out.status.success());
    let out = relfeed(&[]);
    assert!(!out.status.success());
}

#[test]
fn serve_answers_healthz() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("c"), 60, 6);
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_relfeed"))
        .args(["serve", "--corpus", s(&m), "--data-dir", s(&tmp.path().join("sessions"))])
        .env("FAIRCOP_ADDR", &addr)
        .env("FAIRCOP_IMAGE_ROOT", s(tmp.path()))
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let response = loop {
        if let Ok(mut stream) = TcpStream::connect(&addr) {
            stream
                .write_all(b"GET /v1/healthz HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
                .unwrap();
            let mut buf = String::new();
            stream.read_to_string(&mut buf).unwrap();
            break buf;
        }
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"ok\""));
}
