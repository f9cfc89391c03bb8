use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::OnceLock;

use serde_json::Value;
use vandal_client::Client;
use vandal_core::api::LabelRequest;
use vandal_core::corpus::{read_label_overrides, LabelClass};

const BIN: &str = env!("CARGO_BIN_EXE_vandal-sentinel");

fn vs(args: &[&str]) -> Output {
    vs_env(args, &[])
}

fn vs_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("VS_SERVICE").env_remove("VS_CONFIG").env_remove("VS_MAX_BATCH");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", out.status.code(), String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    fx: PathBuf,
    model: PathBuf,
}

impl Fixture {
    fn s(p: &Path) -> &str {
        p.to_str().unwrap()
    }
    fn source(&self) -> String {
        format!("fixture:{}", self.fx.display())
    }
    fn rev_ids(&self) -> Vec<u64> {
        std::fs::read_to_string(self.fx.join("manifest.txt")).unwrap().lines().map(|l| l.parse().unwrap()).collect()
    }
}

/// 1,000 synthetic edits and a small model, built through the binary.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let fx = root.join("fx");
        let model = root.join("model.json");
        ok(&vs(&["synth-corpus", "--out", Fixture::s(&fx), "--n", "1000", "--prevalence", "0.05", "--seed", "11"]));
        let corpus = fx.join("corpus.jsonl");
        ok(&vs(&["train", "--corpus", Fixture::s(&corpus), "--out", Fixture::s(&model), "--n-trees", "15", "--seed", "2"]));
        Fixture { _dir: dir, root, fx, model }
    })
}

struct Server(Child, String);

impl Server {
    fn start(extra: &[&str]) -> Server {
        let f = fixture();
        let mut child = Command::new(BIN)
            .args(["serve", "--bind", "127.0.0.1:0", "--model", Fixture::s(&f.model), "--source", &f.source()])
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let url = line.trim().strip_prefix("listening on ").expect("serve announces its address").to_owned();
        Server(child, url)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(code(&vs(&["train", "--corpus"])), 2);
    assert_eq!(code(&vs(&["fly"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&vs(&["synth-corpus", "--out", Fixture::s(&out), "--prevalence", "0"])), 2);
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[train]\nwings = 2\n").unwrap();
    assert_eq!(code(&vs(&["--config", Fixture::s(&cfg), "report", "--report", "r.json"])), 2);
    assert_eq!(code(&vs(&["serve", "--model", "/nonexistent/model.json"])), 2);
}

#[test]
fn data_and_upstream_errors_exit_3_and_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    assert_eq!(code(&vs(&["report", "--report", Fixture::s(&missing)])), 3);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    assert_eq!(code(&vs(&["--service", &url, "report", "--report", Fixture::s(&missing)])), 4);
    assert_eq!(code(&vs_env(&["score", "1"], &[("VS_SERVICE", &url)])), 4);
}

#[test]
fn flags_beat_environment_beat_config() {
    let f = fixture();
    let ids: Vec<String> = f.rev_ids().iter().take(2).map(u64::to_string).collect();
    let cfg = f.root.join("batch.toml");
    std::fs::write(&cfg, format!("[score]\nmax-batch = 1\nmodel = {:?}\nsource = {:?}\n", f.model.display().to_string(), f.source())).unwrap();
    let base = ["--config", Fixture::s(&cfg), "score", &ids[0], &ids[1]];
    assert_eq!(code(&vs(&base)), 2, "config limit of 1 rejects a batch of 2");
    ok(&vs_env(&base, &[("VS_MAX_BATCH", "2")]));
    let mut flagged = base.to_vec();
    flagged.extend(["--max-batch", "1"]);
    assert_eq!(code(&vs_env(&flagged, &[("VS_MAX_BATCH", "2")])), 2);
}

#[test]
fn synthetic_fixtures_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&vs(&["synth-corpus", "--out", Fixture::s(d), "--n", "300", "--prevalence", "0.1", "--seed", "4"]));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 300);
    for name in names.iter().filter(|n| !n.to_string_lossy().ends_with("manifest.json")) {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name:?}");
    }
}

#[test]
fn manifests_rerun_to_identical_artifacts() {
    let f = fixture();
    let before = std::fs::read(&f.model).unwrap();
    let manifest = f.root.join("model.json.manifest.json");
    let out = ok(&vs(&["--json", "rerun", "--manifest", Fixture::s(&manifest)]));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["subcommand"], "train");
    assert_eq!(std::fs::read(&f.model).unwrap(), before);
}

#[test]
fn evaluate_and_report_write_tables_and_curves() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let eval = dir.path().join("eval");
    let corpus = f.fx.join("corpus.jsonl");
    let table = ok(&vs(&["evaluate", "--corpus", Fixture::s(&corpus), "--out-dir", Fixture::s(&eval), "--n-trees", "10", "--folds", "2", "--recall", "0.85"]));
    assert!(table.contains("[reference]"));
    let report = eval.join("report.json");
    let again = dir.path().join("curves");
    let out = ok(&vs(&["report", "--report", Fixture::s(&report), "--out-dir", Fixture::s(&again)]));
    let rows = out.lines().filter(|l| l.starts_with("general") || l.starts_with("all")).filter(|l| !l.contains("[reference]")).count();
    assert_eq!(rows, 5);
    let csvs: Vec<PathBuf> = std::fs::read_dir(&again).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(csvs.len(), 10);
    for csv in csvs {
        let text = std::fs::read_to_string(&csv).unwrap();
        let recall: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(recall.windows(2).all(|w| w[0] <= w[1]), "{}", csv.display());
    }
    let model_eval = dir.path().join("one");
    ok(&vs(&["evaluate", "--corpus", Fixture::s(&corpus), "--model", Fixture::s(&f.model), "--out-dir", Fixture::s(&model_eval)]));
}

#[test]
fn replay_counts_and_empty_replay() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("latency.csv");
    let common = ["--model", Fixture::s(&f.model), "--source", &f.source()];
    let mut args = vec!["--json", "replay-latency", "--n", "0", "--out", Fixture::s(&csv)];
    args.extend(common);
    ok(&vs(&args));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1);

    let mut args = vec!["--json", "replay-latency", "--n", "120", "--out", Fixture::s(&csv)];
    args.extend(common);
    let v: Value = serde_json::from_str(&ok(&vs(&args))).unwrap();
    let count = |m: &str| v["report"]["summaries"].as_array().unwrap().iter().find(|s| s["mode"] == m).unwrap()["count"].as_u64().unwrap();
    assert_eq!((count("single"), count("batch"), count("cached")), (120, 3, 120));
    assert_eq!(v["failed"], 0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 243);

    let mut args = vec!["replay-latency", "--n", "5000"];
    args.extend(common);
    assert_eq!(code(&vs(&args)), 2);
}

#[test]
fn served_labels_export_for_the_ui() {
    let f = fixture();
    let server = Server::start(&[]);
    let ids: Vec<u64> = f.rev_ids().into_iter().take(40).collect();
    let id_args: Vec<String> = ids.iter().map(u64::to_string).collect();
    let mut args = vec!["--service", server.1.as_str(), "score"];
    args.extend(id_args.iter().map(String::as_str));
    assert_eq!(ok(&vs(&args)).lines().count(), 40);

    let client = Client::new(&server.1).unwrap();
    let classes = [LabelClass::Vandalism, LabelClass::GoodfaithDamaging, LabelClass::Good];
    for (i, &rev) in ids.iter().take(25).enumerate() {
        let req = LabelRequest { rev_id: rev, class: classes[i % 3], reviewer: format!("r{}", i % 4), expected_version: None, confirm: false };
        client.label(&req).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ui");
    ok(&vs(&["--service", &server.1, "export-ui-data", "--out", Fixture::s(&out), "--page-size", "7"]));
    let queue: Vec<Value> = serde_json::from_slice(&std::fs::read(out.join("queue.json")).unwrap()).unwrap();
    assert_eq!(queue.len(), 40);
    let labels = std::fs::read(out.join("labels.jsonl")).unwrap();
    let overrides = read_label_overrides(labels.as_slice()).unwrap();
    assert_eq!(overrides.len(), 25);
    let vandalism = overrides.values().filter(|c| c.is_vandalism()).count();
    assert_eq!(vandalism, 9);
    let config: Value = serde_json::from_slice(&std::fs::read(out.join("ui-config.json")).unwrap()).unwrap();
    assert!(config["service_url"].as_str().unwrap().starts_with(&server.1));
}
