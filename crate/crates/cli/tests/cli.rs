use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn kmreview(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmreview"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn mini() -> String {
    data("mini.jsonl").display().to_string()
}

#[test]
fn analyze_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let buggy = write(dir.path(), "buggy.py", "def f(x=[]):\n    return x\n");
    let out = kmreview(&["analyze", &buggy]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("KM-05"));

    let clean = write(
        dir.path(),
        "clean.py",
        "def add(left, right):\n    return left + right\n",
    );
    let out = kmreview(&["analyze", &clean]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "no findings\n");

    // Warnings alone do not fail the check.
    let warn = write(dir.path(), "warn.py", "temp = 1\nprint(temp)\n");
    assert_eq!(code(&kmreview(&["analyze", &warn])), 0);

    assert_eq!(code(&kmreview(&["analyze", "/nonexistent/file.py"])), 2);
}

#[test]
fn analyze_json_and_strict() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(
        dir.path(),
        "legacy.py",
        "def f(items=[]):\n    return items\nprint \"old\"\n",
    );
    let out = kmreview(&["analyze", "--format", "json", &src]);
    assert_eq!(code(&out), 1);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["findings"][0]["rule_id"], "KM-05");
    assert_eq!(doc["defect"], true);
    assert_eq!(code(&kmreview(&["analyze", "--strict", &src])), 2);
}

#[test]
fn review_paths() {
    let dir = tempfile::tempdir().unwrap();
    let snippet = write(dir.path(), "s.py", "def f(items=[]):\n    return items\n");
    let pool = mini();

    let out = kmreview(&[
        "review",
        &snippet,
        "--scenario",
        "hybrid",
        "--mock",
        "findings-oracle",
        "--pool",
        &pool,
    ]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("verdict: buggy"));

    let out = kmreview(&["review", &snippet, "--scenario", "fine-tuned", "--mock", "echo-gold"]);
    assert_eq!(code(&out), 2);

    let out = kmreview(&[
        "review",
        &snippet,
        "--scenario",
        "base",
        "--shots",
        "3",
        "--mock",
        "always-buggy",
        "--pool",
        &pool,
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("conflicting flags"));

    // Sample 17 of the mini dataset is a clean function.
    let out = kmreview(&[
        "review",
        "--dataset",
        &pool,
        "--sample-id",
        "17",
        "--scenario",
        "few-shot",
        "--mock",
        "echo-gold",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["verdict"]["label"], "clean");
    assert!(!doc["prompt"]["exemplar_ids"].as_array().unwrap().contains(&17.into()));

    // Unreachable backend.
    let out = kmreview(&[
        "review",
        &snippet,
        "--scenario",
        "fine-tuned",
        "--backend-url",
        "http://127.0.0.1:9",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn prompt_preview_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("prompt.txt");
    let out = kmreview(&[
        "prompt",
        "preview",
        "--dataset",
        &mini(),
        "--sample-id",
        "3",
        "--scenario",
        "hybrid",
        "--seed",
        "11",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&out_path).unwrap();
    assert!(text.ends_with("Label:"));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("prompt.txt.json")).unwrap()).unwrap();
    assert_eq!(sidecar["sample_id"], 3);
    assert_eq!(sidecar["exemplar_ids"].as_array().unwrap().len(), 4);
    assert_eq!(sidecar["scenario"]["seed"], 11);
}

#[test]
fn eval_run_compare_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let runs_s = runs.to_str().unwrap();
    for (id, mode) in [("base", "always-buggy"), ("oracle", "findings-oracle")] {
        let out = kmreview(&[
            "eval",
            "run",
            "--dataset",
            &mini(),
            "--scenario",
            "few-shot",
            "--mock",
            mode,
            "--run-id",
            id,
            "--out",
            runs_s,
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = kmreview(&[
        "eval",
        "compare",
        runs.join("base.json").to_str().unwrap(),
        runs.join("oracle.json").to_str().unwrap(),
        "--baseline",
        "base",
    ]);
    assert_eq!(code(&out), 0);
    // Accuracy 0.400 -> 0.850.
    assert!(stdout(&out).contains("+112.50%"), "{}", stdout(&out));

    let out = kmreview(&[
        "eval",
        "compare",
        runs.join("base.json").to_str().unwrap(),
        "--format",
        "json",
    ]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["rows"][0]["improvement_pct"], 0.0);

    // A run over a different dataset cannot be compared.
    let other = write(
        dir.path(),
        "other.jsonl",
        "{\"idx\":1,\"func\":\"x = 1\",\"target\":0}\n",
    );
    let out = kmreview(&[
        "eval",
        "run",
        "--dataset",
        &other,
        "--scenario",
        "fine-tuned",
        "--mock",
        "always-buggy",
        "--run-id",
        "other",
        "--out",
        runs_s,
    ]);
    assert_eq!(code(&out), 0);
    let out = kmreview(&[
        "eval",
        "compare",
        runs.join("base.json").to_str().unwrap(),
        runs.join("other.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);

    let out = kmreview(&["eval", "check-tables", data("reference_tables.csv").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    assert!(text
        .lines()
        .any(|l| l.starts_with("few-shot/GraphCodeBERT") && l.ends_with("FLAGGED")));
    assert!(text.lines().any(|l| l.starts_with("base/CodeT5") && l.ends_with("ok")));

    let out = kmreview(&["eval", "reference"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("19.11%"));
}

#[test]
fn compare_prints_percent_improvement() {
    // Two hand-made runs with accuracies 0.539 and 0.642 over the same data.
    let dir = tempfile::tempdir().unwrap();
    let mut rows_a = String::new();
    let mut rows_b = String::new();
    let mut dataset = String::new();
    for i in 0..1000u64 {
        dataset.push_str(&format!("{{\"idx\":{i},\"func\":\"x = {i}\",\"target\":1}}\n"));
        let a = if i < 539 { "buggy" } else { "clean" };
        let b = if i < 642 { "buggy" } else { "clean" };
        rows_a.push_str(&format!("\"{i}\": \"{a}\","));
        rows_b.push_str(&format!("\"{i}\": \"{b}\","));
    }
    let data_path = write(dir.path(), "d.jsonl", &dataset);
    let canned_a = write(dir.path(), "a.json", &format!("{{{}}}", rows_a.trim_end_matches(',')));
    let canned_b = write(dir.path(), "b.json", &format!("{{{}}}", rows_b.trim_end_matches(',')));
    let runs = dir.path().join("runs");
    for (id, canned) in [("base", &canned_a), ("few", &canned_b)] {
        let mock = format!("canned:{canned}");
        let out = kmreview(&[
            "eval",
            "run",
            "--dataset",
            &data_path,
            "--scenario",
            "fine-tuned",
            "--mock",
            &mock,
            "--run-id",
            id,
            "--out",
            runs.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = kmreview(&[
        "eval",
        "compare",
        runs.join("base.json").to_str().unwrap(),
        runs.join("few.json").to_str().unwrap(),
    ]);
    assert!(stdout(&out).contains("+19.11%"), "{}", stdout(&out));
}

#[test]
fn dataset_commands() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for i in 0..150 {
        let target = if i < 100 { 0 } else { 1 };
        text.push_str(&format!("{{\"idx\":{i},\"func\":\"v = {i}\",\"target\":{target}}}\n"));
    }
    let path = write(dir.path(), "d.jsonl", &text);
    let out = kmreview(&["dataset", "stats", &path]);
    assert!(stdout(&out).contains("buggy_ratio 0.333"));
    let out = kmreview(&["dataset", "stats", &path, "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["buggy_count"], 50);

    let a = kmreview(&["dataset", "resample", &path, "--seed", "7"]);
    let b = kmreview(&["dataset", "resample", &path, "--seed", "7"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 200);

    let single = write(
        dir.path(),
        "single.jsonl",
        "{\"idx\":1,\"func\":\"a = 1\",\"target\":0}\n",
    );
    assert_eq!(code(&kmreview(&["dataset", "resample", &single])), 2);

    let split_dir = dir.path().join("split");
    let out = kmreview(&[
        "dataset",
        "split",
        &path,
        "--seed",
        "3",
        "--out",
        split_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let train = fs::read_to_string(split_dir.join("train.jsonl")).unwrap();
    let test = fs::read_to_string(split_dir.join("test.jsonl")).unwrap();
    assert_eq!((train.lines().count(), test.lines().count()), (120, 30));
}

#[test]
fn config_file_and_flag_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "cfg.json",
        r#"{"scenario": {"kind": "few-shot", "shots": 2}, "budget": {"max_chars": 6000}}"#,
    );
    let out = kmreview(&[
        "--config",
        &config,
        "prompt",
        "preview",
        "--dataset",
        &mini(),
        "--sample-id",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).matches("Example ").count(), 2);

    let bad = write(dir.path(), "bad.json", r#"{"unknown": true}"#);
    assert_eq!(code(&kmreview(&["--config", &bad, "eval", "reference"])), 2);
    assert_eq!(code(&kmreview(&["analyze", "--bogus-flag"])), 2);
    assert_eq!(code(&kmreview(&["--help"])), 0);
}
