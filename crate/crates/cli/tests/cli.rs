use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SOURCE: &str = "A G4S security van has been robbed outside a branch of Royal Bank of Scotland in \
    Glasgow city centre. Police said three armed men took a five-figure sum from the vehicle.";
const SUMMARY: &str = "Three armed men robbed a G4S van in Edinburgh.";

fn mqag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mqag"))
        .args(args)
        .env_remove("MQAG_BACKEND_URL")
        .env_remove("MQAG_BACKEND_TOKEN")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/news.jsonl")
        .display()
        .to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&mqag(&["--help"])), 0);
    assert_eq!(code(&mqag(&["--version"])), 0);
    assert_eq!(code(&mqag(&["evaluate", "--help"])), 0);
}

#[test]
fn score_is_deterministic_and_identical_texts_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "src.txt", SOURCE);
    let sum = write(dir.path(), "sum.txt", SUMMARY);
    let args = ["score", &src, &sum, "--variant", "sum", "--distance", "tv", "--n", "50", "--threshold", "2.0", "--backend", "mock", "--seed", "42"];
    let a = mqag(&args);
    let b = mqag(&args);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);

    let same = mqag(&["score", &src, &src, "--variant", "f1", "--seed", "1"]);
    let report: serde_json::Value = serde_json::from_slice(&same.stdout).unwrap();
    assert_eq!(report["score"], 1.0);
}

#[test]
fn score_writes_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "src.txt", SOURCE);
    let sum = write(dir.path(), "sum.txt", SUMMARY);
    let out = dir.path().join("report.json");
    assert_eq!(code(&mqag(&["score", &src, &sum, "--out", p(&out)])), 0);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report["score"].as_f64().unwrap() <= 1.0);
    assert!(!dir.path().join("report.json.partial").exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "src.txt", SOURCE);
    let bad = mqag(&["score", &src, &src, "--distance", "cosine"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("--distance"));
    assert_eq!(code(&mqag(&["score", &src, &src, "--threshold", "4.5"])), 1);
    assert_eq!(code(&mqag(&["score", &src, &src, "--threshold", "often"])), 1);
    assert_eq!(code(&mqag(&["score", &src, &src, "--backend", "remote"])), 1);
    assert_eq!(code(&mqag(&["distances", "--resolution", "1"])), 1);
    assert_eq!(code(&mqag(&["frobnicate"])), 1);
}

#[test]
fn backend_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "src.txt", SOURCE);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("http://127.0.0.1:{port}");
    let out = mqag(&["score", &src, &src, "--backend", "remote", "--endpoint", &endpoint, "--retries", "0"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    // too little content for the mock to build options
    let tiny = write(dir.path(), "tiny.txt", "The cat sat.");
    assert_eq!(code(&mqag(&["score", &src, &tiny])), 2);
}

#[test]
fn data_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "src.txt", SOURCE);
    assert_eq!(code(&mqag(&["score", &src, p(&dir.path().join("missing.txt"))])), 3);
    let empty = write(dir.path(), "empty.jsonl", "");
    assert_eq!(code(&mqag(&["evaluate", &empty, "--out", p(&dir.path().join("o"))])), 3);
    let broken = write(
        dir.path(),
        "broken.jsonl",
        r#"{"system_id":"a","doc_id":"d","source":"s","summary":"t"}"#,
    );
    let out = mqag(&["evaluate", &broken, "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("human_score"));
}

#[test]
fn evaluate_writes_results_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("eval");
    let out = mqag(&["evaluate", &fixture(), "--seed", "3", "--n", "10", "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("results.json")).unwrap()).unwrap();
    assert_eq!(results["per_record"].as_array().unwrap().len(), 12);
    assert!(results["correlations"]["all"]["pearson"].is_number());
    assert_eq!(results["curves"]["answerability"].as_array().unwrap().len(), 7);
    let mut reader = csv::Reader::from_path(out_dir.join("scores.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["system_id", "doc_id", "score", "human_score", "n_kept"]
    );
    assert_eq!(reader.records().count(), 12);
}

#[test]
fn evaluate_split_gives_two_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("eval");
    let out = mqag(&["evaluate", &fixture(), "--n", "10", "--split", "abstractiveness", "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("results.json")).unwrap()).unwrap();
    for half in ["abstractiveness_low", "abstractiveness_high"] {
        assert_eq!(results["correlations"][half]["n_records"], 6);
    }
}

#[test]
fn evaluate_rejects_single_system_at_system_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = mqag(&["evaluate", &fixture(), "--level", "system", "--systems", "sys_b", "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&out), 3);
    assert!(!dir.path().join("o").exists());
}

fn read(path: &PathBuf) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn sweep_and_convergence_curves() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    let out = mqag(&["sweep", &fixture(), "--n", "10", "--seed", "5", "--out", p(&sweep)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&sweep).lines().count(), 1 + 7);
    assert_eq!(code(&mqag(&["sweep", &fixture(), "--variant", "f1", "--out", p(&sweep)])), 1);

    let conv = dir.path().join("conv.csv");
    let again = dir.path().join("conv2.csv");
    for path in [&conv, &again] {
        let out = mqag(&["convergence", &fixture(), "--seed", "5", "--replicates", "200", "--out", p(path)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = read(&conv);
    assert_eq!(text, read(&again));
    assert_eq!(text.lines().count(), 1 + 6);
    assert!(text.starts_with("n,mean,std,"));
    assert_eq!(code(&mqag(&["convergence", &fixture(), "--n", "10", "--out", p(&conv)])), 1);
}

#[test]
fn distances_rows() {
    let out = mqag(&["distances", "--resolution", "5"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4 * 5);
    let find = |p1: f64, p2: f64| rows.iter().find(|r| r[0] == p1 && r[1] == p2).unwrap().clone();
    assert_eq!(&find(0.5, 0.5)[2..], [0.0, 0.0, 0.0, 0.0]);
    let disjoint = find(0.0, 1.0);
    assert_eq!((disjoint[3], disjoint[4]), (1.0, 1.0));
    assert!((disjoint[5] - 1.0).abs() < 1e-12);
    assert!((find(0.5, 0.25)[4] - 0.25).abs() < 1e-15);
}
