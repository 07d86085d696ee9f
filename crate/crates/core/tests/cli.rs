use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sskm::synth::{generate, SyntheticSpec};

fn sskm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sskm"))
        .args(args)
        .env_remove("SSKM_THREADS")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let input = dir.join("docs.jsonl");
    fs::write(
        &input,
        concat!(
            r#"{"id": "d1", "text": "Apple banana apple"}"#, "\n",
            "\n",
            r#"{"id": "d2", "text": "banana, cherry!"}"#, "\n",
            r#"{"id": "d3", "text": "The of the"}"#, "\n",
        ),
    )
    .unwrap();
    let stop = dir.join("stop.txt");
    fs::write(&stop, "the\nof\n").unwrap();
    (input, stop)
}

#[test]
fn vectorize_writes_matrix_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let (input, stop) = fixture(dir.path());
    let out = dir.path().join("m.mtx");
    let o = sskm(&[
        "vectorize", "--input", s(&input), "--output", s(&out), "--stopwords", s(&stop),
        "--max-df", "1.0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["n_input"], 3);
    assert_eq!(summary["n_docs"], 2);
    assert_eq!(summary["dims"], 3);
    assert_eq!(summary["dropped"], serde_json::json!(["d3"]));

    let vocab = fs::read_to_string(dir.path().join("m.mtx.vocab")).unwrap();
    assert_eq!(vocab, "# n_docs 3\napple\t1\nbanana\t2\ncherry\t1\n");
    assert_eq!(fs::read_to_string(dir.path().join("m.mtx.dropped")).unwrap(), "d3\n");
    assert_eq!(fs::read_to_string(dir.path().join("m.mtx.ids")).unwrap(), "d1\nd2\n");

    let m = sskm::corpus::load_matrix(&out).unwrap();
    assert_eq!(m.doc_ids, ["d1", "d2"]);
    assert_eq!(m.vectors[0].indices(), &[0, 1]);
}

#[test]
fn default_max_df_drops_common_terms() {
    let dir = tempfile::tempdir().unwrap();
    let (input, stop) = fixture(dir.path());
    let out = dir.path().join("m.mtx");
    let o = sskm(&["vectorize", "--input", s(&input), "--output", s(&out), "--stopwords", s(&stop)]);
    assert!(o.status.success());
    // banana appears in 2 of 3 documents, above the 0.5 default
    let vocab = fs::read_to_string(dir.path().join("m.mtx.vocab")).unwrap();
    assert!(!vocab.contains("banana"));
}

#[test]
fn empty_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    fs::write(&input, "\n\n").unwrap();
    let o = sskm(&["vectorize", "--input", s(&input), "--output", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty corpus"));
}

#[test]
fn malformed_line_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.jsonl");
    fs::write(&input, "{\"id\": \"a\", \"text\": \"x y\"}\n{\"id\": 3}\n").unwrap();
    let o = sskm(&["vectorize", "--input", s(&input), "--output", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.jsonl:2:"));
}

fn synthetic_matrix(dir: &Path) -> PathBuf {
    let path = dir.join("syn.mtx");
    let m = generate(&SyntheticSpec::new(400, 1_200, 8, 1.0, 5)).unwrap();
    sskm::corpus::write_matrix(&path, &m).unwrap();
    path
}

fn cluster(dir: &Path, input: &Path, mode: &str, k: &str, tag: &str) -> (Output, PathBuf, PathBuf) {
    let a = dir.join(format!("{tag}.tsv"));
    let r = dir.join(format!("{tag}.json"));
    let o = sskm(&[
        "cluster", "--input", s(input), "--k", k, "--mode", mode, "--seed", "11",
        "--index-activation", "0", "--out-assignments", s(&a), "--out-report", s(&r),
    ]);
    (o, a, r)
}

#[test]
fn modes_write_identical_assignments() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic_matrix(dir.path());
    let (ob, base, _) = cluster(dir.path(), &input, "baseline", "25", "b");
    let (oi, idx, report) = cluster(dir.path(), &input, "ncc+index", "25", "i");
    assert!(ob.status.success() && oi.status.success());
    let base = fs::read_to_string(base).unwrap();
    assert_eq!(base, fs::read_to_string(idx).unwrap());
    assert_eq!(base.lines().count(), 400);
    assert!(base.starts_with("syn-0\t"));

    let report: serde_json::Value = serde_json::from_slice(&fs::read(report).unwrap()).unwrap();
    assert_eq!(report["config"]["lambdas"], serde_json::json!([0.1, 0.25, 0.4, 0.6]));
    assert_eq!(report["config"]["mode"], "ncc+index");
    let sizes: u64 = report["cluster_sizes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(sizes, 400);
    assert!(!report["iterations"].as_array().unwrap().is_empty());
}

#[test]
fn k_above_n_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic_matrix(dir.path());
    let (o, _, _) = cluster(dir.path(), &input, "ncc", "401", "x");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _, _) = cluster(dir.path(), &dir.path().join("nope"), "ncc", "3", "x");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = sskm(&[
        "bench", "--synthetic", "1500,3000,8,1.0,3", "--k-list", "50,500", "--repeats", "1",
        "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], sskm::bench::CSV_HEADER);
    assert_eq!(lines.len(), 7);
    for (line, (mode, k)) in lines[1..].iter().zip([
        ("baseline", 50),
        ("baseline", 500),
        ("ncc", 50),
        ("ncc", 500),
        ("ncc+index", 50),
        ("ncc+index", 500),
    ]) {
        assert!(line.starts_with(&format!("{mode},{k},")), "{line}");
        assert_eq!(line.split(',').count(), 7);
    }
}

#[test]
fn bench_rejects_bad_synthetic_spec() {
    let o = sskm(&["bench", "--synthetic", "10,zz"]);
    assert_eq!(o.status.code(), Some(2));
}
