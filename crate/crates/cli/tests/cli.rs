use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sra(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sra"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn sra")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn write_config(dir: &Path) {
    assert_ok(&sra(dir, &["synth", "--out", "corpus.jsonl"]));
    fs::write(
        dir.join("run.toml"),
        "dataset = \"corpus.jsonl\"\nalpha = 0.75\nlearning_rate = 30.0\nmax_epochs = 4\nresamples = 200\n",
    )
    .unwrap();
}

#[test]
fn missing_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = sra(dir.path(), &["--config", "absent.toml", "analyze"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_override_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = sra(dir.path(), &["--set", "no_such_key=1", "analyze"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_dataset_exits_with_load_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = sra(dir.path(), &["--set", "dataset=\"absent.jsonl\"", "analyze"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn malformed_dataset_exits_with_load_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.jsonl"), "{\"id\": \"a\", \"text\": \"x\"\n").unwrap();
    let out = sra(dir.path(), &["--set", "dataset=\"bad.jsonl\"", "analyze"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn run_compare_inspect_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir);

    let analyze = sra(dir, &["--config", "run.toml", "analyze"]);
    assert_ok(&analyze);
    assert!(stdout(&analyze).contains("tail_08"));

    for arm in ["baseline", "sra"] {
        let out = sra(dir, &["--config", "run.toml", "--out", arm, "run", "--arm", arm]);
        assert_ok(&out);
        for file in ["manifest.toml", "report.json", "model.json", "predictions.test.jsonl", "augmented/test.jsonl"] {
            assert!(dir.join(arm).join(file).exists(), "{arm}/{file}");
        }
    }
    assert!(dir.join("sra/low_set.json").exists());
    assert!(!dir.join("baseline/low_set.json").exists());

    let compare = sra(dir, &["--config", "run.toml", "compare", "baseline", "sra"]);
    assert_ok(&compare);
    let report: serde_json::Value = serde_json::from_str(&stdout(&compare)).unwrap();
    assert!(report["mcnemar"]["p_value"].is_number());

    let inspect = sra(dir, &["inspect", "sra", "test-tail_00-0000", "--other", "baseline"]);
    assert_ok(&inspect);
    assert!(stdout(&inspect).contains("predicted (other run)"));

    let unknown = sra(dir, &["inspect", "sra", "test-tail_00-9999"]);
    assert_eq!(code(&unknown), 4);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("nearest ids"));
}

#[test]
fn sweep_writes_csv_and_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir);
    let out = sra(dir, &["--config", "run.toml", "--out", "sweep", "sweep", "--cutoffs", "0,1"]);
    assert_ok(&out);
    let csv = stdout(&out);
    assert_eq!(csv.lines().next(), Some("cutoff,coverage,mean_similarity,micro_f1,macro_f1"));
    assert_eq!(csv.lines().count(), 3);
    for file in ["sweep.json", "sweep.csv", "sweep.validation.csv", "cutoff-0/report.json", "cutoff-1/report.json"] {
        assert!(dir.join("sweep").join(file).exists(), "{file}");
    }
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&sra(dir, &["synth", "--out", "a.jsonl"]));
    assert_ok(&sra(dir, &["synth", "--out", "b.jsonl"]));
    assert_ok(&sra(dir, &["synth", "--corpus-seed", "8", "--out", "c.jsonl"]));
    let read = |f: &str| fs::read(dir.join(f)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
}
