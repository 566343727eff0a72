use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SEPARABLE: &str = r#"
labels_per_class = 10
seed = 0
out = "out"

[dataset.synthetic]
classes = 3
domains_per_class = 2
samples_per_class = 200
dim = 8
class_separation = 40.0
domain_spread = 2.0
noise_sigma = 0.5
seed = 0
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn pseudoalign(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pseudoalign"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_summary_with_full_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SEPARABLE);
    let out = pseudoalign(&["run"], &cfg);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert!(summary.contains("final_accuracy,1.0"), "{summary}");
    assert!(dir.path().join("out/accuracy.svg").exists());
}

#[test]
fn repeated_runs_give_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SEPARABLE);
    for out in ["a", "b"] {
        let out = dir.path().join(out);
        let res = pseudoalign(
            &["run", "--out", out.to_str().unwrap(), "--seed", "3"],
            &cfg,
        );
        assert!(res.status.success(), "{}", stderr(&res));
    }
    for name in ["summary.csv", "label_map.csv", "match_history.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn bad_ratio_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SEPARABLE);
    let out = pseudoalign(&["run", "--ratio", "1.2"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("config:"), "{}", stderr(&out));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("bogus = 1\n{SEPARABLE}"));
    assert_eq!(pseudoalign(&["run"], &cfg).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(pseudoalign(&["run"], &missing).status.code(), Some(2));
}

#[test]
fn cluster_then_report_prints_pure_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SEPARABLE);
    assert!(pseudoalign(&["cluster"], &cfg).status.success());
    let out = pseudoalign(&["report"], &cfg);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 4, "{table}");
    for row in rows {
        assert!(row.trim_end().ends_with("1.0000"), "{row}");
    }
}

#[test]
fn report_without_clusters_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SEPARABLE);
    let out = pseudoalign(&["report"], &cfg);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(
        err.contains("report:") && err.contains("clusters.csv"),
        "{err}"
    );
}

#[test]
fn oversized_subset_is_warned_about() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("report_sizes = [50, 500]\n{SEPARABLE}"),
    );
    assert!(pseudoalign(&["cluster"], &cfg).status.success());
    let out = pseudoalign(&["report"], &cfg);
    assert!(out.status.success());
    assert!(stderr(&out).contains("500"), "{}", stderr(&out));
}

#[test]
fn staged_commands_reproduce_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SEPARABLE);
    let full = dir.path().join("full");
    let staged = dir.path().join("staged");
    let res = pseudoalign(&["run", "--out", full.to_str().unwrap()], &cfg);
    assert!(res.status.success());
    for stage in ["cluster", "train-dam", "match"] {
        let out = pseudoalign(&[stage, "--out", staged.to_str().unwrap()], &cfg);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
    }
    for name in [
        "clusters.csv",
        "split.csv",
        "dam_trace.csv",
        "label_map.csv",
        "summary.csv",
    ] {
        let a = fs::read(full.join(name)).unwrap();
        let b = fs::read(staged.join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn match_without_split_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SEPARABLE);
    assert!(pseudoalign(&["cluster"], &cfg).status.success());
    let out = pseudoalign(&["match"], &cfg);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("split.csv"), "{}", stderr(&out));
}

#[test]
fn cold_start_failure_exits_with_code_five() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{SEPARABLE}\n[dam]\nepochs = 1\nlr = 1e-6\n"),
    );
    let out = pseudoalign(&["run", "--alpha", "0"], &cfg);
    assert_eq!(out.status.code(), Some(5), "{}", stderr(&out));
    assert!(stderr(&out).contains("cold start"), "{}", stderr(&out));
}

#[test]
fn diverging_training_exits_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SEPARABLE}\n[dam]\nlr = 1e6\n"));
    let out = pseudoalign(&["run"], &cfg);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("train-dam:"), "{}", stderr(&out));
}
