use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fedsel");

fn fedsel(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const SMALL: &str = r#"
partition_spec = "builtin:table2"
total_rounds = 6
seed = 3
record_selection_time = false

[strategy]
kind = "cluster"
k = 3

[generator]
feature_dim = 8

[timing]
select = 4
repetitions = 10

[gridsearch]
rounds = 2
k_values = [2, 3]
"#;

#[test]
fn run_writes_the_artifact_set() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("out");
    let o = fedsel(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["rounds.csv", "participation.csv", "clusters.csv", "timing.csv", "accuracy.svg", "participation.svg", "config.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let rounds = std::fs::read_to_string(out.join("rounds.csv")).unwrap();
    assert_eq!(rounds.lines().next().unwrap(), "round,selected_ids,test_accuracy,test_loss,selection_time_s");
    assert_eq!(rounds.lines().count(), 8);
    let echo = std::fs::read_to_string(out.join("config.toml")).unwrap();
    for key in ["moving_average_window = 5", "learning_rate", "local_epochs = 5", "total_rounds = 6"] {
        assert!(echo.contains(key), "config echo lacks {key}");
    }
    let participation = std::fs::read_to_string(out.join("participation.svg")).unwrap();
    assert_eq!(participation.matches("class=\"bar\"").count(), 16);
}

#[test]
fn compare_two_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let random = write_config(
        tmp.path(),
        "random.toml",
        &SMALL.replace("kind = \"cluster\"\nk = 3", "kind = \"random\"\nn = 3"),
    );
    let a = tmp.path().join("cluster");
    let b = tmp.path().join("random");
    assert!(fedsel(&["run", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(fedsel(&["run", &random, "--out", b.to_str().unwrap()]).status.success());
    let report = tmp.path().join("report");
    let o = fedsel(&[
        "compare",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--window",
        "3",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("cluster") && text.contains("random") && text.contains("rounds_to_90"));
    let svg = std::fs::read_to_string(report.join("accuracy_compare.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    let only = fedsel(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--metric", "best_accuracy"]);
    let header = String::from_utf8(only.stdout).unwrap();
    assert!(!header.contains("final_accuracy"));
    let single = fedsel(&["compare", a.to_str().unwrap()]);
    assert_eq!(single.status.code(), Some(2));
}

#[test]
fn timing_and_gridsearch() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("out");
    let o = fedsel(&["timing", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let timing = std::fs::read_to_string(out.join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 4);
    let o = fedsel(&["gridsearch", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = std::fs::read_to_string(out.join("gridsearch.csv")).unwrap();
    assert_eq!(grid.lines().next().unwrap(), "rank,metric,linkage,k,mean_silhouette");
    assert_eq!(grid.lines().count(), 1 + 3 * 3 * 2);
}

#[test]
fn gen_spec_round_trips_through_run() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("t2.spec");
    let o = fedsel(&["gen-spec", "--table2", spec.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("class"));
    let cfg = write_config(
        tmp.path(),
        "file.toml",
        &SMALL.replace("builtin:table2", "t2.spec").replace("total_rounds = 6", "total_rounds = 2"),
    );
    let out = tmp.path().join("out");
    assert!(fedsel(&["run", &cfg, "--out", out.to_str().unwrap()]).status.success());
    assert_eq!(fedsel(&["gen-spec", spec.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "unknown.toml", &format!("{SMALL}\nbogus_key = 1\n"));
    let o = fedsel(&["run", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus_key"));

    let missing = tmp.path().join("nope.toml");
    assert_eq!(fedsel(&["run", missing.to_str().unwrap()]).status.code(), Some(4));

    let diverge = write_config(
        tmp.path(),
        "diverge.toml",
        &format!("{SMALL}\n[sgd]\nlearning_rate = 1.7e308\n"),
    );
    let o = fedsel(&["run", &diverge, "--out", tmp.path().join("d").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let blocked = tmp.path().join("file-not-dir");
    std::fs::write(&blocked, "x").unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    assert_eq!(fedsel(&["run", &cfg, "--out", blocked.to_str().unwrap()]).status.code(), Some(4));

    assert_eq!(fedsel(&["frobnicate"]).status.code(), Some(2));
}
