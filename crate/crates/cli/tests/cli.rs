use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn subcr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subcr"))
        .args(args)
        .current_dir(dir)
        .env_remove("SUBCR_CACHE_DIR")
        .env("SUBCR_DATA_DIR", dir.join("data"))
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const QUICK: &[&str] = &["--dataset", "synthetic-small", "--epochs", "4", "--rounds", "3"];

fn quick<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = QUICK.to_vec();
    v.extend_from_slice(extra);
    v
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn json(p: PathBuf) -> serde_json::Value {
    serde_json::from_str(&read(p)).unwrap()
}

/// A 200-node ring with chords and 6 attributes per node, no labels.
fn write_plain_dataset(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let n = 200;
    let mut edges = String::new();
    let mut attrs = String::new();
    for i in 0..n {
        writeln!(edges, "{i} {}", (i + 1) % n).unwrap();
        writeln!(edges, "{i} {}", (i + 7) % n).unwrap();
        let row: Vec<String> = (0..6).map(|k| ((i * (k + 3)) % 5).to_string()).collect();
        writeln!(attrs, "{}", row.join(",")).unwrap();
    }
    std::fs::write(dir.join("edges.txt"), edges).unwrap();
    std::fs::write(dir.join("attributes.csv"), attrs).unwrap();
}

#[test]
fn run_writes_every_artifact_and_flags_low_rounds() {
    let tmp = TempDir::new().unwrap();
    let stdout = ok(&subcr(tmp.path(), &quick(&["run", "--out", "r"])));
    assert!(stdout.starts_with("AUC 0."), "{stdout}");
    assert!(stdout.contains("(low-round)"));
    assert_eq!(stdout.lines().count(), 1);
    let r = tmp.path().join("r");
    for f in ["model.ckpt", "epoch_log.csv", "scores.csv", "report.json", "roc.csv", "roc.svg", "summary.json", "config.toml"] {
        assert!(r.join(f).exists(), "{f} missing");
    }
    let summary = json(r.join("summary.json"));
    assert_eq!(summary["low_round"], true);
    assert_eq!(summary["rounds"], 3);
    assert_eq!(summary["num_nodes"], 120);
    assert_eq!(summary["num_anomalies"], 30);
    assert_eq!(summary["config"]["epochs"], 4);
    let log = read(r.join("epoch_log.csv"));
    assert_eq!(log.lines().next(), Some("epoch,loss_con,loss_res,loss_total"));
    assert_eq!(log.lines().count(), 5);
    assert!(read(r.join("scores.csv")).starts_with("node_id,contrastive,reconstruction,combined,label\n"));
    assert!(read(r.join("roc.svg")).contains("False positive rate"));
}

#[test]
fn identical_seeds_give_identical_score_files() {
    let tmp = TempDir::new().unwrap();
    ok(&subcr(tmp.path(), &quick(&["run", "--seed", "5", "--out", "a"])));
    ok(&subcr(tmp.path(), &quick(&["run", "--seed", "5", "--out", "b"])));
    ok(&subcr(tmp.path(), &quick(&["run", "--seed", "6", "--out", "c"])));
    let a = std::fs::read(tmp.path().join("a/scores.csv")).unwrap();
    assert_eq!(a, std::fs::read(tmp.path().join("b/scores.csv")).unwrap());
    assert_ne!(a, std::fs::read(tmp.path().join("c/scores.csv")).unwrap());
}

#[test]
fn sub_weight_forces_gamma_to_one() {
    let tmp = TempDir::new().unwrap();
    ok(&subcr(tmp.path(), &quick(&["run", "--variant", "sub-weight", "--out", "w"])));
    let report = json(tmp.path().join("w/report.json"));
    assert_eq!(report["meta"]["gamma"], 1.0);
    assert_eq!(json(tmp.path().join("w/summary.json"))["variant"], "sub-weight");
}

#[test]
fn train_then_score_matches_run() {
    let tmp = TempDir::new().unwrap();
    ok(&subcr(tmp.path(), &quick(&["run", "--out", "run"])));
    ok(&subcr(tmp.path(), &quick(&["train", "--out", "staged"])));
    ok(&subcr(tmp.path(), &quick(&["score", "--out", "staged"])));
    let stdout = ok(&subcr(tmp.path(), &quick(&["eval", "--out", "staged"])));
    let run = tmp.path().join("run");
    let staged = tmp.path().join("staged");
    assert_eq!(read(run.join("scores.csv")), read(staged.join("scores.csv")));
    assert_eq!(read(run.join("epoch_log.csv")), read(staged.join("epoch_log.csv")));
    assert_eq!(read(run.join("roc.csv")), read(staged.join("roc.csv")));
    let auc = json(run.join("summary.json"))["auc"].as_f64().unwrap();
    assert_eq!(stdout.trim(), format!("AUC {auc:.4} (low-round)"));
}

#[test]
fn inject_is_reproducible_and_labels_the_standard_count() {
    let tmp = TempDir::new().unwrap();
    write_plain_dataset(&tmp.path().join("data/cora"));
    let stdout = ok(&subcr(tmp.path(), &["inject", "--dataset", "cora", "--seed", "1", "--out", "i1"]));
    assert!(stdout.starts_with("150 labeled anomalies"), "{stdout}");
    ok(&subcr(tmp.path(), &["inject", "--dataset", "cora", "--seed", "1", "--out", "i2"]));
    for f in ["edges.txt", "attributes.csv", "labels.txt", "manifest.json"] {
        assert_eq!(read(tmp.path().join("i1").join(f)), read(tmp.path().join("i2").join(f)), "{f}");
    }
    let labels = read(tmp.path().join("i1/labels.txt"));
    assert_eq!(labels.lines().filter(|l| *l == "1").count(), 150);
    let manifest = json(tmp.path().join("i1/manifest.json"));
    assert_eq!(manifest["plan"]["seed"], 1);
    assert_eq!(manifest["num_labeled"], 150);

    // the injected copy is used as-is, without a second injection
    let stdout = ok(&subcr(
        tmp.path(),
        &["run", "--dataset", "cora", "--dataset-dir", "i1", "--epochs", "2", "--rounds", "2", "--out", "r"],
    ));
    assert!(stdout.starts_with("AUC"));
    assert_eq!(json(tmp.path().join("r/summary.json"))["num_anomalies"], 150);
}

#[test]
fn missing_attribute_file_exits_with_usage_code() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("data/cora");
    write_plain_dataset(&dir);
    std::fs::remove_file(dir.join("attributes.csv")).unwrap();
    let out = subcr(tmp.path(), &["inject", "--dataset", "cora"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("attributes.csv"), "{stderr}");
}

#[test]
fn bad_configuration_exits_with_usage_code() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(subcr(tmp.path(), &quick(&["run", "--rounds", "0"])).status.code(), Some(2));
    std::fs::write(tmp.path().join("bad.toml"), "[train]\nlearning_rate = 0.1\n").unwrap();
    assert_eq!(subcr(tmp.path(), &["run", "--config", "bad.toml"]).status.code(), Some(2));
    assert_eq!(subcr(tmp.path(), &["run", "--variant", "sub-x"]).status.code(), Some(2));
    assert_eq!(subcr(tmp.path(), &["run", "--config", "absent.toml"]).status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_point_and_records_failures() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(
        tmp.path().join("sweep.toml"),
        "[dataset]\nname = \"synthetic-small\"\n[train]\nepochs = 2\nrounds = 2\n\
         [sweep]\ngamma = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]\n",
    )
    .unwrap();
    let stdout = ok(&subcr(tmp.path(), &["sweep", "--config", "sweep.toml", "--out", "s", "--jobs", "3"]));
    assert!(stdout.starts_with("6 points (0 failed)"), "{stdout}");
    let csv = read(tmp.path().join("s/sweep.csv"));
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "subgraph_size,hidden,gamma,auc,runtime_s,error");
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("4,64,0,0."));

    std::fs::write(
        tmp.path().join("mixed.toml"),
        "[dataset]\nname = \"synthetic-small\"\n[train]\nepochs = 1\nrounds = 1\n[sweep]\nsubgraph_size = [1, 2]\n",
    )
    .unwrap();
    let stdout = ok(&subcr(tmp.path(), &["sweep", "--config", "mixed.toml", "--out", "m"]));
    assert!(stdout.starts_with("2 points (1 failed)"), "{stdout}");
    let csv = read(tmp.path().join("m/sweep.csv"));
    assert!(csv.lines().nth(1).unwrap().contains("subgraph_size >= 2"));
}

#[test]
fn sweep_without_a_grid_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("none.toml"), "[dataset]\nname = \"synthetic-small\"\n").unwrap();
    assert_eq!(subcr(tmp.path(), &["sweep", "--config", "none.toml"]).status.code(), Some(2));
    std::fs::write(
        tmp.path().join("empty.toml"),
        "[dataset]\nname = \"synthetic-small\"\n[sweep]\nhidden = []\n",
    )
    .unwrap();
    assert_eq!(subcr(tmp.path(), &["sweep", "--config", "empty.toml"]).status.code(), Some(2));
}

#[test]
fn diffuse_fills_the_cache_used_by_later_runs() {
    let tmp = TempDir::new().unwrap();
    let stdout = ok(&subcr(tmp.path(), &quick(&["diffuse", "--diffusion-cache", "cache"])));
    let path = PathBuf::from(stdout.trim());
    let path = if path.is_absolute() { path } else { tmp.path().join(path) };
    assert!(path.exists(), "{}", path.display());
    let before = std::fs::metadata(&path).unwrap().modified().unwrap();
    ok(&subcr(tmp.path(), &quick(&["run", "--diffusion-cache", "cache", "--out", "r"])));
    assert_eq!(std::fs::read_dir(tmp.path().join("cache")).unwrap().count(), 1);
    assert_eq!(std::fs::metadata(&path).unwrap().modified().unwrap(), before);
}

#[test]
fn eval_without_labels_is_rejected() {
    let tmp = TempDir::new().unwrap();
    ok(&subcr(tmp.path(), &quick(&["run", "--out", "r"])));
    let scores = tmp.path().join("r/scores.csv");
    let stripped: String = read(scores.clone())
        .lines()
        .map(|l| format!("{}\n", l.rsplit_once(',').unwrap().0.to_string() + ","))
        .collect();
    std::fs::write(&scores, stripped.replacen("combined,", "combined,label", 1)).unwrap();
    let out = subcr(tmp.path(), &["eval", "--scores", "r", "--out", "e"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
