use std::path::Path;
use std::process::{Command, Output};

fn pia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pia"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

const SPEC: &str = "\
# three nested cohorts
cohort_sizes = 15,15,15
cohort_support_sizes = 4,10,25
n_items = 30
coverage = 0.7
noise_rate = 0.02
n_val = 6
n_test = 6
seed = 2
";

fn synth(dir: &Path) -> String {
    std::fs::write(dir.join("spec.txt"), SPEC).unwrap();
    let out = pia(&["synth", "--spec", &p(dir, "spec.txt"), "--out", &p(dir, "data")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    p(dir, "data")
}

#[test]
fn no_arguments_prints_usage() {
    let out = pia(&[]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(code(&pia(&["frobnicate"])), 1);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    std::fs::write(dir.path().join("cfg.txt"), "epochs = 2\nlearning_rate = 0.1\n").unwrap();
    let out = pia(&["train", "--data", &data, "--config", &p(dir.path(), "cfg.txt"), "--out", &p(dir.path(), "run")]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pia(&["train", "--data", &p(dir.path(), "nowhere"), "--fast", "--out", &p(dir.path(), "run")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_suite_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pia(&["geometry", "--suite", "nope", "--out", &p(dir.path(), "g")])), 1);
}

#[test]
fn synth_train_evaluate_export() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = synth(d);
    assert!(d.join("data/manifest.json").exists());

    let out = pia(&[
        "train", "--data", &data, "--fast", "--pia", "on", "--set", "epochs=3", "--set", "batch_size=16", "--out",
        &p(d, "run"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(d.join("run/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let config = std::fs::read_to_string(d.join("run/config.txt")).unwrap();
    assert!(config.contains("epochs = 3\n") && config.contains("pia = on\n"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["latent_dim"], "32");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    let out = pia(&[
        "evaluate", "--model", &p(d, "run/model.piam"), "--data", &data, "--k", "5,10", "--strata", "5,10", "--out",
        &p(d, "eval"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("eval/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["n_users"], 6);
    let ndcg = metrics["ndcg"]["10"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ndcg));
    let csv = std::fs::read_to_string(d.join("eval/metrics.csv")).unwrap();
    assert!(csv.starts_with("group,n_users,recall@5,recall@10,ndcg@5,ndcg@10"));

    let out = pia(&["export", "--model", &p(d, "run/model.piam"), "--data", &data, "--out", &p(d, "lat/latents.csv")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let latents = std::fs::read_to_string(d.join("lat/latents.csv")).unwrap();
    assert_eq!(latents.lines().count(), 1 + 33);
    assert!(d.join("lat/latents.csv.manifest.json").exists());

    let out = pia(&["geometry", "--suite", "probe", "--model", &p(d, "run/model.piam"), "--data", &data, "--out", &p(d, "g")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 5);
}

#[test]
fn model_and_data_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = synth(d);
    pia(&["train", "--data", &data, "--fast", "--set", "epochs=1", "--out", &p(d, "run")]);
    std::fs::write(d.join("spec2.txt"), SPEC.replace("n_items = 30", "n_items = 40")).unwrap();
    pia(&["synth", "--spec", &p(d, "spec2.txt"), "--out", &p(d, "data2")]);
    let out = pia(&["evaluate", "--model", &p(d, "run/model.piam"), "--data", &p(d, "data2"), "--out", &p(d, "e")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn geometry_thm3_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = pia(&["geometry", "--suite", "thm3", "--out", &p(dir.path(), "g")]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["pass"], true, "{line}");
        n += 1;
    }
    assert_eq!(n, 11 * 11 * 5 * 5 + 45 * 5);
    assert_eq!(std::fs::read_to_string(dir.path().join("g/geometry_thm3.jsonl")).unwrap(), text);
}
