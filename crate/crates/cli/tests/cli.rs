use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_SPEC: &str = "segments_per_class = 5\nseed = 3\n";

fn harlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harlens")).args(args).env_remove("HARLENS_OUT").output().unwrap()
}

fn ok(args: &[&str]) {
    let out = harlens(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// A small synthetic dataset under `tmp/data`.
fn synth(tmp: &TempDir) -> PathBuf {
    let spec = write(tmp.path(), "spec.toml", SMALL_SPEC);
    let data = tmp.path().join("data");
    ok(&["synth", "--spec", p(&spec), "--out", p(&data)]);
    data
}

fn train(tmp: &TempDir, data: &Path, name: &str) -> PathBuf {
    let config = write(tmp.path(), "train.toml", "[train]\nepochs = 2\nbatch_size = 4\n\n[encoder]\nhidden = 8\nfusion_width = 8\n");
    let out = tmp.path().join(name);
    ok(&["train", "--data", p(data), "--config", p(&config), "--seed", "1", "--out", p(&out)]);
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_dataset_layout_and_run_manifest() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    for f in ["channels.tsv", "atomic.tsv", "complex.tsv", "train/manifest.tsv", "test/manifest.tsv", "run.json"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    let manifest = fs::read_to_string(data.join("train/manifest.tsv")).unwrap();
    let first = manifest.lines().next().unwrap().split('\t').next().unwrap();
    assert!(data.join("train").join(first).is_file());

    let run = json(&data.join("run.json"));
    assert_eq!(run["command"], "synth");
    assert_eq!(run["seed"], 3);
    assert_eq!(run["inputs"].as_object().unwrap().len(), 1);
    let digest = run["inputs"].as_object().unwrap().values().next().unwrap().as_str().unwrap();
    assert_eq!(digest.len(), 64);
}

#[test]
fn synth_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let spec = write(tmp.path(), "spec.toml", SMALL_SPEC);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["synth", "--spec", p(&spec), "--out", p(&a)]);
    ok(&["synth", "--spec", p(&spec), "--out", p(&b)]);
    for f in ["channels.tsv", "train/manifest.tsv", "test/manifest.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn train_eval_explain_pipeline() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let run = train(&tmp, &data, "run");
    for f in ["checkpoint.bin", "history.jsonl", "metrics.json", "confusion.tsv", "run.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert_eq!(fs::read_to_string(run.join("history.jsonl")).unwrap().lines().count(), 2);
    let metrics = json(&run.join("metrics.json"));
    assert!((0.0..=1.0).contains(&metrics["char_f1"].as_f64().unwrap()));

    let ckpt = run.join("checkpoint.bin");
    let eval = tmp.path().join("eval");
    ok(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data), "--dump-predictions", "--out", p(&eval)]);
    // Training validated on test/, so eval on test/ reproduces its metrics.
    assert_eq!(fs::read(eval.join("metrics.json")).unwrap(), fs::read(run.join("metrics.json")).unwrap());
    let test_rows = fs::read_to_string(data.join("test/manifest.tsv")).unwrap().lines().count();
    assert_eq!(fs::read_to_string(eval.join("predictions.jsonl")).unwrap().lines().count(), test_rows);
    let confusion = fs::read_to_string(eval.join("confusion.tsv")).unwrap();
    assert!(confusion.starts_with("true\\pred\t"));

    let manifest = fs::read_to_string(data.join("test/manifest.tsv")).unwrap();
    let window = data.join("test").join(manifest.lines().next().unwrap().split('\t').next().unwrap());
    let explain = tmp.path().join("explain/manifest.json");
    ok(&["explain", "--checkpoint", p(&ckpt), "--window", p(&window), "--out", p(&explain)]);
    let first = fs::read(&explain).unwrap();
    let m = json(&explain);
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["sensors"].as_array().unwrap().len(), 4);
    assert_eq!(m["sensors"].as_array().unwrap().iter().filter(|s| s["highlight"] == true).count(), 1);
    assert!(tmp.path().join("explain/manifest.run.json").is_file());
    ok(&["explain", "--checkpoint", p(&ckpt), "--window", p(&window), "--out", p(&explain)]);
    assert_eq!(fs::read(&explain).unwrap(), first);
    let prompt = fs::read_to_string(tmp.path().join("explain/manifest.prompt.txt")).unwrap();
    assert_eq!(prompt.trim_end(), m["prompt"].as_str().unwrap());
    assert!(prompt.contains("complex activity \""));
}

#[test]
fn explain_uses_custom_template() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let run = train(&tmp, &data, "run");
    let template = write(tmp.path(), "t.txt", "Activity: {complex}[ (look at the {sensor-location})]\n");
    let manifest = fs::read_to_string(data.join("train/manifest.tsv")).unwrap();
    let window = data.join("train").join(manifest.lines().next().unwrap().split('\t').next().unwrap());
    let out = tmp.path().join("explain.json");
    ok(&["explain", "--checkpoint", p(&run.join("checkpoint.bin")), "--window", p(&window), "--template", p(&template), "--out", p(&out)]);
    assert!(fs::read_to_string(tmp.path().join("explain.prompt.txt")).unwrap().starts_with("Activity: "));

    let bad = write(tmp.path(), "bad.txt", "{speed}");
    let r = harlens(&["explain", "--checkpoint", p(&run.join("checkpoint.bin")), "--window", p(&window), "--template", p(&bad), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn training_is_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let a = train(&tmp, &data, "a");
    let b = train(&tmp, &data, "b");
    for f in ["checkpoint.bin", "metrics.json", "confusion.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn loss_mode_is_the_only_config_difference() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let mut configs = Vec::new();
    for mode in ["kl", "complex-only"] {
        let out = tmp.path().join(mode);
        ok(&["train", "--data", p(&data), "--epochs", "1", "--seed", "4", "--loss-mode", mode, "--out", p(&out)]);
        let mut run = json(&out.join("run.json"));
        assert_eq!(run["config"]["train"]["loss_mode"], mode);
        run["config"]["train"].as_object_mut().unwrap().remove("loss_mode");
        configs.push((run["config"].clone(), run["inputs"].clone(), run["seed"].clone()));
    }
    assert_eq!(configs[0], configs[1]);
}

#[test]
fn bench_marks_complex_only_atomic_column() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let config = write(tmp.path(), "c.toml", "[train]\nbatch_size = 8\n\n[encoder]\nhidden = 4\nfusion_width = 4\n");
    let out = tmp.path().join("bench");
    ok(&[
        "bench", "--data", p(&data), "--config", p(&config), "--modes", "kl,complex-only", "--seeds", "0", "--epochs", "1", "--out",
        p(&out),
    ]);
    let table = fs::read_to_string(out.join("bench.tsv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "loss_mode\tchar_f1\tatomic_accuracy");
    assert!(lines[1].starts_with("kl\t") && !lines[1].ends_with("--"));
    assert!(lines[2].starts_with("complex-only\t") && lines[2].ends_with("\t--"));
    assert_eq!(fs::read_to_string(out.join("runs.tsv")).unwrap().lines().count(), 3);
}

#[test]
fn output_root_from_environment() {
    let tmp = TempDir::new().unwrap();
    let spec = write(tmp.path(), "spec.toml", SMALL_SPEC);
    let root = tmp.path().join("root");
    let out = Command::new(env!("CARGO_BIN_EXE_harlens"))
        .args(["synth", "--spec", p(&spec)])
        .env("HARLENS_OUT", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("synth/run.json").is_file());
}

#[test]
fn input_errors_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope");
    let out = tmp.path().join("out");
    assert_eq!(harlens(&["train", "--data", p(&missing), "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(harlens(&["train", "--data", p(&missing), "--loss-mode", "huber"]).status.code(), Some(2));

    let data = synth(&tmp);
    let bad = write(tmp.path(), "bad.toml", "[train]\nlearning_rte = 0.1\n");
    let r = harlens(&["train", "--data", p(&data), "--config", p(&bad), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("learning_rte"));

    let zero = write(tmp.path(), "zero.toml", "[train]\nalpha = 0.0\nbeta = 0.0\n");
    assert_eq!(harlens(&["train", "--data", p(&data), "--config", p(&zero), "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(harlens(&["eval", "--checkpoint", p(&data.join("channels.tsv")), "--data", p(&data)]).status.code(), Some(2));
    assert!(!out.join("run.json").exists());
}

#[test]
fn synth_rejects_unknown_recipe_atomic() {
    let tmp = TempDir::new().unwrap();
    let spec = write(tmp.path(), "spec.toml", "recipes = [[0, 1, 2], [3, 4, 5], [6, 7, 42]]\n");
    let r = harlens(&["synth", "--spec", p(&spec), "--out", p(&tmp.path().join("out"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn divergent_training_exits_with_code_three() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let config = write(tmp.path(), "c.toml", "[train]\nepochs = 3\nlearning_rate = 1e300\n");
    let r = harlens(&["train", "--data", p(&data), "--config", p(&config), "--out", p(&tmp.path().join("out"))]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
}
