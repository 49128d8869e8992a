use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use harlens::dataset::{parse_segment_window, synth_generate, Schema, Segment, SynthSpec};
use harlens::encoder::{read_checkpoint, write_checkpoint, AtomicSource, Checkpoint, EncoderConfig};
use harlens::explain::{explain_window, validate_template, AttributionMethod, ManifestOptions};
use harlens::metrics::{AtomicAccuracyMode, MetricsReport};
use harlens::training::{self, evaluate_with, predict, LossMode, TrainConfig};

use crate::datadir::{read_schema, read_split, write_schema, write_split};
use crate::run::{read_text, CliError, RunRecorder, RUN_FILE};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFUSION_FILE: &str = "confusion.tsv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const PROMPT_EXTENSION: &str = "prompt.txt";
pub const RUN_EXTENSION: &str = "run.json";
pub const BENCH_FILE: &str = "bench.tsv";
pub const BENCH_RUNS_FILE: &str = "runs.tsv";

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path, rec: &mut RunRecorder) -> Result<T, CliError> {
    let bytes = rec.input_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn synth(spec_path: Option<PathBuf>, seed: Option<u64>, out: PathBuf) -> Result<(), CliError> {
    let mut rec = RunRecorder::new("synth");
    let mut spec: SynthSpec = match &spec_path {
        Some(p) => parse_toml(p, &mut rec)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = synth_generate(&spec)?;
    for path in write_schema(&out, &data.schema)? {
        rec.output(&path);
    }
    for (split, segs) in [("train", &data.train), ("test", &data.test)] {
        for path in write_split(&out, split, segs, &data.schema)? {
            rec.output(&path);
        }
    }
    rec.finish(&out.join(RUN_FILE), Some(spec.seed), to_json(&spec))?;
    Ok(())
}

/// Encoder settings a config file may change; shape fields come from the data.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderOverrides {
    pub kernel: Option<usize>,
    pub conv_stride: Option<usize>,
    pub features_per_channel: Option<usize>,
    pub fusion_width: Option<usize>,
    pub hidden: Option<usize>,
    pub atomic_source: Option<AtomicSource>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub encoder: EncoderOverrides,
}

pub struct TrainOverrides {
    pub loss_mode: Option<LossMode>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
}

fn encoder_config(schema: &Schema, segs: &[Segment], o: &EncoderOverrides, seed: u64) -> Result<EncoderConfig, CliError> {
    let first = segs.first().ok_or_else(|| CliError::Input("training split is empty".into()))?;
    let mut cfg =
        EncoderConfig::desk(schema.channels.len(), first.window.steps(), schema.atomic.len(), schema.complex.len(), seed);
    cfg.kernel = o.kernel.unwrap_or(cfg.kernel);
    cfg.conv_stride = o.conv_stride.unwrap_or(cfg.conv_stride);
    cfg.features_per_channel = o.features_per_channel.unwrap_or(cfg.features_per_channel);
    cfg.fusion_width = o.fusion_width.unwrap_or(cfg.fusion_width);
    cfg.hidden = o.hidden.unwrap_or(cfg.hidden);
    cfg.atomic_source = o.atomic_source.unwrap_or(cfg.atomic_source);
    cfg.validate()?;
    Ok(cfg)
}

fn load_run_config(path: Option<&Path>, rec: &mut RunRecorder) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => parse_toml(p, rec),
        None => Ok(RunConfig::default()),
    }
}

/// The validation split: `val/` when present, otherwise `test/`.
fn validation_split(data: &Path) -> &'static str {
    if data.join("val").is_dir() {
        "val"
    } else {
        "test"
    }
}

fn class_names(schema: &Schema) -> Vec<String> {
    schema.complex.names().into_iter().map(str::to_string).collect()
}

struct Trained {
    checkpoint: Checkpoint,
    history: harlens::training::TrainHistory,
    report: MetricsReport,
}

fn train_once(
    schema: &Schema,
    train_set: &[Segment],
    val: &[Segment],
    cfg: &RunConfig,
) -> Result<Trained, CliError> {
    cfg.train.validate()?;
    let ecfg = encoder_config(schema, train_set, &cfg.encoder, cfg.train.seed)?;
    let (params, history) = training::train(train_set, val, &ecfg, &cfg.train)?;
    let report = evaluate_with(&ecfg, &params, val, &class_names(schema), cfg.train.threshold, cfg.train.accuracy_mode)?;
    Ok(Trained { checkpoint: Checkpoint { config: ecfg, schema: schema.clone(), params }, history, report })
}

pub fn train(data: &Path, config: Option<PathBuf>, o: TrainOverrides, out: PathBuf) -> Result<(), CliError> {
    let mut rec = RunRecorder::new("train");
    let mut cfg = load_run_config(config.as_deref(), &mut rec)?;
    if let Some(m) = o.loss_mode {
        cfg.train.loss_mode = m;
    }
    if let Some(s) = o.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = o.epochs {
        cfg.train.epochs = e;
    }
    rec.input_dir(data)?;
    let schema = read_schema(data)?;
    let train_set = read_split(data, "train", &schema)?;
    let val = read_split(data, validation_split(data), &schema)?;
    let t = train_once(&schema, &train_set, &val, &cfg)?;

    rec.write(&out.join(CHECKPOINT_FILE), &write_checkpoint(&t.checkpoint)?)?;
    rec.write(&out.join(HISTORY_FILE), t.history.to_jsonl().as_bytes())?;
    rec.write(&out.join(METRICS_FILE), t.report.to_json().as_bytes())?;
    rec.write(&out.join(CONFUSION_FILE), t.report.confusion_tsv().as_bytes())?;
    let mut config = to_json(&cfg);
    config["encoder_resolved"] = to_json(&t.checkpoint.config);
    rec.finish(&out.join(RUN_FILE), Some(cfg.train.seed), config)?;
    Ok(())
}

pub fn eval(
    checkpoint: &Path,
    data: &Path,
    split: &str,
    threshold: f64,
    mode: AtomicAccuracyMode,
    dump_predictions: bool,
    out: PathBuf,
) -> Result<(), CliError> {
    let mut rec = RunRecorder::new("eval");
    let ckpt = read_checkpoint(&rec.input_file(checkpoint)?)?;
    rec.input_dir(&data.join(split))?;
    let schema = read_schema(data)?;
    if schema != ckpt.schema {
        return Err(CliError::Input(format!("dataset schema in {} differs from the checkpoint's", data.display())));
    }
    let segs = read_split(data, split, &schema)?;
    if segs.is_empty() {
        return Err(CliError::Input(format!("split `{split}` is empty")));
    }
    let preds = predict(&ckpt.config, &ckpt.params, &segs)?;
    let report = MetricsReport::from_predictions(&preds, &class_names(&schema), threshold, mode)?;
    rec.write(&out.join(METRICS_FILE), report.to_json().as_bytes())?;
    rec.write(&out.join(CONFUSION_FILE), report.confusion_tsv().as_bytes())?;
    if dump_predictions {
        let lines: String =
            preds.iter().map(|p| serde_json::to_string(p).expect("prediction serializes") + "\n").collect();
        rec.write(&out.join(PREDICTIONS_FILE), lines.as_bytes())?;
    }
    let config = serde_json::json!({ "split": split, "threshold": threshold, "accuracy_mode": mode });
    rec.finish(&out.join(RUN_FILE), None, config)?;
    Ok(())
}

pub fn explain(
    checkpoint: &Path,
    window: &Path,
    template: Option<PathBuf>,
    color: Option<String>,
    atomic_cutoff: f64,
    method: AttributionMethod,
    out: PathBuf,
) -> Result<(), CliError> {
    let mut rec = RunRecorder::new("explain");
    let ckpt = read_checkpoint(&rec.input_file(checkpoint)?)?;
    let text = String::from_utf8(rec.input_file(window)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", window.display())))?;
    let win = parse_segment_window(&text, &ckpt.schema.channels)?;
    let mut opts = ManifestOptions { atomic_cutoff, attribution_method: method, ..ManifestOptions::default() };
    if let Some(t) = &template {
        opts.template = read_text(t)?.trim_end_matches(['\n', '\r']).to_string();
        rec.input(t, opts.template.as_bytes());
        validate_template(&opts.template)?;
    }
    if let Some(c) = color {
        opts.color = c;
    }
    if !(atomic_cutoff > 0.0 && atomic_cutoff < 1.0) {
        return Err(CliError::Input(format!("atomic cutoff {atomic_cutoff} must lie in (0, 1)")));
    }
    let window_id = window.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let manifest = explain_window(&ckpt.config, &ckpt.params, &win, &ckpt.schema, &window_id, &opts)?;
    rec.write(&out, manifest.to_json().as_bytes())?;
    rec.write(&out.with_extension(PROMPT_EXTENSION), format!("{}\n", manifest.prompt).as_bytes())?;
    rec.finish(&out.with_extension(RUN_EXTENSION), None, to_json(&opts))?;
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Scores on the held-out split, one row per loss mode (medians over seeds).
/// The complex-only model has no trained atomic head, so its atomic column
/// reads `--`.
pub fn bench(
    data: &Path,
    config: Option<PathBuf>,
    modes: &[LossMode],
    seeds: &[u64],
    epochs: Option<usize>,
    out: PathBuf,
) -> Result<(), CliError> {
    if modes.is_empty() || seeds.is_empty() {
        return Err(CliError::Input("bench needs at least one mode and one seed".into()));
    }
    let mut rec = RunRecorder::new("bench");
    let base = load_run_config(config.as_deref(), &mut rec)?;
    rec.input_dir(data)?;
    let schema = read_schema(data)?;
    let train_set = read_split(data, "train", &schema)?;
    let val = read_split(data, validation_split(data), &schema)?;
    let test = read_split(data, "test", &schema)?;

    let mut runs = String::from("loss_mode\tseed\tbest_epoch\tchar_f1\tatomic_accuracy\n");
    let mut table = String::from("loss_mode\tchar_f1\tatomic_accuracy\n");
    for &mode in modes {
        let (mut f1s, mut accs) = (Vec::new(), Vec::new());
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.train.loss_mode = mode;
            cfg.train.seed = seed;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let t = train_once(&schema, &train_set, &val, &cfg)?;
            let report = evaluate_with(
                &t.checkpoint.config,
                &t.checkpoint.params,
                &test,
                &class_names(&schema),
                cfg.train.threshold,
                cfg.train.accuracy_mode,
            )?;
            runs.push_str(&format!(
                "{}\t{seed}\t{}\t{:.4}\t{:.4}\n",
                mode.as_str(),
                t.history.best_epoch,
                report.char_f1,
                report.atomic_accuracy
            ));
            f1s.push(report.char_f1);
            accs.push(report.atomic_accuracy);
        }
        let acc = if mode == LossMode::ComplexOnly { "--".to_string() } else { format!("{:.4}", median(accs)) };
        table.push_str(&format!("{}\t{:.4}\t{acc}\n", mode.as_str(), median(f1s)));
    }
    rec.write(&out.join(BENCH_RUNS_FILE), runs.as_bytes())?;
    rec.write(&out.join(BENCH_FILE), table.as_bytes())?;
    let config = serde_json::json!({ "base": base, "modes": modes, "seeds": seeds, "epochs": epochs });
    rec.finish(&out.join(RUN_FILE), None, config)?;
    Ok(())
}
