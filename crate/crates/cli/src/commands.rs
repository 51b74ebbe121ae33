use std::fs;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use ppg_qa_core::beat_detect::msptd;
use ppg_qa_core::data_io::{load_manifest, load_segment, segment_csv, DatasetManifest, Split};
use ppg_qa_core::ensemble::{
    load_model, predict_with_threshold, train_gradient_boosted, train_random_forest, BoostParams,
    ForestParams, ModelError, PredictionResult,
};
use ppg_qa_core::eval::{evaluate as run_evaluation, EvalError};
use ppg_qa_core::features::{feature_csv, read_feature_csv, FeatureConfig, FeatureRow, FEATURE_COLUMNS};
use ppg_qa_core::pipeline::{filter_segment, process_segment, BandConfig, PipelineConfig};
use ppg_qa_core::synth::{generate_corpus, SynthSpec};

use crate::output::{check_writable_target, clear_empty_dir, sidecar_path, write_atomic, write_run_record};
use crate::{Algo, BandArgs, CliError, SplitArg};

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(invalid(format!("{what} {} not found", path.display())));
    }
    Ok(())
}

fn check_fs(fs: f64) -> Result<(), CliError> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(invalid(format!("--fs must be positive, got {fs}")));
    }
    Ok(())
}

fn check_threshold(t: f64) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("--threshold must be in [0, 1], got {t}")));
    }
    Ok(())
}

fn pipeline_config(band: &BandArgs, beat_length: usize, fs: f64) -> Result<PipelineConfig, CliError> {
    let config = PipelineConfig {
        band: BandConfig {
            order: band.order,
            low_cut_hz: band.low,
            high_cut_hz: band.high,
            stopband_atten_db: band.atten_db,
        },
        features: FeatureConfig { beat_length },
    };
    config.validate(fs).map_err(|e| invalid(e.to_string()))?;
    Ok(config)
}

fn split_of(arg: SplitArg) -> Split {
    match arg {
        SplitArg::Train => Split::Train,
        SplitArg::Validation => Split::Validation,
        SplitArg::Test => Split::Test,
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text.into_bytes()
}

fn open_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    require_file(path, "manifest")?;
    load_manifest(path).map_err(|e| invalid(e.to_string()))
}

pub fn filter(input: &Path, fs: f64, band: &BandArgs, out: &Path) -> Result<(), CliError> {
    check_fs(fs)?;
    let config = pipeline_config(band, FeatureConfig::default().beat_length, fs)?;
    require_file(input, "segment")?;
    check_writable_target(out)?;
    let segment = load_segment(input, fs).map_err(|e| invalid(e.to_string()))?;
    let filtered =
        filter_segment(&segment, &config).map_err(|e| runtime(format!("{}: {e}", input.display())))?;
    write_atomic(out, segment_csv(filtered.samples()).as_bytes())?;
    write_run_record(&sidecar_path(out), None, &[out], None)
}

pub fn detect(input: &Path, fs: f64, out: &Path) -> Result<(), CliError> {
    check_fs(fs)?;
    require_file(input, "segment")?;
    check_writable_target(out)?;
    let segment = load_segment(input, fs).map_err(|e| invalid(e.to_string()))?;
    let markers = msptd(segment.samples()).map_err(|e| runtime(format!("{}: {e}", input.display())))?;
    info!(
        "{} peaks, {} troughs",
        markers.peak_indices.len(),
        markers.trough_indices.len()
    );
    write_atomic(out, &json_bytes(&markers))?;
    write_run_record(&sidecar_path(out), None, &[out], None)
}

pub struct FeaturesArgs<'a> {
    pub manifest: &'a Path,
    pub fs: f64,
    pub out: &'a Path,
    pub split: Option<SplitArg>,
    pub dump: Option<&'a Path>,
    pub band: &'a BandArgs,
    pub beat_length: usize,
}

pub fn features(args: FeaturesArgs) -> Result<(), CliError> {
    check_fs(args.fs)?;
    let config = pipeline_config(args.band, args.beat_length, args.fs)?;
    let manifest = open_manifest(args.manifest)?;
    check_writable_target(args.out)?;
    if let Some(dir) = args.dump {
        fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    }
    let entries: Vec<_> = match args.split {
        Some(s) => manifest.entries_in(split_of(s)).collect(),
        None => manifest.entries.iter().collect(),
    };
    if entries.is_empty() {
        return Err(invalid("no manifest entries selected"));
    }

    let rows = entries
        .par_iter()
        .map(|entry| {
            let fail = |e: String| runtime(format!("segment {}: {e}", entry.segment_id));
            let segment = manifest
                .load_entry(entry, args.fs)
                .map_err(|e| fail(e.to_string()))?;
            let features = match process_segment(&segment, &config) {
                Ok(extraction) => {
                    if let Some(dir) = args.dump {
                        let path = dir.join(format!("{}.json", entry.segment_id));
                        write_atomic(&path, &json_bytes(&extraction))?;
                    }
                    Some(extraction.features)
                }
                Err(e) if e.is_too_few_beats() => {
                    warn!("segment {}: {e}; features left empty", entry.segment_id);
                    None
                }
                Err(e) => return Err(fail(e.to_string())),
            };
            Ok(FeatureRow {
                segment_id: entry.segment_id.clone(),
                features,
                label: Some(entry.label()),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let empty = rows.iter().filter(|r| r.features.is_none()).count();
    info!("{} segments, {} with too few beats", rows.len(), empty);
    write_atomic(args.out, feature_csv(&rows).as_bytes())?;
    write_run_record(&sidecar_path(args.out), None, &[args.out], None)
}

pub struct TrainArgs<'a> {
    pub features: &'a Path,
    pub algo: Algo,
    pub seed: u64,
    pub out: &'a Path,
    pub n_trees: usize,
    pub n_rounds: usize,
    pub max_depth: Option<usize>,
    pub learning_rate: f64,
    pub lambda: f64,
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::Io { .. } => runtime(e.to_string()),
        _ => invalid(e.to_string()),
    }
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    require_file(args.features, "feature file")?;
    check_writable_target(args.out)?;
    let rows = read_feature_csv(args.features).map_err(|e| invalid(e.to_string()))?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut skipped = 0usize;
    for row in &rows {
        match (&row.features, row.label) {
            (Some(f), Some(label)) => {
                x.push(f.values.to_vec());
                y.push(label);
            }
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("{skipped} rows without features or label skipped");
    }

    let model = match args.algo {
        Algo::Rf => {
            let params = ForestParams {
                n_trees: args.n_trees,
                max_depth: args.max_depth,
                ..ForestParams::default()
            };
            train_random_forest(&x, &y, &params, args.seed)
        }
        Algo::Gbdt => {
            let params = BoostParams {
                n_rounds: args.n_rounds,
                max_depth: args.max_depth.unwrap_or(BoostParams::default().max_depth),
                learning_rate: args.learning_rate,
                lambda: args.lambda,
                ..BoostParams::default()
            };
            train_gradient_boosted(&x, &y, &params, args.seed)
        }
    }
    .map_err(model_error)?;
    if let Some(oob) = model.oob_accuracy {
        info!("out-of-bag accuracy {oob:.4}");
    }
    write_atomic(args.out, model.to_json().as_bytes())?;
    write_run_record(&sidecar_path(args.out), Some(args.seed), &[args.out], None)
}

pub fn predict(model_path: &Path, features: &Path, out: &Path, threshold: f64) -> Result<(), CliError> {
    check_threshold(threshold)?;
    require_file(model_path, "model")?;
    require_file(features, "feature file")?;
    check_writable_target(out)?;
    let model = load_model(model_path).map_err(model_error)?;
    let rows = read_feature_csv(features).map_err(|e| invalid(e.to_string()))?;

    let mut text = String::from("segment_id,label,score,reason\n");
    for row in &rows {
        let result = match &row.features {
            Some(f) => predict_with_threshold(&model, f.as_slice(), threshold)
                .map_err(|e| runtime(format!("segment {}: {e}", row.segment_id)))?,
            None => PredictionResult::too_few_beats(),
        };
        text.push_str(&format!(
            "{},{},{},{}\n",
            row.segment_id,
            result.label.as_str(),
            result.score,
            result.reason.map_or("", |r| r.as_str())
        ));
    }
    write_atomic(out, text.as_bytes())?;
    write_run_record(&sidecar_path(out), None, &[out], None)
}

pub struct EvaluateArgs<'a> {
    pub model: &'a Path,
    pub manifest: &'a Path,
    pub split: SplitArg,
    pub fs: f64,
    pub out: &'a Path,
    pub threshold: f64,
    pub band: &'a BandArgs,
    pub beat_length: usize,
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    check_fs(args.fs)?;
    check_threshold(args.threshold)?;
    let config = pipeline_config(args.band, args.beat_length, args.fs)?;
    require_file(args.model, "model")?;
    let model = load_model(args.model).map_err(model_error)?;
    let manifest = open_manifest(args.manifest)?;
    check_writable_target(args.out)?;

    let report = run_evaluation(
        &model,
        &manifest,
        split_of(args.split),
        args.fs,
        &config,
        args.threshold,
    )
    .map_err(|e| match e {
        EvalError::EmptySplit(_) | EvalError::EmptyInput | EvalError::LengthMismatch { .. } => {
            invalid(e.to_string())
        }
        EvalError::Data { .. } | EvalError::Pipeline { .. } => runtime(e.to_string()),
    })?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
    info!(
        "Se {} PPV {} F1 {} ({} too few beats)",
        fmt(report.sensitivity),
        fmt(report.ppv),
        fmt(report.f1),
        report.n_too_few_beats
    );
    write_atomic(args.out, &json_bytes(&report))?;
    write_run_record(&sidecar_path(args.out), None, &[args.out], None)
}

pub fn importance(model_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    require_file(model_path, "model")?;
    if let Some(out) = out {
        check_writable_target(out)?;
    }
    let model = load_model(model_path).map_err(model_error)?;
    let columns: Vec<&str> = if model.n_features == FEATURE_COLUMNS.len() {
        FEATURE_COLUMNS.to_vec()
    } else {
        Vec::new()
    };
    // Gain-based: impurity decrease for forests, split gain for boosting.
    let mut text = String::from("index,column,importance\n");
    for (i, w) in model.importances.iter().enumerate() {
        let name = columns.get(i).copied().unwrap_or("");
        text.push_str(&format!("{i},{name},{w}\n"));
    }
    print!("{text}");
    if let Some(out) = out {
        write_atomic(out, text.as_bytes())?;
    }
    Ok(())
}

pub fn synth(
    n_good: usize,
    n_bad: usize,
    fs: f64,
    duration: f64,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    check_fs(fs)?;
    if n_good + n_bad < 2 {
        return Err(invalid("--n-good plus --n-bad must be at least 2"));
    }
    let base = SynthSpec {
        sample_rate_hz: fs,
        duration_s: duration,
        ..SynthSpec::default()
    };
    base.validate().map_err(|e| invalid(e.to_string()))?;
    check_writable_target(out)?;
    clear_empty_dir(out)?;

    // Build next to the target and rename, so `out` is either absent or complete.
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let staging = tempfile::Builder::new()
        .prefix(".synth-")
        .tempdir_in(&parent)
        .map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    let manifest =
        generate_corpus(n_good, n_bad, &base, seed, staging.path()).map_err(|e| runtime(e.to_string()))?;
    fs::rename(staging.path(), out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    info!("{} segments written to {}", manifest.entries.len(), out.display());
    let extra = serde_json::json!({ "n_good": n_good, "n_bad": n_bad, "fs": fs, "duration_s": duration });
    write_run_record(&sidecar_path(out), Some(seed), &[out], Some(&extra))
}
