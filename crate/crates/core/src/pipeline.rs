//! The five pipeline commands. Each reads and writes files under the
//! configured paths and returns a summary for the caller to print.
//!
//! | command    | reads                         | writes (under `output`)                           |
//! |------------|-------------------------------|---------------------------------------------------|
//! | `synth`    |                               | `input` plus ground-truth files beside it         |
//! | `inspect`  | `input`                       | `adf.csv`                                         |
//! | `clean`    | `input`                       | `anomalies.csv`, `daily.csv`, `interp_models.csv`, `interp_plan.json` |
//! | `train`    | `daily.csv`                   | `model.json`, `history.csv`, `metrics.csv`        |
//! | `forecast` | `model.json`, `daily.csv`     | `forecast/forecast.csv`, `forecast/metrics.csv`, `forecast/*.svg` |

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::anomaly::{anomaly_scores, build_forest, top_indices, ForestParams};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::forecast::{emit_report, evaluate_sparse, rollout, SparseEvaluation};
use crate::ingest::{
    apply_scaler, chrono_split, cyclic_encode, fit_default_scaler, load_csv, make_windows, SplitSpec,
    TimeSeriesFrame, DATE_FORMAT,
};
use crate::metrics::{fit_diagnosis, metric_report, write_metric_reports, FitDiagnosis, MetricReport};
use crate::nn::{
    default_epochs, load_checkpoint, predict_dataset, save_checkpoint, train, Checkpoint, ModelSpec,
    TrainConfig, TrainHistory, Variant,
};
use crate::seed::{derive_seed, stage};
use crate::stattests::{adf_test, AdfResult, LagSpec};
use crate::synth::{generate, write_synth};
use crate::treereg::{interpolate, write_model_table, InterpolationPlan};

/// Window sizes with epoch presets.
pub const STANDARD_WINDOWS: [usize; 3] = [7, 14, 28];

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn daily_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output.join("daily.csv")
}

pub fn model_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output.join("model.json")
}

pub fn forecast_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.output.join("forecast")
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub files: Vec<PathBuf>,
    pub anomalies: usize,
}

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<SynthSummary> {
    let data = generate(derive_seed(cfg.seed, stage::SYNTH), cfg.synth.anomalies)?;
    let files = write_synth(&data, &cfg.input)?;
    Ok(SynthSummary {
        files,
        anomalies: data.anomalies.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdfRow {
    pub parameter: String,
    pub result: Option<AdfResult>,
    pub verdict: String,
}

pub fn cmd_inspect(cfg: &PipelineConfig) -> Result<Vec<AdfRow>> {
    let frame = load_csv(&cfg.input)?;
    let mut rows = Vec::with_capacity(frame.n_cols());
    for (c, name) in frame.names().iter().enumerate() {
        let (result, verdict) = match adf_test(&frame.observed(c), LagSpec::Auto) {
            Ok(r) => {
                let v = if r.stationary_at_5pct { "stationary" } else { "non-stationary" };
                (Some(r), v.to_string())
            }
            Err(Error::ConstantSeries) => (None, "degenerate (constant)".to_string()),
            Err(Error::TooShort { needed, have }) => (None, format!("too short ({have} < {needed})")),
            Err(e) => return Err(e),
        };
        rows.push(AdfRow {
            parameter: name.clone(),
            result,
            verdict,
        });
    }
    ensure_dir(&cfg.output)?;
    let path = cfg.output.join("adf.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["parameter", "statistic", "p_value", "lags", "n_obs", "verdict"])?;
    for r in &rows {
        let (s, p, l, n) = match &r.result {
            Some(a) => (
                a.statistic.to_string(),
                a.p_value.to_string(),
                a.lags_used.to_string(),
                a.n_obs.to_string(),
            ),
            None => Default::default(),
        };
        w.write_record([r.parameter.clone(), s, p, l, n, r.verdict.clone()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct CleanSummary {
    /// Flagged row indices, ascending.
    pub flagged: Vec<usize>,
    pub scores: Vec<f64>,
    pub daily_rows: usize,
    pub plan: InterpolationPlan,
}

/// Flags anomalous weekly rows with an isolation forest on the scaled
/// values, blanks them, and interpolates every parameter onto a daily grid.
pub fn cmd_clean(cfg: &PipelineConfig) -> Result<CleanSummary> {
    let frame = load_csv(&cfg.input)?;
    let scaled = apply_scaler(&fit_default_scaler(&frame)?, &frame)?;
    let complete: Vec<usize> = (0..frame.n_rows()).filter(|&r| scaled.row(r).is_some()).collect();
    let points: Vec<Vec<f64>> = complete.iter().filter_map(|&r| scaled.row(r)).collect();
    let params = ForestParams {
        trees: cfg.anomaly.trees,
        subsample: cfg.anomaly.subsample,
        contamination: cfg.anomaly.contamination,
        seed: derive_seed(cfg.seed, stage::ANOMALY),
    };
    let model = build_forest(&points, params)?;
    let scores = anomaly_scores(&model, &points)?;
    let mut flagged: Vec<usize> = top_indices(&scores, cfg.anomaly.contamination)
        .into_iter()
        .map(|k| complete[k])
        .collect();
    flagged.sort_unstable();

    let mut masked = frame.clone();
    for &r in &flagged {
        for c in 0..masked.n_cols() {
            masked.set(r, c, None);
        }
    }
    let interp = interpolate(&masked, &cfg.interpolation, derive_seed(cfg.seed, stage::INTERPOLATION))?;

    ensure_dir(&cfg.output)?;
    let path = cfg.output.join("anomalies.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["index", "date", "score"])?;
    let mut row_scores = vec![f64::NAN; frame.n_rows()];
    for (k, &r) in complete.iter().enumerate() {
        row_scores[r] = scores[k];
    }
    for &r in &flagged {
        w.write_record([
            r.to_string(),
            frame.dates()[r].format(DATE_FORMAT).to_string(),
            row_scores[r].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    interp.daily.write_csv(&daily_path(cfg))?;
    write_model_table(&cfg.output.join("interp_models.csv"), &interp.plan)?;
    write_json(&cfg.output.join("interp_plan.json"), &interp.plan)?;
    Ok(CleanSummary {
        flagged,
        scores: row_scores,
        daily_rows: interp.daily.n_rows(),
        plan: interp.plan,
    })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub spec: ModelSpec,
    pub epochs: usize,
    pub history: TrainHistory,
    pub train_report: MetricReport,
    pub validation_report: MetricReport,
    pub diagnosis: Option<FitDiagnosis>,
    pub warnings: Vec<String>,
}

fn load_daily(cfg: &PipelineConfig) -> Result<TimeSeriesFrame> {
    let path = daily_path(cfg);
    if !path.exists() {
        return Err(Error::MissingPrerequisite(format!(
            "{} not found; run the `clean` command first",
            path.display()
        )));
    }
    load_csv(&path)
}

fn model_spec(cfg: &PipelineConfig, n_features: usize) -> Result<ModelSpec> {
    let m = &cfg.model;
    let mut spec = ModelSpec::default_for(m.variant, m.window, n_features)
        .map_err(|e| Error::config("model.window", e.to_string()))?;
    if let Some(h) = m.hidden {
        spec.hidden = h;
    }
    if let Some(d) = &m.dense {
        spec.dense = d.clone();
    }
    if let Some(r) = m.residual {
        spec.residual = r;
    }
    spec.validate().map_err(|e| Error::config("model", e.to_string()))?;
    Ok(spec)
}

/// Epochs from the config, else the preset for the window, else the
/// variant's window-7 preset.
fn resolve_epochs(cfg: &PipelineConfig, warnings: &mut Vec<String>) -> usize {
    let m = &cfg.model;
    let standard = STANDARD_WINDOWS.contains(&m.window) || (m.variant == Variant::Fnn && m.window == 0);
    if !standard {
        warnings.push(format!(
            "window {} is not one of the standard sizes {:?}; results are not comparable with the preset runs",
            m.window, STANDARD_WINDOWS
        ));
    }
    match (m.epochs, default_epochs(m.variant, m.window)) {
        (Some(e), _) | (None, Some(e)) => e,
        (None, None) => {
            let e = default_epochs(m.variant, 7).expect("window 7 preset exists");
            warnings.push(format!("no epoch preset for window {}; using {e}", m.window));
            e
        }
    }
}

pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainSummary> {
    let daily = load_daily(cfg)?;
    let mut warnings = Vec::new();
    let epochs = resolve_epochs(cfg, &mut warnings);
    let spec = model_spec(cfg, daily.n_cols())?;

    let scaler = fit_default_scaler(&daily)?;
    let scaled = apply_scaler(&scaler, &daily)?;
    let ds = make_windows(&scaled, spec.window, &cyclic_encode(scaled.dates()))?;
    let tc = TrainConfig {
        epochs,
        batch_size: cfg.model.batch_size,
        loss: cfg.model.loss,
        split: cfg.split,
        patience: cfg.model.patience,
        learning_rate: cfg.model.learning_rate,
        clip_norm: cfg.model.clip_norm,
        seed: derive_seed(cfg.seed, stage::TRAIN),
    };
    let (network, history) = train(&spec, &ds, &tc)?;

    let (train_ds, val_ds) = chrono_split(&ds, SplitSpec::new(cfg.split)?)?;
    let names = daily.names().to_vec();
    let train_report = metric_report(&names, &train_ds.targets, &predict_dataset(&network, &train_ds)?)?;
    let validation_report = metric_report(&names, &val_ds.targets, &predict_dataset(&network, &val_ds)?)?;
    let diagnosis = match fit_diagnosis(&history, cfg.model.diagnosis_ratio) {
        Ok(d) => Some(d),
        Err(Error::EmptyHistory) => None,
        Err(e) => return Err(e),
    };

    ensure_dir(&cfg.output)?;
    write_metric_reports(
        &cfg.output.join("metrics.csv"),
        "scaled",
        &[("train", &train_report), ("validation", &validation_report)],
    )?;
    history.write_csv(&cfg.output.join("history.csv"))?;
    save_checkpoint(&model_path(cfg), &Checkpoint::new(network, scaler, tc.seed))?;
    Ok(TrainSummary {
        spec,
        epochs,
        history,
        train_report,
        validation_report,
        diagnosis,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct ForecastSummary {
    pub rows: usize,
    pub evaluation: Option<SparseEvaluation>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_forecast(cfg: &PipelineConfig) -> Result<ForecastSummary> {
    let path = model_path(cfg);
    if !path.exists() {
        return Err(Error::MissingPrerequisite(format!(
            "{} not found; run the `train` command first",
            path.display()
        )));
    }
    let ck = load_checkpoint(&path)?;
    let daily = load_daily(cfg)?;
    let scaler_names: Vec<&String> = ck.scaler.columns.iter().map(|c| &c.name).collect();
    if daily.names().iter().collect::<Vec<_>>() != scaler_names {
        return Err(Error::ColumnMismatch(format!(
            "daily.csv columns {:?} differ from the checkpoint's {:?}",
            daily.names(),
            scaler_names
        )));
    }
    let window = ck.network.spec.window;
    let rows = daily.dense_rows()?;
    if rows.len() < window {
        return Err(Error::TooShort {
            needed: window,
            have: rows.len(),
        });
    }
    let n = rows.len();
    let history: Vec<_> = daily.dates()[n - window..]
        .iter()
        .copied()
        .zip(rows[n - window..].iter().cloned())
        .collect();
    let last = *daily.dates().last().ok_or(Error::EmptyDataset)?;
    let label = format!("{} window {}", ck.network.spec.variant.name(), window);
    let forecast = rollout(
        &ck.network,
        &ck.scaler,
        daily.names(),
        &history,
        last + chrono::Days::new(1),
        cfg.forecast.horizon,
        &label,
    )?;
    let measured = cfg.forecast.measured.as_deref().map(load_csv).transpose()?;
    let evaluation = match &measured {
        Some(m) if !forecast.is_empty() => Some(evaluate_sparse(&forecast, m)?),
        _ => None,
    };
    let files = emit_report(
        &forecast,
        &daily,
        evaluation.as_ref(),
        measured.as_ref(),
        &forecast_dir(cfg),
    )?;
    Ok(ForecastSummary {
        rows: forecast.len(),
        evaluation,
        files,
    })
}
