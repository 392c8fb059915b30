//! JSON pipeline configuration.
//!
//! Unknown keys are rejected. Relative paths are resolved against the
//! directory containing the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LossKind, Variant};
use crate::treereg::InterpolationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Weekly monitoring CSV. `synth` writes here; the other commands read it.
    pub input: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub anomaly: AnomalyConfig,
    #[serde(default)]
    pub interpolation: InterpolationConfig,
    #[serde(default)]
    pub model: ModelConfig,
    /// Chronological train fraction for the neural models.
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub synth: SynthConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_split() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalyConfig {
    pub contamination: f64,
    pub trees: usize,
    pub subsample: usize,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            contamination: 0.2,
            trees: 100,
            subsample: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub window: usize,
    /// Defaults to the preset for the variant and window.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub loss: LossKind,
    /// LSTM hidden size; defaults to 32.
    pub hidden: Option<usize>,
    /// Dense widths before the output layer; defaults per variant.
    pub dense: Option<Vec<usize>>,
    pub patience: Option<usize>,
    /// Predict the change from the last window row; defaults to on when
    /// the window is non-empty.
    pub residual: Option<bool>,
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// Validation/train loss ratio above which a fit is flagged as overfit.
    pub diagnosis_ratio: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::EncoderDecoder,
            window: 7,
            epochs: None,
            batch_size: 4,
            loss: LossKind::Mae,
            hidden: None,
            dense: None,
            patience: None,
            residual: None,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            diagnosis_ratio: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastConfig {
    pub horizon: usize,
    /// Optional CSV of measured values to evaluate the forecast against.
    pub measured: Option<PathBuf>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizon: 60,
            measured: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Number of weekly rows that receive a corrupted cell.
    pub anomalies: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { anomalies: 8 }
    }
}

fn in_range(key: &str, ok: bool, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, message))
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, validates and resolves relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::config("--config", format!("{} does not exist", path.display()))
            } else {
                Error::io(path, e)
            }
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input);
        fix(&mut self.output);
        if let Some(m) = self.forecast.measured.as_mut() {
            fix(m);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.anomaly;
        in_range(
            "anomaly.contamination",
            a.contamination > 0.0 && a.contamination <= 0.5,
            "must be in (0, 0.5]",
        )?;
        in_range("anomaly.trees", (1..=10_000).contains(&a.trees), "must be in [1, 10000]")?;
        in_range("anomaly.subsample", (2..=100_000).contains(&a.subsample), "must be in [2, 100000]")?;

        let i = &self.interpolation;
        in_range("interpolation.split", i.split > 0.0 && i.split < 1.0, "must be in (0, 1)")?;
        in_range("interpolation.trees", (1..=5_000).contains(&i.trees), "must be in [1, 5000]")?;
        in_range("interpolation.stages", (1..=5_000).contains(&i.stages), "must be in [1, 5000]")?;
        in_range(
            "interpolation.learning_rate",
            i.learning_rate > 0.0 && i.learning_rate <= 1.0,
            "must be in (0, 1]",
        )?;
        in_range("interpolation.min_leaf", i.min_leaf >= 1, "must be at least 1")?;

        let m = &self.model;
        in_range("model.window", m.window <= 365, "must be at most 365")?;
        in_range(
            "model.window",
            m.window >= 1 || m.variant == Variant::Fnn,
            "must be at least 1 for recurrent variants",
        )?;
        if let Some(e) = m.epochs {
            in_range("model.epochs", e <= 100_000, "must be at most 100000")?;
        }
        in_range("model.batch_size", (1..=4096).contains(&m.batch_size), "must be in [1, 4096]")?;
        if let Some(h) = m.hidden {
            in_range("model.hidden", (1..=1024).contains(&h), "must be in [1, 1024]")?;
        }
        if let Some(d) = &m.dense {
            in_range("model.dense", d.iter().all(|w| (1..=4096).contains(w)), "widths must be in [1, 4096]")?;
        }
        if let Some(p) = m.patience {
            in_range("model.patience", p >= 1, "must be at least 1")?;
        }
        in_range(
            "model.learning_rate",
            m.learning_rate > 0.0 && m.learning_rate <= 1.0,
            "must be in (0, 1]",
        )?;
        in_range("model.clip_norm", m.clip_norm > 0.0 && m.clip_norm.is_finite(), "must be positive")?;
        in_range("model.diagnosis_ratio", m.diagnosis_ratio >= 1.0 && m.diagnosis_ratio.is_finite(), "must be at least 1")?;

        in_range("split", self.split > 0.0 && self.split < 1.0, "must be in (0, 1)")?;
        in_range("forecast.horizon", self.forecast.horizon <= 3650, "must be at most 3650")?;
        in_range(
            "synth.anomalies",
            self.synth.anomalies <= crate::synth::WEEKLY_ROWS,
            "must not exceed the number of weekly rows",
        )?;
        Ok(())
    }
}
