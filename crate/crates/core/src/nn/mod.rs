//! Feed-forward, LSTM and encoder-decoder LSTM regressors with hand-written
//! backpropagation, Adam, and a deterministic training loop.
//!
//! Every variant maps one windowed sample to a non-negative prediction of
//! all features at the target date:
//!
//! * `Fnn`: the flattened window plus the target date's `(sin, cos)` feed a
//!   stack of tanh layers. With `window == 0` only the covariates are used.
//! * `Lstm`: the window rows are unrolled through one cell; the last hidden
//!   state feeds a dense head.
//! * `EncoderDecoder`: an encoder cell summarises the window into `(h, C)`,
//!   which seeds a decoder cell run for one step on the target covariates.
//!
//! With `residual` set (the default whenever there is a window), the last
//! window row's features are added to the output pre-activation, so the
//! layers learn the change from the latest observation rather than the
//! level itself.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod lstm;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::{ActivationKind, Matrix};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use dense::{dense_forward, DenseCache, DenseLayer};
pub use lstm::{
    lstm_backward, lstm_cell_forward, lstm_sequence_forward, LstmCellParams, LstmGrads, LstmState,
    StepCache,
};
pub use train::{default_epochs, evaluate_loss, predict_dataset, train, TrainConfig, TrainHistory};

/// Width of the per-row time covariates `(sin, cos)`.
pub const COVARIATE_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fnn,
    Lstm,
    #[serde(rename = "encdec")]
    EncoderDecoder,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Fnn => "fnn",
            Variant::Lstm => "lstm",
            Variant::EncoderDecoder => "encdec",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fnn" => Ok(Variant::Fnn),
            "lstm" => Ok(Variant::Lstm),
            "encdec" | "encoder-decoder" | "encoder_decoder" => Ok(Variant::EncoderDecoder),
            other => Err(Error::config("model.variant", format!("unknown variant `{other}`"))),
        }
    }
}

/// Architecture description. The output layer always has `n_features`
/// ReLU units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub variant: Variant,
    pub window: usize,
    pub n_features: usize,
    /// LSTM hidden size (encoder and decoder share it). Unused by `Fnn`.
    pub hidden: usize,
    /// Widths of the tanh layers before the output layer.
    pub dense: Vec<usize>,
    /// Adds the last window row's features to the output pre-activation, so
    /// the network predicts the change from the latest observation.
    #[serde(default)]
    pub residual: bool,
}

impl ModelSpec {
    pub fn new(variant: Variant, window: usize, n_features: usize, hidden: usize, dense: Vec<usize>) -> Result<Self> {
        let spec = Self {
            variant,
            window,
            n_features,
            hidden,
            dense,
            residual: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// FNN `[64, 32]`; LSTM 32 + `[16]`; encoder-decoder 32 + `[16]`.
    /// Residual whenever `window > 0`.
    pub fn default_for(variant: Variant, window: usize, n_features: usize) -> Result<Self> {
        let mut spec = match variant {
            Variant::Fnn => Self::new(variant, window, n_features, 0, vec![64, 32])?,
            Variant::Lstm | Variant::EncoderDecoder => {
                Self::new(variant, window, n_features, 32, vec![16])?
            }
        };
        spec.residual = window > 0;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(Error::VariantMismatch("model needs at least one feature".into()));
        }
        if self.dense.contains(&0) {
            return Err(Error::VariantMismatch("dense layer widths must be positive".into()));
        }
        if self.variant != Variant::Fnn {
            if self.window == 0 {
                return Err(Error::VariantMismatch(format!(
                    "{} needs a window of at least one step",
                    self.variant.name()
                )));
            }
            if self.hidden == 0 {
                return Err(Error::VariantMismatch("lstm hidden size must be positive".into()));
            }
        }
        Ok(())
    }

    /// Columns of one window row.
    pub fn row_width(&self) -> usize {
        self.n_features + COVARIATE_WIDTH
    }

    pub fn outputs(&self) -> usize {
        self.n_features
    }

    fn head_input(&self) -> usize {
        match self.variant {
            Variant::Fnn => self.window * self.row_width() + COVARIATE_WIDTH,
            Variant::Lstm | Variant::EncoderDecoder => self.hidden,
        }
    }
}

/// One model input: the `window × (n_features + 2)` history block and the
/// target date's `(sin, cos)`.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    pub window: &'a Matrix,
    pub covariates: (f64, f64),
}

/// Trained or initial weights for one [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: ModelSpec,
    pub encoder: Option<LstmCellParams>,
    pub decoder: Option<LstmCellParams>,
    pub layers: Vec<DenseLayer>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub encoder: Vec<StepCache>,
    pub decoder: Vec<StepCache>,
    pub dense: Vec<DenseCache>,
}

/// Bias of the ReLU output units at initialisation, so every unit starts in
/// its active region for targets scaled to `[0, 1]`.
const OUTPUT_BIAS_INIT: f64 = 0.5;

impl Network {
    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let (encoder, decoder) = match spec.variant {
            Variant::Fnn => (None, None),
            Variant::Lstm => (Some(LstmCellParams::init(spec.hidden, spec.row_width(), rng)), None),
            Variant::EncoderDecoder => (
                Some(LstmCellParams::init(spec.hidden, spec.row_width(), rng)),
                Some(LstmCellParams::init(spec.hidden, COVARIATE_WIDTH, rng)),
            ),
        };
        let mut layers = Vec::with_capacity(spec.dense.len() + 1);
        let mut width = spec.head_input();
        for &w in &spec.dense {
            layers.push(DenseLayer::init(w, width, ActivationKind::Tanh, rng));
            width = w;
        }
        let mut out = DenseLayer::init(spec.outputs(), width, ActivationKind::Relu, rng);
        out.bias.fill(OUTPUT_BIAS_INIT);
        layers.push(out);
        Ok(Self {
            spec: spec.clone(),
            encoder,
            decoder,
            layers,
        })
    }

    /// Checks that the stored weights have the shapes the spec implies.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let spec = &self.spec;
        let cell_ok = |cell: &Option<LstmCellParams>, input: usize| {
            cell.as_ref()
                .is_some_and(|c| c.hidden() == spec.hidden && c.input() == input)
        };
        let cells_ok = match spec.variant {
            Variant::Fnn => self.encoder.is_none() && self.decoder.is_none(),
            Variant::Lstm => cell_ok(&self.encoder, spec.row_width()) && self.decoder.is_none(),
            Variant::EncoderDecoder => {
                cell_ok(&self.encoder, spec.row_width()) && cell_ok(&self.decoder, COVARIATE_WIDTH)
            }
        };
        if !cells_ok {
            return Err(Error::VariantMismatch(format!(
                "recurrent cells do not match a {} model",
                spec.variant.name()
            )));
        }
        let widths: Vec<usize> = spec.dense.iter().copied().chain([spec.outputs()]).collect();
        if self.layers.len() != widths.len() {
            return Err(Error::VariantMismatch(format!(
                "{} dense layers stored, spec implies {}",
                self.layers.len(),
                widths.len()
            )));
        }
        let mut width = spec.head_input();
        for (layer, &w) in self.layers.iter().zip(&widths) {
            if layer.inputs() != width || layer.outputs() != w || layer.bias.len() != w {
                return Err(Error::VariantMismatch("dense layer shapes differ from spec".into()));
            }
            width = w;
        }
        if self.layers.last().map(|l| l.activation) != Some(ActivationKind::Relu) {
            return Err(Error::VariantMismatch("output layer must be relu".into()));
        }
        Ok(())
    }

    /// Same structure with every parameter set to zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_slice_mut(|s| s.fill(0.0));
        z
    }

    fn for_each_slice(&self, mut f: impl FnMut(&[f64])) {
        for cell in [&self.encoder, &self.decoder].into_iter().flatten() {
            cell.slices().into_iter().for_each(&mut f);
        }
        for layer in &self.layers {
            layer.slices().into_iter().for_each(&mut f);
        }
    }

    fn for_each_slice_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for cell in [&mut self.encoder, &mut self.decoder].into_iter().flatten() {
            cell.slices_mut().into_iter().for_each(&mut f);
        }
        for layer in &mut self.layers {
            layer.slices_mut().into_iter().for_each(&mut f);
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_slice(|s| n += s.len());
        n
    }

    /// Encoder, decoder, then dense layers; weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each_slice(|s| out.extend_from_slice(s));
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.param_count();
        if flat.len() != n {
            return Err(Error::dims(format!("{} values for {n} parameters", flat.len())));
        }
        if let Some(k) = flat.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: k });
        }
        let mut offset = 0;
        self.for_each_slice_mut(|s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        Ok(())
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        let (rows, cols) = input.window.shape();
        let spec = &self.spec;
        if rows != spec.window || (rows > 0 && cols != spec.row_width()) {
            return Err(Error::dims(format!(
                "input block {rows}×{cols}, model expects {}×{}",
                spec.window,
                spec.row_width()
            )));
        }
        Ok(())
    }

    fn cell<'a>(&self, cell: &'a Option<LstmCellParams>, which: &str) -> Result<&'a LstmCellParams> {
        cell.as_ref().ok_or_else(|| {
            Error::VariantMismatch(format!("{} model has no {which} cell", self.spec.variant.name()))
        })
    }

    pub fn forward_cached(&self, input: &ModelInput) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(input)?;
        let mut cache = ForwardCache {
            encoder: Vec::new(),
            decoder: Vec::new(),
            dense: Vec::with_capacity(self.layers.len()),
        };
        let (s, c) = input.covariates;
        let window = input.window;
        let rows = (0..window.rows()).map(|r| window.row(r));
        let mut x = match self.spec.variant {
            Variant::Fnn => {
                let mut v = window.as_slice().to_vec();
                v.extend([s, c]);
                v
            }
            Variant::Lstm => {
                let enc = self.cell(&self.encoder, "encoder")?;
                let (state, steps) = lstm_sequence_forward(enc, &LstmState::zeros(enc.hidden()), rows)?;
                cache.encoder = steps;
                state.h
            }
            Variant::EncoderDecoder => {
                let enc = self.cell(&self.encoder, "encoder")?;
                let dec = self.cell(&self.decoder, "decoder")?;
                let (state, steps) = lstm_sequence_forward(enc, &LstmState::zeros(enc.hidden()), rows)?;
                cache.encoder = steps;
                let (out, step) = lstm_cell_forward(dec, &state, &[s, c])?;
                cache.decoder.push(step);
                out.h
            }
        };
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let (mut y, mut dc) = layer.forward_cached(&x)?;
            if k == last && self.spec.residual && window.rows() > 0 {
                let skip = &window.row(window.rows() - 1)[..self.spec.n_features];
                dc.pre.iter_mut().zip(skip).for_each(|(p, s)| *p += s);
                y = dc.pre.iter().map(|&z| layer.activation.apply(z)).collect();
            }
            cache.dense.push(dc);
            x = y;
        }
        Ok((x, cache))
    }

    pub fn predict(&self, input: &ModelInput) -> Result<Vec<f64>> {
        self.forward_cached(input).map(|(y, _)| y)
    }

    /// Gradient of the loss w.r.t. every parameter, given ∂L/∂output.
    /// The result has this network's shape.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64]) -> Result<Network> {
        if cache.dense.len() != self.layers.len() {
            return Err(Error::MissingCache);
        }
        if d_output.len() != self.spec.outputs() {
            return Err(Error::dims("output gradient width differs from model output"));
        }
        let mut grads = self.zeros_like();
        let mut d = d_output.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            d = layer.backward(&cache.dense[k], &d, &mut grads.layers[k]);
        }
        match self.spec.variant {
            Variant::Fnn => {}
            Variant::Lstm => {
                let enc = self.cell(&self.encoder, "encoder")?;
                let g = backward_last_step(enc, &cache.encoder, d, vec![0.0; enc.hidden()])?;
                grads.encoder = Some(g.params);
            }
            Variant::EncoderDecoder => {
                let enc = self.cell(&self.encoder, "encoder")?;
                let dec = self.cell(&self.decoder, "decoder")?;
                let gd = backward_last_step(dec, &cache.decoder, d, vec![0.0; dec.hidden()])?;
                let ge = backward_last_step(enc, &cache.encoder, gd.h0, gd.c0)?;
                grads.decoder = Some(gd.params);
                grads.encoder = Some(ge.params);
            }
        }
        Ok(grads)
    }
}

/// BPTT where only the final step's hidden and cell state receive gradient.
fn backward_last_step(
    cell: &LstmCellParams,
    steps: &[StepCache],
    dh_last: Vec<f64>,
    dc_last: Vec<f64>,
) -> Result<LstmGrads> {
    let mut upstream = vec![vec![0.0; cell.hidden()]; steps.len()];
    if let Some(last) = upstream.last_mut() {
        *last = dh_last;
    }
    lstm_backward(cell, steps, &upstream, &dc_last)
}

pub fn model_forward(network: &Network, input: &ModelInput) -> Result<Vec<f64>> {
    network.predict(input)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mae,
    Mse,
}

impl LossKind {
    pub fn eval(self, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            LossKind::Mae => mae_loss(pred, target),
            LossKind::Mse => mse_loss(pred, target),
        }
    }
}

fn loss_check(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::dims(format!(
            "prediction has {} values, target has {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

/// Mean absolute error and its subgradient, with `sign(0) = 0`.
pub fn mae_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    loss_check(pred, target)?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss / n, grad))
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    loss_check(pred, target)?;
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

/// Largest relative disagreement `|a − f| / max(1e-8, |a| + |f|)` between
/// the analytic gradient and a central difference with step `h`, over every
/// parameter. Uses the smooth squared-error loss.
pub fn gradient_check(network: &Network, input: &ModelInput, target: &[f64], h: f64) -> Result<f64> {
    if !(1e-6..=1e-4).contains(&h) {
        return Err(Error::config("h", format!("finite-difference step {h} outside [1e-6, 1e-4]")));
    }
    let (pred, cache) = network.forward_cached(input)?;
    let (_, d_out) = mse_loss(&pred, target)?;
    let analytic = network.backward(&cache, &d_out)?.flat_params();

    let base = network.flat_params();
    let mut probe = network.clone();
    let mut theta = base.clone();
    let mut predict_at = |theta: &[f64]| -> Result<Vec<f64>> {
        probe.set_flat_params(theta)?;
        probe.predict(input)
    };
    let n = target.len() as f64;
    let mut worst = 0.0f64;
    for k in 0..base.len() {
        theta[k] = base[k] + h;
        let up = predict_at(&theta)?;
        theta[k] = base[k] - h;
        let down = predict_at(&theta)?;
        theta[k] = base[k];
        // L(θ+h) − L(θ−h) factored per output, avoiding cancellation between
        // two nearly equal loss totals
        let delta: f64 = up
            .iter()
            .zip(&down)
            .zip(target)
            .map(|((u, d), t)| (u - d) * (u + d - 2.0 * t))
            .sum::<f64>()
            / n;
        let numeric = delta / (2.0 * h);
        let rel = (analytic[k] - numeric).abs() / (analytic[k].abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
