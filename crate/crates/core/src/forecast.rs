//! Autoregressive rollout, evaluation against sparse measurements, and the
//! CSV/SVG report bundle.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{cyclic_encode_one, input_block, ScalerParams, TimeSeriesFrame, DATE_FORMAT};
use crate::mathcore::Matrix;
use crate::metrics::{mae, mse};
use crate::nn::{ModelInput, Network};

/// A one-step predictor in scaled space.
pub trait StepModel {
    fn window(&self) -> usize;
    fn predict_step(&self, input: &ModelInput) -> Result<Vec<f64>>;
}

impl StepModel for Network {
    fn window(&self) -> usize {
        self.spec.window
    }

    fn predict_step(&self, input: &ModelInput) -> Result<Vec<f64>> {
        self.predict(input)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// Original units, one row per date.
    pub predictions: Vec<Vec<f64>>,
    /// The model outputs before inverse scaling.
    pub scaled: Vec<Vec<f64>>,
    /// Short description of the model that produced the forecast.
    pub model: String,
}

impl ForecastResult {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Rolls a model forward `steps` days past the last history date.
///
/// `history` holds the most recent `window` observations in original units.
/// Each prediction is appended (in scaled space) to the sliding window that
/// forms the next step's input; the target date's cyclic encoding is passed
/// as the covariate. `start` is the first forecast date, used only when the
/// history is empty.
pub fn rollout(
    model: &impl StepModel,
    scaler: &ScalerParams,
    names: &[String],
    history: &[(NaiveDate, Vec<f64>)],
    start: NaiveDate,
    steps: usize,
    label: &str,
) -> Result<ForecastResult> {
    let window = model.window();
    if history.len() != window {
        return Err(Error::WindowMismatch {
            expected: window,
            got: history.len(),
        });
    }
    if names.len() != scaler.columns.len() {
        return Err(Error::ColumnMismatch(format!(
            "{} names for {} scaled columns",
            names.len(),
            scaler.columns.len()
        )));
    }
    if let Some((d, row)) = history.iter().find(|(_, r)| r.len() != names.len()) {
        return Err(Error::dims(format!("history row {d} has {} values", row.len())));
    }
    let first = match history.last() {
        Some((d, _)) => *d + Days::new(1),
        None => start,
    };

    let mut rows: Vec<Vec<f64>> = history.iter().map(|(_, r)| scaler.apply_row(r)).collect();
    let mut covs: Vec<(f64, f64)> = history.iter().map(|(d, _)| cyclic_encode_one(*d)).collect();
    let width = names.len() + 2;
    let mut out = ForecastResult {
        names: names.to_vec(),
        dates: Vec::with_capacity(steps),
        predictions: Vec::with_capacity(steps),
        scaled: Vec::with_capacity(steps),
        model: label.to_string(),
    };
    for h in 0..steps {
        let date = first + Days::new(h as u64);
        let target_cov = cyclic_encode_one(date);
        let block = if window == 0 {
            Matrix::zeros(0, width)
        } else {
            input_block(&rows, &covs)?
        };
        let pred = model.predict_step(&ModelInput {
            window: &block,
            covariates: target_cov,
        })?;
        if pred.len() != names.len() {
            return Err(Error::dims(format!("model returned {} values", pred.len())));
        }
        if window > 0 {
            rows.remove(0);
            covs.remove(0);
            rows.push(pred.clone());
            covs.push(target_cov);
        }
        out.dates.push(date);
        out.predictions.push(scaler.invert_row(&pred));
        out.scaled.push(pred);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMetric {
    pub parameter: String,
    pub n: usize,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseEvaluation {
    /// Measured dates that fall on the forecast grid.
    pub matched_dates: Vec<NaiveDate>,
    pub per_parameter: Vec<SparseMetric>,
}

/// Per-parameter MSE and MAE in original units, over the measured dates
/// that coincide exactly with forecast dates. Missing measured cells are
/// skipped for that parameter only.
pub fn evaluate_sparse(forecast: &ForecastResult, measured: &TimeSeriesFrame) -> Result<SparseEvaluation> {
    let mut matched = Vec::new();
    for (r, d) in measured.dates().iter().enumerate() {
        if let Ok(k) = forecast.dates.binary_search(d) {
            matched.push((r, k));
        }
    }
    if matched.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mut per_parameter = Vec::with_capacity(forecast.names.len());
    for (c, name) in forecast.names.iter().enumerate() {
        let m_col = measured
            .names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::ColumnMismatch(format!("measured file lacks column {name}")))?;
        let (y, yhat): (Vec<f64>, Vec<f64>) = matched
            .iter()
            .filter_map(|&(r, k)| measured.value(r, m_col).map(|v| (v, forecast.predictions[k][c])))
            .unzip();
        let (mse_v, mae_v) = if y.is_empty() {
            (None, None)
        } else {
            (Some(mse(&y, &yhat)?), Some(mae(&y, &yhat)?))
        };
        per_parameter.push(SparseMetric {
            parameter: name.clone(),
            n: y.len(),
            mse: mse_v,
            mae: mae_v,
        });
    }
    Ok(SparseEvaluation {
        matched_dates: matched.iter().map(|&(r, _)| measured.dates()[r]).collect(),
        per_parameter,
    })
}

/// Days of history drawn before the forecast in each plot.
pub const PLOT_HISTORY_DAYS: usize = 120;
const SVG_W: f64 = 800.0;
const SVG_H: f64 = 300.0;

/// Writes `forecast.csv`, `metrics.csv` and, for a non-empty forecast, one
/// `forecast_<parameter>.svg` per parameter. Returns the written paths.
pub fn emit_report(
    forecast: &ForecastResult,
    history: &TimeSeriesFrame,
    evaluation: Option<&SparseEvaluation>,
    measured: Option<&TimeSeriesFrame>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let path = out_dir.join("forecast.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["date".to_string()];
    header.extend(forecast.names.iter().cloned());
    w.write_record(&header)?;
    for (d, row) in forecast.dates.iter().zip(&forecast.predictions) {
        let mut rec = vec![d.format(DATE_FORMAT).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = out_dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["parameter", "mse", "mae"])?;
    for m in evaluation.map(|e| e.per_parameter.as_slice()).unwrap_or_default() {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([m.parameter.clone(), fmt(m.mse), fmt(m.mae)])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    if forecast.is_empty() {
        return Ok(written);
    }
    for (c, name) in forecast.names.iter().enumerate() {
        let hist: Vec<(NaiveDate, f64)> = match history.names().iter().position(|n| n == name) {
            Some(hc) => {
                let all: Vec<(NaiveDate, f64)> = history
                    .dates()
                    .iter()
                    .enumerate()
                    .filter_map(|(r, d)| history.value(r, hc).map(|v| (*d, v)))
                    .collect();
                all[all.len().saturating_sub(PLOT_HISTORY_DAYS)..].to_vec()
            }
            None => Vec::new(),
        };
        let fc: Vec<(NaiveDate, f64)> = forecast
            .dates
            .iter()
            .zip(&forecast.predictions)
            .map(|(d, row)| (*d, row[c]))
            .collect();
        let marks: Vec<(NaiveDate, f64)> = match measured.and_then(|m| m.names().iter().position(|n| n == name).map(|mc| (m, mc))) {
            Some((m, mc)) => m
                .dates()
                .iter()
                .enumerate()
                .filter_map(|(r, d)| m.value(r, mc).map(|v| (*d, v)))
                .collect(),
            None => Vec::new(),
        };
        let svg = render_svg(name, &hist, &fc, &marks);
        let path = out_dir.join(format!("forecast_{}.svg", file_stem(name)));
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|ch| if ch.is_ascii_alphanumeric() { ch } else { '_' })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal line chart: history in grey, forecast in blue, measurements as
/// red circles. Coordinates are printed with two decimals.
fn render_svg(
    name: &str,
    history: &[(NaiveDate, f64)],
    forecast: &[(NaiveDate, f64)],
    measured: &[(NaiveDate, f64)],
) -> String {
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 40.0);
    let all = history.iter().chain(forecast).chain(measured);
    let x0 = all.clone().map(|p| p.0).min().expect("forecast is non-empty");
    let x1 = all.clone().map(|p| p.0).max().expect("forecast is non-empty");
    let mut y0 = all.clone().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut y1 = all.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if y1 - y0 < 1e-12 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let span_days = ((x1 - x0).num_days().max(1)) as f64;
    let px = |d: NaiveDate| left + (d - x0).num_days() as f64 / span_days * (SVG_W - left - right);
    let py = |v: f64| top + (y1 - v) / (y1 - y0) * (SVG_H - top - bottom);
    let line = |pts: &[(NaiveDate, f64)], color: &str| -> String {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(d, v)| format!("{:.2},{:.2}", px(d), py(v)))
            .collect();
        format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        )
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" viewBox=\"0 0 {SVG_W} {SVG_H}\">"
    );
    let _ = writeln!(s, "  <rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "  <rect x=\"{left}\" y=\"{top}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>",
        SVG_W - left - right,
        SVG_H - top - bottom
    );
    let _ = writeln!(
        s,
        "  <text x=\"{left}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        escape(name)
    );
    for (v, y) in [(y1, top), (y0, SVG_H - bottom)] {
        let _ = writeln!(
            s,
            "  <text x=\"{}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            left - 5.0,
            y + 4.0,
            format_tick(v)
        );
    }
    for (d, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(
            s,
            "  <text x=\"{:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"{anchor}\">{}</text>",
            px(d),
            SVG_H - bottom + 16.0,
            d.format(DATE_FORMAT)
        );
    }
    if !history.is_empty() {
        s.push_str(&line(history, "#888888"));
    }
    if let Some(&(d, _)) = forecast.first() {
        let x = px(d);
        let _ = writeln!(
            s,
            "  <line x1=\"{x:.2}\" y1=\"{top}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#cccccc\" stroke-dasharray=\"4 3\"/>",
            SVG_H - bottom
        );
    }
    s.push_str(&line(forecast, "#1f77b4"));
    for &(d, v) in measured {
        let _ = writeln!(
            s,
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"#d62728\"/>",
            px(d),
            py(v)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{fit_default_scaler, ColumnScaler, TransformKind};
    use crate::nn::{ModelSpec, Variant};
    use crate::seed::rng;

    /// Predicts the column-wise mean of the window.
    struct WindowMean(usize);

    impl StepModel for WindowMean {
        fn window(&self) -> usize {
            self.0
        }

        fn predict_step(&self, input: &ModelInput) -> Result<Vec<f64>> {
            let w = input.window;
            Ok((0..w.cols() - 2)
                .map(|c| w.col(c).iter().sum::<f64>() / w.rows() as f64)
                .collect())
        }
    }

    fn names() -> Vec<String> {
        ["a", "b", "c"].iter().map(|s| s.to_string()).collect()
    }

    fn identity_scaler(n: usize) -> ScalerParams {
        ScalerParams {
            columns: (0..n)
                .map(|c| ColumnScaler {
                    name: ["a", "b", "c"][c].to_string(),
                    kind: TransformKind::MinMax,
                    min: 0.0,
                    max: 1.0,
                })
                .collect(),
        }
    }

    fn day(k: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 9, 1).unwrap() + Days::new(k)
    }

    fn history(window: usize, row: Vec<f64>) -> Vec<(NaiveDate, Vec<f64>)> {
        (0..window as u64).map(|k| (day(k), row.clone())).collect()
    }

    #[test]
    fn constant_history_is_a_fixed_point() {
        let h = history(5, vec![2.5, -1.0, 7.0]);
        let f = rollout(&WindowMean(5), &identity_scaler(3), &names(), &h, day(99), 30, "mean").unwrap();
        assert_eq!(f.len(), 30);
        assert_eq!(f.dates[0], day(5));
        assert!(f.predictions.iter().all(|r| r == &vec![2.5, -1.0, 7.0]));
    }

    #[test]
    fn zero_steps_and_window_guard() {
        let h = history(3, vec![1.0, 1.0, 1.0]);
        let f = rollout(&WindowMean(3), &identity_scaler(3), &names(), &h, day(0), 0, "m").unwrap();
        assert!(f.is_empty());
        assert!(matches!(
            rollout(&WindowMean(4), &identity_scaler(3), &names(), &h, day(0), 5, "m"),
            Err(Error::WindowMismatch { expected: 4, got: 3 })
        ));
    }

    fn trained_like_network() -> (Network, ScalerParams, Vec<(NaiveDate, Vec<f64>)>, Vec<String>) {
        let spec = ModelSpec::default_for(Variant::EncoderDecoder, 7, 7).unwrap();
        let net = Network::init(&spec, &mut rng(8)).unwrap();
        let names: Vec<String> = crate::ingest::PARAMETERS.iter().map(|s| s.to_string()).collect();
        let mut r = rng(9);
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..7).map(|_| r.random_range(1.0..50.0)).collect()).collect();
        let dates: Vec<NaiveDate> = (0..20).map(day).collect();
        let frame = TimeSeriesFrame::from_rows(dates.clone(), names.clone(), &rows).unwrap();
        let scaler = fit_default_scaler(&frame).unwrap();
        let hist = dates[13..].iter().copied().zip(rows[13..].iter().cloned()).collect();
        (net, scaler, hist, names)
    }

    #[test]
    fn single_step_equals_model_forward() {
        let (net, scaler, hist, names) = trained_like_network();
        let f = rollout(&net, &scaler, &names, &hist, day(0), 1, "encdec").unwrap();
        let rows: Vec<Vec<f64>> = hist.iter().map(|(_, r)| scaler.apply_row(r)).collect();
        let covs: Vec<(f64, f64)> = hist.iter().map(|(d, _)| cyclic_encode_one(*d)).collect();
        let block = input_block(&rows, &covs).unwrap();
        let y = net
            .predict(&ModelInput { window: &block, covariates: cyclic_encode_one(day(20)) })
            .unwrap();
        assert_eq!(f.scaled[0], y);
        assert_eq!(f.predictions[0], scaler.invert_row(&y));
    }

    #[test]
    fn rollout_consumes_its_own_outputs() {
        let (net, scaler, hist, names) = trained_like_network();
        let f = rollout(&net, &scaler, &names, &hist, day(0), 12, "encdec").unwrap();
        let mut rows: Vec<Vec<f64>> = hist.iter().map(|(_, r)| scaler.apply_row(r)).collect();
        let mut dates: Vec<NaiveDate> = hist.iter().map(|(d, _)| *d).collect();
        for h in 0..12 {
            rows.extend(f.scaled[..h].iter().cloned());
            dates.extend(f.dates[..h].iter().copied());
            let n = rows.len();
            let covs: Vec<(f64, f64)> = dates[n - 7..].iter().map(|d| cyclic_encode_one(*d)).collect();
            let block = input_block(&rows[n - 7..], &covs).unwrap();
            let y = net
                .predict(&ModelInput { window: &block, covariates: cyclic_encode_one(f.dates[h]) })
                .unwrap();
            assert_eq!(y, f.scaled[h]);
            rows.truncate(7);
            dates.truncate(7);
            let rescaled = scaler.apply_row(&f.predictions[h]);
            for (a, b) in rescaled.iter().zip(&f.scaled[h]) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!(f.scaled[h].iter().all(|v| *v >= 0.0));
        }
    }

    fn forecast_of(values: &[Vec<f64>]) -> ForecastResult {
        ForecastResult {
            names: names(),
            dates: (0..values.len() as u64).map(day).collect(),
            predictions: values.to_vec(),
            scaled: values.to_vec(),
            model: "fixed".into(),
        }
    }

    #[test]
    fn sparse_evaluation_cases() {
        let values: Vec<Vec<f64>> = (0..60).map(|k| vec![k as f64, 1.0, 2.0]).collect();
        let f = forecast_of(&values);
        let picks: Vec<u64> = (0..9).map(|k| 3 + 7 * k).collect();
        let m_rows: Vec<Vec<f64>> = picks.iter().map(|&k| values[k as usize].clone()).collect();
        let m = TimeSeriesFrame::from_rows(picks.iter().map(|&k| day(k)).collect(), names(), &m_rows).unwrap();
        let e = evaluate_sparse(&f, &m).unwrap();
        assert_eq!(e.matched_dates.len(), 9);
        assert!(e.per_parameter.iter().all(|p| p.n == 9 && p.mse == Some(0.0) && p.mae == Some(0.0)));

        let before = TimeSeriesFrame::from_rows(vec![day(0) - Days::new(3)], names(), &[vec![0.0; 3]]).unwrap();
        assert!(matches!(evaluate_sparse(&f, &before), Err(Error::NoOverlap)));
    }

    #[test]
    fn dense_measurements_match_full_metrics() {
        let values: Vec<Vec<f64>> = (0..20).map(|k| vec![k as f64, (k as f64).sin(), 3.0]).collect();
        let f = forecast_of(&values);
        let truth: Vec<Vec<f64>> = (0..20).map(|k| vec![k as f64 + 0.5, (k as f64).cos(), 3.0 - k as f64]).collect();
        let m = TimeSeriesFrame::from_rows(f.dates.clone(), names(), &truth).unwrap();
        let e = evaluate_sparse(&f, &m).unwrap();
        for c in 0..3 {
            let y: Vec<f64> = truth.iter().map(|r| r[c]).collect();
            let p: Vec<f64> = values.iter().map(|r| r[c]).collect();
            assert_eq!(e.per_parameter[c].mse, Some(mse(&y, &p).unwrap()));
            assert_eq!(e.per_parameter[c].mae, Some(mae(&y, &p).unwrap()));
        }
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let hist = TimeSeriesFrame::from_rows(
            (0..10).map(|k| day(k) - Days::new(10)).collect(),
            names(),
            &(0..10).map(|k| vec![k as f64, 2.0, 1.0]).collect::<Vec<_>>(),
        )
        .unwrap();
        let empty = forecast_of(&[]);
        let files = emit_report(&empty, &hist, None, None, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let text = std::fs::read_to_string(dir.path().join("forecast.csv")).unwrap();
        assert_eq!(text, "date,a,b,c\n");

        let values: Vec<Vec<f64>> = (0..60).map(|k| vec![k as f64, 1.0, 2.0]).collect();
        let f = forecast_of(&values);
        let m = TimeSeriesFrame::from_rows(vec![day(4), day(11)], names(), &[vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]]).unwrap();
        let e = evaluate_sparse(&f, &m).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = emit_report(&f, &hist, Some(&e), Some(&m), a.path()).unwrap();
        let fb = emit_report(&f, &hist, Some(&e), Some(&m), b.path()).unwrap();
        assert_eq!(fa.len(), 2 + 3);
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let forecast_csv = std::fs::read_to_string(a.path().join("forecast.csv")).unwrap();
        assert_eq!(forecast_csv.lines().count(), 61);
        let svg = std::fs::read_to_string(a.path().join("forecast_a.svg")).unwrap();
        assert!(svg.contains("viewBox=\"0 0 800 300\""));
        assert_eq!(svg.matches("<circle").count(), 2);
        let metrics = std::fs::read_to_string(a.path().join("metrics.csv")).unwrap();
        assert!(metrics.starts_with("parameter,mse,mae\n"));
        assert_eq!(metrics.lines().count(), 4);
    }
}
