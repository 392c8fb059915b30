//! MSE, MAE, Nash-Sutcliffe efficiency and a train/validation fit check.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::dims(format!(
            "observed has {} values, predicted has {}",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// `1 − Σ(y−ŷ)² / Σ(y−ȳ)²`.
pub fn nse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    if y.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            have: y.len(),
        });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let denom: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if denom == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let num: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - num / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scope: String,
    pub n: usize,
    pub mse: f64,
    pub mae: f64,
    /// `None` when the observed values have no variance.
    pub nse: Option<f64>,
}

/// Per-parameter rows plus an `overall` row computed on the concatenation
/// of all parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: MetricRow,
    pub per_parameter: Vec<MetricRow>,
}

fn row(scope: &str, y: &[f64], yhat: &[f64]) -> Result<MetricRow> {
    let nse = match nse(y, yhat) {
        Ok(v) => Some(v),
        Err(Error::ZeroVariance) | Err(Error::TooShort { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricRow {
        scope: scope.to_string(),
        n: y.len(),
        mse: mse(y, yhat)?,
        mae: mae(y, yhat)?,
        nse,
    })
}

/// `targets` and `predictions` are sample-major: one vector per sample.
pub fn metric_report(
    names: &[String],
    targets: &[Vec<f64>],
    predictions: &[Vec<f64>],
) -> Result<MetricReport> {
    if targets.len() != predictions.len() {
        return Err(Error::dims("targets and predictions differ in sample count"));
    }
    let width = names.len();
    if targets.iter().chain(predictions).any(|v| v.len() != width) {
        return Err(Error::dims(format!("expected {width} values per sample")));
    }
    let column = |data: &[Vec<f64>], c: usize| data.iter().map(|v| v[c]).collect::<Vec<_>>();
    let per_parameter = names
        .iter()
        .enumerate()
        .map(|(c, name)| row(name, &column(targets, c), &column(predictions, c)))
        .collect::<Result<Vec<_>>>()?;
    let all_y: Vec<f64> = (0..width).flat_map(|c| column(targets, c)).collect();
    let all_p: Vec<f64> = (0..width).flat_map(|c| column(predictions, c)).collect();
    Ok(MetricReport {
        overall: row("overall", &all_y, &all_p)?,
        per_parameter,
    })
}

/// Writes `split,scope,space,n,mse,mae,nse` rows for each named report.
pub fn write_metric_reports(path: &Path, space: &str, reports: &[(&str, &MetricReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["split", "scope", "space", "n", "mse", "mae", "nse"])?;
    for (split, report) in reports {
        for r in std::iter::once(&report.overall).chain(&report.per_parameter) {
            w.write_record([
                split.to_string(),
                r.scope.clone(),
                space.to_string(),
                r.n.to_string(),
                r.mse.to_string(),
                r.mae.to_string(),
                r.nse.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitDiagnosis {
    GoodFit,
    OverfitRisk,
    UnderfitRisk,
}

/// Compares validation and training loss at the best epoch.
pub fn diagnose(train_loss: f64, val_loss: f64, ratio_threshold: f64) -> FitDiagnosis {
    if val_loss < train_loss {
        FitDiagnosis::UnderfitRisk
    } else if val_loss / train_loss > ratio_threshold {
        FitDiagnosis::OverfitRisk
    } else {
        FitDiagnosis::GoodFit
    }
}

pub fn fit_diagnosis(history: &crate::nn::TrainHistory, ratio_threshold: f64) -> Result<FitDiagnosis> {
    let best = history.best_epoch.ok_or(Error::EmptyHistory)?;
    Ok(diagnose(
        history.train_loss[best],
        history.val_loss[best],
        ratio_threshold,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0]).unwrap(), 4.0 / 3.0);
        assert_eq!(mae(&[0.0, 0.0], &[3.0, -1.0]).unwrap(), 2.0);
        assert_eq!(nse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert_eq!(nse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(nse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(mse(&[], &[]), Err(Error::Empty)));
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch(_))));
        assert!(matches!(nse(&[2.0, 2.0], &[1.0, 2.0]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn diagnosis_cases() {
        assert_eq!(diagnose(0.01, 0.011, 1.5), FitDiagnosis::GoodFit);
        assert_eq!(diagnose(0.01, 0.05, 1.5), FitDiagnosis::OverfitRisk);
        assert_eq!(diagnose(0.02, 0.01, 1.5), FitDiagnosis::UnderfitRisk);
    }

    #[test]
    fn report_overall_is_concatenation() {
        let names = vec!["a".to_string(), "b".to_string()];
        let y = vec![vec![0.0, 1.0], vec![1.0, 3.0], vec![2.0, 2.0]];
        let p = vec![vec![0.5, 1.0], vec![1.0, 2.0], vec![2.0, 2.5]];
        let r = metric_report(&names, &y, &p).unwrap();
        let flat_y = [0.0, 1.0, 2.0, 1.0, 3.0, 2.0];
        let flat_p = [0.5, 1.0, 2.0, 1.0, 2.0, 2.5];
        assert_eq!(r.overall.nse, Some(nse(&flat_y, &flat_p).unwrap()));
        assert_eq!(r.overall.n, 6);
        assert_eq!(r.per_parameter[1].mae, mae(&[1.0, 3.0, 2.0], &[1.0, 2.0, 2.5]).unwrap());
    }

    proptest! {
        #[test]
        fn metric_properties(pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..50)) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let yh: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let m = mse(&y, &yh).unwrap();
            let a = mae(&y, &yh).unwrap();
            prop_assert!(m >= 0.0 && a >= 0.0);
            prop_assert!(a <= m.sqrt() + 1e-9);
            if let Ok(e) = nse(&y, &yh) {
                prop_assert!(e <= 1.0);
                let mean = y.iter().sum::<f64>() / y.len() as f64;
                let flat = vec![mean; y.len()];
                prop_assert!(nse(&y, &flat).unwrap().abs() < 1e-12);
            }
            let mut ry = y.clone();
            let mut ryh = yh.clone();
            ry.reverse();
            ryh.reverse();
            prop_assert!((mse(&ry, &ryh).unwrap() - m).abs() < 1e-9);
            prop_assert!((mae(&ry, &ryh).unwrap() - a).abs() < 1e-9);
        }

        #[test]
        fn equal_magnitude_residuals(y in proptest::collection::vec(-10.0f64..10.0, 1..30), d in 0.0f64..5.0) {
            let yh: Vec<f64> = y.iter().enumerate().map(|(i, v)| if i % 2 == 0 { v + d } else { v - d }).collect();
            let m = mse(&y, &yh).unwrap();
            let a = mae(&y, &yh).unwrap();
            prop_assert!((m - a * a).abs() < 1e-9);
        }
    }
}
