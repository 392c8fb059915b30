//! Synthetic weekly monitoring data with a known daily signal and planted
//! anomalies, for exercising the pipeline end to end.
//!
//! Each parameter is `level(t) + flush(t) + seasonal(t) + noise`. pH and ORP
//! drift from a start to an end level along a saturating curve; the
//! concentration-type parameters hold a constant level after an initial
//! flush that decays over the first weeks. A handful of weekly cells are
//! then replaced by spikes or dropouts.

use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{daily_grid, TimeSeriesFrame, CYCLE_DAYS, DATE_FORMAT, PARAMETERS};
use crate::seed::rng;

pub const WEEKLY_ROWS: usize = 83;
/// Offsets, in days after the last weekly row, of the measured follow-up rows.
pub const MEASURED_OFFSETS: [u64; 9] = [4, 11, 18, 25, 32, 39, 46, 53, 60];

pub fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 2, 9).expect("valid date")
}

struct Profile {
    start: f64,
    end: f64,
    /// Days for the level to cover ~63% of the drift.
    tau: f64,
    /// Extra value at day 0, decaying with `FLUSH_DAYS`.
    flush: f64,
    amplitude: f64,
    phase: f64,
    noise: f64,
}

const FLUSH_DAYS: f64 = 25.0;

const PROFILES: [Profile; 7] = [
    Profile { start: 3.3, end: 2.7, tau: 150.0, flush: 0.0, amplitude: 0.1, phase: 0.3, noise: 0.04 },
    Profile { start: 430.0, end: 540.0, tau: 150.0, flush: 0.0, amplitude: 20.0, phase: 1.1, noise: 8.0 },
    Profile { start: 3200.0, end: 3200.0, tau: 1.0, flush: 2500.0, amplitude: 350.0, phase: -0.4, noise: 120.0 },
    Profile { start: 2100.0, end: 2100.0, tau: 1.0, flush: 1600.0, amplitude: 230.0, phase: -0.4, noise: 80.0 },
    Profile { start: 1700.0, end: 1700.0, tau: 1.0, flush: 1400.0, amplitude: 200.0, phase: -0.2, noise: 70.0 },
    Profile { start: 70.0, end: 70.0, tau: 1.0, flush: 90.0, amplitude: 12.0, phase: 0.8, noise: 4.0 },
    Profile { start: 8.0, end: 8.0, tau: 1.0, flush: 9.0, amplitude: 1.2, phase: 2.0, noise: 0.4 },
];

fn clean_value(p: &Profile, t: f64) -> f64 {
    let level = p.end + (p.start - p.end) * (-t / p.tau).exp();
    let flush = p.flush * (-t / FLUSH_DAYS).exp();
    level + flush + p.amplitude * (2.0 * std::f64::consts::PI * t / CYCLE_DAYS + p.phase).sin()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedAnomaly {
    pub row: usize,
    pub date: NaiveDate,
    pub parameter: String,
    pub clean_value: f64,
    pub planted_value: f64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub weekly: TimeSeriesFrame,
    pub anomalies: Vec<PlantedAnomaly>,
    /// Noise-free signal on every day of the weekly span.
    pub daily_truth: TimeSeriesFrame,
    /// Noisy follow-up observations after the weekly span.
    pub measured: TimeSeriesFrame,
}

fn names() -> Vec<String> {
    PARAMETERS.iter().map(|s| s.to_string()).collect()
}

/// Generates the dataset. `n_anomalies` rows each receive one corrupted cell.
pub fn generate(seed: u64, n_anomalies: usize) -> Result<SynthData> {
    if n_anomalies > WEEKLY_ROWS {
        return Err(Error::config("synth.anomalies", format!("at most {WEEKLY_ROWS}")));
    }
    let mut r = rng(seed);
    let start = default_start();
    let noise: Vec<Normal<f64>> = PROFILES
        .iter()
        .map(|p| Normal::new(0.0, p.noise).map_err(|e| Error::Numeric(e.to_string())))
        .collect::<Result<_>>()?;
    let noisy = |t: f64, r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        PROFILES
            .iter()
            .zip(&noise)
            .map(|(p, n)| (clean_value(p, t) + n.sample(r)).max(0.01 * p.end))
            .collect()
    };

    let dates: Vec<NaiveDate> = (0..WEEKLY_ROWS as u64).map(|k| start + Days::new(7 * k)).collect();
    let mut rows: Vec<Vec<f64>> = dates
        .iter()
        .map(|d| noisy((*d - start).num_days() as f64, &mut r))
        .collect();

    let mut picks = rand::seq::index::sample(&mut r, WEEKLY_ROWS, n_anomalies).into_vec();
    picks.sort_unstable();
    let mut anomalies = Vec::with_capacity(n_anomalies);
    for row in picks {
        let c = r.random_range(0..PROFILES.len());
        let p = &PROFILES[c];
        let clean = rows[row][c];
        let spread = (p.start - p.end).abs() + 0.3 * p.end + 2.0 * p.amplitude;
        let planted = if c == 0 {
            // pH excursions go both ways but stay physical
            (clean + if r.random_bool(0.5) { 1.5 } else { -1.0 }).max(0.5)
        } else if r.random_bool(0.75) {
            clean + r.random_range(0.8..1.5) * spread
        } else {
            clean * r.random_range(0.05..0.2)
        };
        rows[row][c] = planted;
        anomalies.push(PlantedAnomaly {
            row,
            date: dates[row],
            parameter: PARAMETERS[c].to_string(),
            clean_value: clean,
            planted_value: planted,
        });
    }
    let weekly = TimeSeriesFrame::from_rows(dates.clone(), names(), &rows)?;

    let last = *dates.last().expect("weekly rows");
    let grid = daily_grid(start, last);
    let truth_rows: Vec<Vec<f64>> = grid
        .iter()
        .map(|d| {
            let t = (*d - start).num_days() as f64;
            PROFILES.iter().map(|p| clean_value(p, t)).collect()
        })
        .collect();
    let daily_truth = TimeSeriesFrame::from_rows(grid, names(), &truth_rows)?;

    let m_dates: Vec<NaiveDate> = MEASURED_OFFSETS.iter().map(|&o| last + Days::new(o)).collect();
    let m_rows: Vec<Vec<f64>> = m_dates
        .iter()
        .map(|d| noisy((*d - start).num_days() as f64, &mut r))
        .collect();
    let measured = TimeSeriesFrame::from_rows(m_dates, names(), &m_rows)?;

    Ok(SynthData {
        weekly,
        anomalies,
        daily_truth,
        measured,
    })
}

/// Writes the weekly table to `weekly_path` and `planted_anomalies.csv`,
/// `true_daily.csv` and `measured.csv` next to it.
pub fn write_synth(data: &SynthData, weekly_path: &Path) -> Result<Vec<PathBuf>> {
    let dir = match weekly_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let weekly = weekly_path.to_path_buf();
    data.weekly.write_csv(&weekly)?;

    let planted = dir.join("planted_anomalies.csv");
    let mut w = csv::Writer::from_path(&planted)?;
    w.write_record(["row", "date", "parameter", "clean_value", "planted_value"])?;
    for a in &data.anomalies {
        w.write_record([
            a.row.to_string(),
            a.date.format(DATE_FORMAT).to_string(),
            a.parameter.clone(),
            a.clean_value.to_string(),
            a.planted_value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&planted, e))?;

    let truth = dir.join("true_daily.csv");
    data.daily_truth.write_csv(&truth)?;
    let measured = dir.join("measured.csv");
    data.measured.write_csv(&measured)?;
    Ok(vec![weekly, planted, truth, measured])
}
