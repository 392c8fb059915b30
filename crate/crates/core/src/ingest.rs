//! Loading the monitoring CSV, cyclic date features, column scaling and
//! supervised windowing.

use std::f64::consts::PI;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::Matrix;

/// Canonical parameter columns, in file order.
pub const PARAMETERS: [&str; 7] = ["pH", "ORP", "Conductivity", "TDS", "SO4", "Fe", "Mn"];

/// Days per cycle for the annual date encoding.
pub const CYCLE_DAYS: f64 = 365.25;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Timestamped table of named series. Cells may be missing until the
/// interpolation stage fills them.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

impl TimeSeriesFrame {
    pub fn new(
        dates: Vec<NaiveDate>,
        names: Vec<String>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::ColumnMismatch(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if let Some(c) = columns.iter().position(|c| c.len() != dates.len()) {
            return Err(Error::ColumnMismatch(format!(
                "column {} has {} rows, expected {}",
                names[c],
                columns[c].len(),
                dates.len()
            )));
        }
        for pair in dates.windows(2) {
            if pair[1] == pair[0] {
                return Err(Error::DuplicateTimestamp(pair[1]));
            }
            if pair[1] < pair[0] {
                return Err(Error::ColumnMismatch(
                    "timestamps must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self {
            dates,
            names,
            columns,
        })
    }

    /// Builds a frame from complete rows.
    pub fn from_rows(dates: Vec<NaiveDate>, names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let width = names.len();
        if let Some(r) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::ColumnMismatch(format!(
                "row {r} has {} values, expected {width}",
                rows[r].len()
            )));
        }
        let columns = (0..width)
            .map(|c| rows.iter().map(|r| Some(r[c])).collect())
            .collect();
        Self::new(dates, names, columns)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, c: usize) -> &[Option<f64>] {
        &self.columns[c]
    }

    pub fn columns(&self) -> &[Vec<Option<f64>>] {
        &self.columns
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.columns[col][row]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        self.columns[col][row] = value;
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Row `r` if every cell is present.
    pub fn row(&self, r: usize) -> Option<Vec<f64>> {
        self.columns.iter().map(|c| c[r]).collect()
    }

    /// All rows; errors on the first missing cell.
    pub fn dense_rows(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.n_rows())
            .map(|r| {
                self.columns
                    .iter()
                    .enumerate()
                    .map(|(c, col)| {
                        col[r].ok_or_else(|| Error::MissingCell {
                            column: self.names[c].clone(),
                            row: r,
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Observed values of column `c`, skipping missing cells.
    pub fn observed(&self, c: usize) -> Vec<f64> {
        self.columns[c].iter().flatten().copied().collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for r in 0..self.n_rows() {
            let mut rec = vec![self.dates[r].format(DATE_FORMAT).to_string()];
            rec.extend(
                self.columns
                    .iter()
                    .map(|c| c[r].map(|v| v.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Reads a `date,pH,ORP,Conductivity,TDS,SO4,Fe,Mn` file. Rows are sorted
/// by date; empty cells become missing. Error rows are 1-based data rows.
pub fn load_csv(path: &Path) -> Result<TimeSeriesFrame> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = reader.headers()?.clone();
    if header.get(0) != Some("date") {
        return Err(Error::ColumnMismatch(
            "first header column must be `date`".into(),
        ));
    }
    let mut positions = Vec::with_capacity(PARAMETERS.len());
    for name in PARAMETERS {
        let pos = header.iter().position(|h| h == name).ok_or_else(|| {
            Error::ColumnMismatch(format!("missing column `{name}`"))
        })?;
        positions.push(pos);
    }
    if header.len() != PARAMETERS.len() + 1 {
        return Err(Error::ColumnMismatch(format!(
            "expected {} columns, found {}",
            PARAMETERS.len() + 1,
            header.len()
        )));
    }

    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let raw_date = record.get(0).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|e| Error::Parse {
            row,
            column: "date".into(),
            message: format!("`{raw_date}`: {e}"),
        })?;
        let mut values = Vec::with_capacity(PARAMETERS.len());
        for (name, &pos) in PARAMETERS.iter().zip(&positions) {
            let cell = record.get(pos).unwrap_or("");
            if cell.is_empty() {
                values.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: (*name).into(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: (*name).into(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            values.push(Some(v));
        }
        rows.push((date, values));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(pair) = rows.windows(2).find(|p| p[0].0 == p[1].0) {
        return Err(Error::DuplicateTimestamp(pair[0].0));
    }

    let dates = rows.iter().map(|(d, _)| *d).collect();
    let columns = (0..PARAMETERS.len())
        .map(|c| rows.iter().map(|(_, v)| v[c]).collect())
        .collect();
    TimeSeriesFrame::new(
        dates,
        PARAMETERS.iter().map(|s| s.to_string()).collect(),
        columns,
    )
}

/// `(sin θ, cos θ)` with `θ = 2π (day_of_year − 1) / 365.25`.
pub fn cyclic_encode_one(date: NaiveDate) -> (f64, f64) {
    let theta = 2.0 * PI * f64::from(date.ordinal() - 1) / CYCLE_DAYS;
    theta.sin_cos()
}

pub fn cyclic_encode(dates: &[NaiveDate]) -> Vec<(f64, f64)> {
    dates.iter().map(|&d| cyclic_encode_one(d)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformKind {
    MinMax,
    Log1pMinMax,
}

impl TransformKind {
    fn forward(self, x: f64) -> f64 {
        match self {
            TransformKind::MinMax => x,
            TransformKind::Log1pMinMax => x.ln_1p(),
        }
    }

    fn inverse(self, t: f64) -> f64 {
        match self {
            TransformKind::MinMax => t,
            TransformKind::Log1pMinMax => t.exp_m1(),
        }
    }
}

/// pH and ORP are scaled linearly; concentration-type columns get a log1p
/// step first since they are right-skewed.
pub fn default_transform(name: &str) -> TransformKind {
    match name {
        "pH" | "ORP" => TransformKind::MinMax,
        _ => TransformKind::Log1pMinMax,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub name: String,
    pub kind: TransformKind,
    /// Minimum in transformed space.
    pub min: f64,
    /// Maximum in transformed space.
    pub max: f64,
}

impl ColumnScaler {
    pub fn apply(&self, x: f64) -> f64 {
        let t = self.kind.forward(x);
        if self.max > self.min {
            (t - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }

    pub fn invert(&self, s: f64) -> f64 {
        self.kind.inverse(self.min + s * (self.max - self.min))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<ColumnScaler>,
}

impl ScalerParams {
    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.columns).map(|(&x, c)| c.apply(x)).collect()
    }

    pub fn invert_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.columns).map(|(&s, c)| c.invert(s)).collect()
    }

    fn check(&self, frame: &TimeSeriesFrame) -> Result<()> {
        let matches = frame.n_cols() == self.columns.len()
            && frame
                .names()
                .iter()
                .zip(&self.columns)
                .all(|(n, c)| *n == c.name);
        if matches {
            Ok(())
        } else {
            Err(Error::ColumnMismatch(format!(
                "scaler columns {:?} do not match frame columns {:?}",
                self.columns.iter().map(|c| &c.name).collect::<Vec<_>>(),
                frame.names()
            )))
        }
    }
}

/// Captures per-column min/max (after the column's transform) over the
/// observed cells. A column with no observations gets `min = max = 0`.
pub fn fit_scaler(frame: &TimeSeriesFrame, kinds: &[TransformKind]) -> Result<ScalerParams> {
    if kinds.len() != frame.n_cols() {
        return Err(Error::ColumnMismatch(format!(
            "{} transform kinds for {} columns",
            kinds.len(),
            frame.n_cols()
        )));
    }
    let mut columns = Vec::with_capacity(kinds.len());
    for (c, &kind) in kinds.iter().enumerate() {
        let name = frame.names()[c].clone();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in frame.column(c).iter().flatten() {
            if kind == TransformKind::Log1pMinMax && *v < 0.0 {
                return Err(Error::NegativeUnderLog { column: name, value: *v });
            }
            let t = kind.forward(*v);
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if !lo.is_finite() {
            lo = 0.0;
            hi = 0.0;
        }
        columns.push(ColumnScaler { name, kind, min: lo, max: hi });
    }
    Ok(ScalerParams { columns })
}

pub fn fit_default_scaler(frame: &TimeSeriesFrame) -> Result<ScalerParams> {
    let kinds: Vec<_> = frame.names().iter().map(|n| default_transform(n)).collect();
    fit_scaler(frame, &kinds)
}

fn map_frame(
    params: &ScalerParams,
    frame: &TimeSeriesFrame,
    f: impl Fn(&ColumnScaler, f64) -> f64,
) -> Result<TimeSeriesFrame> {
    params.check(frame)?;
    let columns = frame
        .columns()
        .iter()
        .zip(&params.columns)
        .map(|(col, sc)| col.iter().map(|v| v.map(|x| f(sc, x))).collect())
        .collect();
    TimeSeriesFrame::new(frame.dates().to_vec(), frame.names().to_vec(), columns)
}

pub fn apply_scaler(params: &ScalerParams, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
    map_frame(params, frame, ColumnScaler::apply)
}

pub fn invert_scaler(params: &ScalerParams, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
    map_frame(params, frame, ColumnScaler::invert)
}

/// Builds one model input block: each row is `[features.., sin, cos]`.
pub fn input_block(rows: &[Vec<f64>], covariates: &[(f64, f64)]) -> Result<Matrix> {
    if rows.len() != covariates.len() {
        return Err(Error::dims("input rows and covariates differ in length"));
    }
    let width = rows.first().map_or(0, |r| r.len() + 2);
    let mut data = Vec::with_capacity(rows.len() * width);
    for (row, &(s, c)) in rows.iter().zip(covariates) {
        data.extend_from_slice(row);
        data.push(s);
        data.push(c);
    }
    Matrix::new(rows.len(), width, data)
}

/// Supervised samples: the `window` rows before each target row, plus the
/// target date's cyclic encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub window: usize,
    pub n_features: usize,
    /// One `[window × (n_features + 2)]` block per sample.
    pub inputs: Vec<Matrix>,
    /// Cyclic encoding of each target date.
    pub covariates: Vec<(f64, f64)>,
    pub targets: Vec<Vec<f64>>,
    /// Frame row index of each target.
    pub target_rows: Vec<usize>,
    pub dates: Vec<NaiveDate>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> WindowedDataset {
        WindowedDataset {
            window: self.window,
            n_features: self.n_features,
            inputs: self.inputs[range.clone()].to_vec(),
            covariates: self.covariates[range.clone()].to_vec(),
            targets: self.targets[range.clone()].to_vec(),
            target_rows: self.target_rows[range].to_vec(),
            dates: self.dates.clone(),
        }
    }

    pub fn target_date(&self, k: usize) -> NaiveDate {
        self.dates[self.target_rows[k]]
    }
}

/// Sample `k` uses rows `[k, k + window)` as input and row `k + window` as
/// target. `window == 0` yields covariate-only samples.
pub fn make_windows(
    frame: &TimeSeriesFrame,
    window: usize,
    covariates: &[(f64, f64)],
) -> Result<WindowedDataset> {
    let n = frame.n_rows();
    if n < window + 1 {
        return Err(Error::TooShort {
            needed: window + 1,
            have: n,
        });
    }
    if covariates.len() != n {
        return Err(Error::dims(format!(
            "{} covariate rows for {n} frame rows",
            covariates.len()
        )));
    }
    let rows = frame.dense_rows()?;
    let n_features = frame.n_cols();
    let mut out = WindowedDataset {
        window,
        n_features,
        inputs: Vec::with_capacity(n - window),
        covariates: Vec::with_capacity(n - window),
        targets: Vec::with_capacity(n - window),
        target_rows: Vec::with_capacity(n - window),
        dates: frame.dates().to_vec(),
    };
    for k in 0..n - window {
        let target = k + window;
        let block = if window == 0 {
            Matrix::zeros(0, n_features + 2)
        } else {
            input_block(&rows[k..target], &covariates[k..target])?
        };
        out.inputs.push(block);
        out.covariates.push(covariates[target]);
        out.targets.push(rows[target].clone());
        out.target_rows.push(target);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    train_fraction: f64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64) -> Result<Self> {
        if train_fraction > 0.0 && train_fraction < 1.0 {
            Ok(Self { train_fraction })
        } else {
            Err(Error::InvalidSplit(train_fraction))
        }
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_fraction
    }

    /// `⌊fraction · n⌋`, tolerant of representation error just below an integer.
    pub fn train_len(&self, n: usize) -> usize {
        ((self.train_fraction * n as f64) + 1e-9).floor() as usize
    }
}

pub fn chrono_split(
    dataset: &WindowedDataset,
    spec: SplitSpec,
) -> Result<(WindowedDataset, WindowedDataset)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cut = spec.train_len(dataset.len());
    Ok((dataset.slice(0..cut), dataset.slice(cut..dataset.len())))
}

/// Every calendar day from `start` to `end`, inclusive.
pub fn daily_grid(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    start.iter_days().take_while(|d| *d <= end).collect()
}

#[cfg(test)]
fn distinct_count(values: &[f64]) -> usize {
    values
        .iter()
        .map(|v| v.to_bits())
        .collect::<std::collections::BTreeSet<_>>()
        .len()
}
