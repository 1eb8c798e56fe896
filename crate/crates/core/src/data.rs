//! Price ingestion, log returns, the train/test split, scaling and windowing.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of each return series used for training; the remainder is the test segment.
pub const TRAIN_NUMERATOR: usize = 7;
pub const TRAIN_DENOMINATOR: usize = 10;

/// Default length of a training window (and of the network input).
pub const DEFAULT_WINDOW: usize = 128;

/// `floor(0.7 * len)`, computed in integers.
pub fn split_index_for(len: usize) -> usize {
    len * TRAIN_NUMERATOR / TRAIN_DENOMINATOR
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub asset_id: String,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(asset_id: impl Into<String>, dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        let asset_id = asset_id.into();
        if dates.len() != closes.len() {
            return Err(Error::Shape(format!(
                "{asset_id}: {} dates but {} closes",
                dates.len(),
                closes.len()
            )));
        }
        if closes.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "{asset_id}: need at least 2 prices, got {}",
                closes.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Domain(format!(
                "{asset_id}: dates must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(c) = closes.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::Domain(format!("{asset_id}: non-positive price {c}")));
        }
        Ok(Self {
            asset_id,
            dates,
            closes,
        })
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

/// Daily log returns of one asset plus the index where its test segment begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub asset_id: String,
    /// Date on which each return is realized.
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub split_index: usize,
}

impl ReturnSeries {
    /// Builds a series with the standard 70/30 split.
    pub fn new(asset_id: impl Into<String>, dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        let split = split_index_for(returns.len());
        Self::with_split(asset_id, dates, returns, split)
    }

    /// Builds a series with an explicit split, e.g. to truncate the test
    /// segment while keeping the training segment fixed.
    pub fn with_split(
        asset_id: impl Into<String>,
        dates: Vec<NaiveDate>,
        returns: Vec<f64>,
        split_index: usize,
    ) -> Result<Self> {
        let asset_id = asset_id.into();
        if dates.len() != returns.len() {
            return Err(Error::Shape(format!(
                "{asset_id}: {} dates but {} returns",
                dates.len(),
                returns.len()
            )));
        }
        if returns.is_empty() {
            return Err(Error::InsufficientData(format!("{asset_id}: no returns")));
        }
        if split_index > returns.len() {
            return Err(Error::Shape(format!(
                "{asset_id}: split index {split_index} beyond length {}",
                returns.len()
            )));
        }
        Ok(Self {
            asset_id,
            dates,
            returns,
            split_index,
        })
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn train(&self) -> &[f64] {
        &self.returns[..self.split_index]
    }

    pub fn test(&self) -> &[f64] {
        &self.returns[self.split_index..]
    }

    pub fn test_dates(&self) -> &[NaiveDate] {
        &self.dates[self.split_index..]
    }
}

/// Standardization constants fitted on a training segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Scaler {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) || !mean.is_finite() {
            return Err(Error::Domain(format!(
                "scaler needs finite mean and positive std, got mean {mean}, std {std}"
            )));
        }
        Ok(Self { mean, std })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn apply_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }
}

/// Overlapping training windows and their one-step-ahead targets.
#[derive(Debug, Clone, Default)]
pub struct WindowSet {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    /// `(asset_id, start index)` of each window within its return series.
    pub origins: Vec<(String, usize)>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn window_len(&self) -> Option<usize> {
        self.inputs.first().map(Vec::len)
    }

    /// Concatenates several window sets, e.g. to pool assets for a joint model.
    pub fn pooled(sets: impl IntoIterator<Item = WindowSet>) -> WindowSet {
        let mut out = WindowSet::default();
        for set in sets {
            out.inputs.extend(set.inputs);
            out.targets.extend(set.targets);
            out.origins.extend(set.origins);
        }
        out
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a `date,close` CSV (header row required, extra columns ignored).
///
/// The asset id is the file stem. Rows are sorted by date; duplicate dates
/// are rejected.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let asset_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_prices(&asset_id, path, &text)
}

/// Parses price CSV text; `path` is only used in error messages.
pub fn parse_prices(asset_id: &str, path: &Path, text: &str) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| parse_err(path, 1, format!("missing `{name}` column")))
    };
    let date_col = column("date")?;
    let close_col = column("close")?;

    let mut rows: Vec<(NaiveDate, f64, u64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let date_field = record
            .get(date_col)
            .ok_or_else(|| parse_err(path, line, "missing date field"))?;
        let close_field = record
            .get(close_col)
            .ok_or_else(|| parse_err(path, line, "missing close field"))?;
        let date = NaiveDate::parse_from_str(date_field, "%Y-%m-%d")
            .map_err(|e| parse_err(path, line, format!("bad date `{date_field}`: {e}")))?;
        let close: f64 = close_field
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad close `{close_field}`")))?;
        if !(close.is_finite() && close > 0.0) {
            return Err(Error::Domain(format!(
                "{}: line {line}: non-positive price {close}",
                path.display()
            )));
        }
        rows.push((date, close, line));
    }

    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(parse_err(
            path,
            w[0].2.max(w[1].2),
            format!("duplicate date {}", w[0].0),
        ));
    }
    let (dates, closes) = rows.into_iter().map(|(d, c, _)| (d, c)).unzip();
    PriceSeries::new(asset_id, dates, closes)
}

/// Reads a manifest: one asset CSV path per line, `#` comments and blank
/// lines skipped. Relative paths resolve against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
        .collect())
}

/// `returns[t] = ln(closes[t+1] / closes[t])`, realized on `dates[t+1]`.
pub fn log_returns(prices: &PriceSeries) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: need at least 2 prices, got {}",
            prices.asset_id,
            prices.len()
        )));
    }
    let returns = prices.closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    ReturnSeries::new(prices.asset_id.clone(), prices.dates[1..].to_vec(), returns)
}

/// Mean and population standard deviation of the training segment.
pub fn fit_scaler(series: &ReturnSeries) -> Result<Scaler> {
    let train = series.train();
    if train.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: training segment has {} returns, need at least 2",
            series.asset_id,
            train.len()
        )));
    }
    let n = train.len() as f64;
    let mean = train.iter().sum::<f64>() / n;
    let var = train.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if !(var > 0.0) || train.iter().all(|&x| x == train[0]) {
        return Err(Error::Degenerate(format!(
            "{}: training returns have zero variance",
            series.asset_id
        )));
    }
    Scaler::new(mean, var.sqrt())
}

/// Cuts scaled training returns into windows of `window` steps at `stride`,
/// each paired with the same window shifted forward one step.
pub fn make_windows(
    series: &ReturnSeries,
    scaler: &Scaler,
    window: usize,
    stride: usize,
) -> Result<WindowSet> {
    if window == 0 || stride == 0 {
        return Err(Error::Domain("window and stride must be positive".into()));
    }
    let train = series.train();
    if train.len() < window + 1 {
        return Err(Error::InsufficientData(format!(
            "{}: training segment has {} returns, need at least {}",
            series.asset_id,
            train.len(),
            window + 1
        )));
    }
    let scaled = scaler.apply_all(train);
    let mut set = WindowSet::default();
    let mut start = 0;
    while start + window < scaled.len() {
        set.inputs.push(scaled[start..start + window].to_vec());
        set.targets.push(scaled[start + 1..start + window + 1].to_vec());
        set.origins.push((series.asset_id.clone(), start));
        start += stride;
    }
    Ok(set)
}
