//! Time-series assembly: lag selection by correlation, train-only min-max
//! normalization and time-ordered train/validation/test splits.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::math::sqrt;
use crate::{Error, Result};

/// Default upper bound on the lag searched by [`select_lag`] (one year of
/// monthly data).
pub const DEFAULT_MAX_LAG: usize = 12;

/// One named column of a time series, before denoising or lagging.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub name: String,
    pub values: Vec<f64>,
    /// Sortable time keys, strictly increasing.
    pub timestamps: Vec<i64>,
}

impl RawSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>, timestamps: Vec<i64>) -> Result<Self> {
        if values.len() != timestamps.len() {
            return Err(Error::LengthMismatch { expected: values.len(), found: timestamps.len() });
        }
        if values.len() < 2 {
            return Err(Error::InvalidInput("series needs at least 2 values".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!("non-finite value at row {i}")));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonIncreasingTimestamps { index: i + 1 });
        }
        Ok(Self { name: name.into(), values, timestamps })
    }

    /// Convenience constructor with timestamps `0..n`.
    pub fn from_values(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let ts = (0..values.len() as i64).collect();
        Self::new(name, values, ts)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Pearson correlation of two equal-length slices.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), found: b.len() });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(sab / sqrt(saa * sbb))
}

/// Lag in `0..=max_lag` maximizing `|corr(feature[t - lag], target[t])|`
/// over the overlapping window. Ties go to the smallest lag.
pub fn select_lag(feature: &RawSeries, target: &RawSeries, max_lag: usize) -> Result<usize> {
    let n = feature.len();
    if target.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: target.len() });
    }
    if max_lag + 2 >= n {
        return Err(Error::InvalidInput(alloc::format!(
            "max_lag {max_lag} must be below series length {n} minus 2"
        )));
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for lag in 0..=max_lag {
        let c = pearson(&feature.values[..n - lag], &target.values[lag..])?.abs();
        if c > best.1 {
            best = (lag, c);
        }
    }
    Ok(best.0)
}

/// Min/max recorded by [`normalize`] for the inverse transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    pub min: f64,
    pub max: f64,
}

impl NormParams {
    pub fn fit(column: &[f64]) -> Result<Self> {
        if column.is_empty() {
            return Err(Error::InvalidInput("empty column".into()));
        }
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in column".into()));
        }
        let min = column.iter().copied().fold(f64::INFINITY, f64::min);
        let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(Error::DegenerateColumn);
        }
        Ok(Self { min, max })
    }

    /// Values outside the fitted range map outside `[0, 1]`; no clipping.
    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn invert(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }
}

/// `x* = (x - min) / (max - min)`. Returns the normalized column with its
/// min and max.
pub fn normalize(column: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let p = NormParams::fit(column)?;
    Ok((column.iter().map(|&v| p.apply(v)).collect(), p.min, p.max))
}

pub fn denormalize(value: f64, min: f64, max: f64) -> Result<f64> {
    if !(max > min) {
        return Err(Error::InvalidInput(alloc::format!("denormalize needs max > min, got [{min}, {max}]")));
    }
    Ok(NormParams { min, max }.invert(value))
}

/// Where the training range ends and how much of its tail is held out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Exclusive end of the training range, as an index into the raw
    /// (un-lagged) series. Rows at or after it form the test range.
    pub train_end: usize,
    /// Fraction of the training rows, taken from its tail, used for validation.
    pub val_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_end: 0, val_fraction: 0.1 }
    }
}

/// Scored rows `[start, end)`. Models always run from row 0 so earlier rows
/// act as context for the hidden state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Lagged, normalized feature matrix aligned with its target.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    /// Row-major `rows x dim`, each column normalized with train statistics.
    pub features: Vec<f64>,
    pub rows: usize,
    pub dim: usize,
    pub feature_names: Vec<String>,
    /// Target in original units.
    pub target: Vec<f64>,
    /// Target normalized with train statistics.
    pub target_norm: Vec<f64>,
    pub target_params: NormParams,
    pub price_channel: usize,
    pub lag_table: Vec<usize>,
    pub norm_params: Vec<NormParams>,
    /// Time keys of the retained rows.
    pub timestamps: Vec<i64>,
    /// Raw index of row 0 (the largest lag).
    pub offset: usize,
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl TimeSeriesDataset {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Feature rows `0..end`, row-major.
    pub fn inputs(&self, end: usize) -> &[f64] {
        &self.features[..end * self.dim]
    }

    /// Training rows minus the validation tail.
    pub fn fit_window(&self) -> Window {
        Window::new(self.train.start, self.val.start)
    }

    pub fn val_window(&self) -> Window {
        Window::new(self.val.start, self.val.end)
    }

    pub fn test_window(&self) -> Window {
        Window::new(self.test.start, self.test.end)
    }

    pub fn targets(&self, normalized: bool) -> &[f64] {
        if normalized {
            &self.target_norm
        } else {
            &self.target
        }
    }
}

/// Shift each feature by its lag, drop the leading rows the largest lag
/// leaves undefined, and normalize with statistics from the training rows.
pub fn assemble(
    features: &[RawSeries],
    price_channel: usize,
    target: &RawSeries,
    lags: &[usize],
    split: &SplitSpec,
) -> Result<TimeSeriesDataset> {
    let dim = features.len();
    if dim == 0 {
        return Err(Error::InvalidInput("no feature columns".into()));
    }
    if price_channel >= dim {
        return Err(Error::InvalidInput(alloc::format!(
            "price channel {price_channel} out of range for {dim} features"
        )));
    }
    if lags.len() != dim {
        return Err(Error::LengthMismatch { expected: dim, found: lags.len() });
    }
    let n = target.len();
    for f in features {
        if f.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: f.len() });
        }
    }
    if !(split.val_fraction > 0.0 && split.val_fraction < 1.0) {
        return Err(Error::InvalidInput("val_fraction must lie in (0, 1)".into()));
    }
    if split.train_end > n {
        return Err(Error::InvalidInput(alloc::format!("train_end {} beyond series length {n}", split.train_end)));
    }
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if max_lag >= n {
        return Err(Error::InsufficientHistory { rows: 0, needed: 2 });
    }
    let rows = n - max_lag;
    let train_rows = split.train_end.saturating_sub(max_lag);
    let needed = (2 * max_lag).max(2);
    if train_rows < needed {
        return Err(Error::InsufficientHistory { rows: train_rows, needed });
    }
    let val_len = ((train_rows as f64 * split.val_fraction) as usize).clamp(1, train_rows - 1);
    let val_start = train_rows - val_len;

    let mut raw = Vec::with_capacity(rows * dim);
    for r in 0..rows {
        let t = r + max_lag;
        for (f, &lag) in features.iter().zip(lags) {
            raw.push(f.values[t - lag]);
        }
    }
    let mut norm_params = Vec::with_capacity(dim);
    for j in 0..dim {
        let col: Vec<f64> = (0..train_rows).map(|r| raw[r * dim + j]).collect();
        norm_params.push(NormParams::fit(&col)?);
    }
    let features_norm = raw
        .iter()
        .enumerate()
        .map(|(i, &v)| norm_params[i % dim].apply(v))
        .collect();

    let target_vals: Vec<f64> = target.values[max_lag..].to_vec();
    let target_params = NormParams::fit(&target_vals[..train_rows])?;
    let target_norm = target_vals.iter().map(|&v| target_params.apply(v)).collect();

    Ok(TimeSeriesDataset {
        features: features_norm,
        rows,
        dim,
        feature_names: features.iter().map(|f| f.name.clone()).collect(),
        target: target_vals,
        target_norm,
        target_params,
        price_channel,
        lag_table: lags.to_vec(),
        norm_params,
        timestamps: target.timestamps[max_lag..].to_vec(),
        offset: max_lag,
        train: 0..train_rows,
        val: val_start..train_rows,
        test: train_rows..rows,
    })
}
