//! Panel ingestion, chronological splitting, z-scoring and sliding windows.

use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeDelta};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multivariate time series: `values` is N timesteps × F features.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Array2<f64>,
    pub feature_names: Vec<String>,
}

const DATETIME_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
    "%Y/%m/%d %H:%M:%S",
    "%Y/%m/%d %H:%M",
];

pub fn parse_datetime(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    for fmt in DATETIME_FORMATS {
        if let Ok(ts) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(ts);
        }
    }
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.naive_utc());
    }
    for fmt in ["%Y-%m-%d", "%Y/%m/%d"] {
        if let Ok(d) = NaiveDate::parse_from_str(raw, fmt) {
            return d.and_hms_opt(0, 0, 0);
        }
    }
    None
}

impl Panel {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        values: Array2<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if timestamps.len() != values.nrows() {
            return Err(Error::Ingest(format!(
                "{} timestamps for {} rows",
                timestamps.len(),
                values.nrows()
            )));
        }
        if feature_names.len() != values.ncols() {
            return Err(Error::Ingest(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                values.ncols()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Ingest(format!(
                "timestamps not strictly increasing at row {}",
                i + 1
            )));
        }
        if let Some(((r, c), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Ingest(format!(
                "non-finite value at row {r}, column {c}"
            )));
        }
        Ok(Self {
            timestamps,
            values,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Sampling interval, when every consecutive gap is identical.
    pub fn granularity(&self) -> Option<TimeDelta> {
        let first = *self.timestamps.get(1)? - self.timestamps[0];
        self.timestamps
            .windows(2)
            .all(|w| w[1] - w[0] == first)
            .then_some(first)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Panel {
        Panel {
            timestamps: self.timestamps[start..end].to_vec(),
            values: self.values.slice(s![start..end, ..]).to_owned(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn concat(parts: &[&Panel]) -> Result<Panel> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Ingest("nothing to concatenate".into()))?;
        let views: Vec<_> = parts.iter().map(|p| p.values.view()).collect();
        let values = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::Ingest(format!("concatenate: {e}")))?;
        let timestamps = parts.iter().flat_map(|p| p.timestamps.clone()).collect();
        Panel::new(timestamps, values, first.feature_names.clone())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, datetime_column: &str) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec![datetime_column.to_string()];
        header.extend(self.feature_names.iter().cloned());
        writer.write_record(&header)?;
        for (ts, row) in self.timestamps.iter().zip(self.values.rows()) {
            let mut record = vec![ts.format("%Y-%m-%d %H:%M:%S").to_string()];
            record.extend(row.iter().map(|v| v.to_string()));
            writer.write_record(&record)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Reads a header-bearing CSV whose `datetime_column` holds timestamps and
/// whose remaining columns are numeric features.
pub fn load_csv(path: impl AsRef<Path>, datetime_column: &str) -> Result<Panel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let ts_col = headers
        .iter()
        .position(|h| h.trim() == datetime_column)
        .ok_or_else(|| Error::Ingest(format!("no column named {datetime_column:?}")))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != ts_col).collect();
    if feature_cols.is_empty() {
        return Err(Error::Ingest("no feature columns".into()));
    }
    let feature_names = feature_cols
        .iter()
        .map(|&c| headers[c].trim().to_string())
        .collect();

    let mut timestamps = Vec::new();
    let mut flat = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let raw_ts = record.get(ts_col).unwrap_or("");
        let ts = parse_datetime(raw_ts)
            .ok_or_else(|| Error::Ingest(format!("line {line}: bad datetime {raw_ts:?}")))?;
        timestamps.push(ts);
        for &c in &feature_cols {
            let cell = record.get(c).map(str::trim).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                return Err(Error::Ingest(format!(
                    "line {line}: missing value in column {:?}",
                    &headers[c]
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::Ingest(format!("line {line}: non-numeric value {cell:?}"))
            })?;
            flat.push(v);
        }
    }
    let n = timestamps.len();
    let values = Array2::from_shape_vec((n, feature_cols.len()), flat)
        .map_err(|e| Error::Ingest(e.to_string()))?;
    Panel::new(timestamps, values, feature_names)
}

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl SplitSpec {
    pub const ETT: SplitSpec = SplitSpec {
        train_frac: 0.6,
        val_frac: 0.2,
        test_frac: 0.2,
    };
    pub const STANDARD: SplitSpec = SplitSpec {
        train_frac: 0.7,
        val_frac: 0.1,
        test_frac: 0.2,
    };

    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64) -> Result<Self> {
        let spec = Self {
            train_frac,
            val_frac,
            test_frac,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// ETT-family datasets use 0.6/0.2/0.2; everything else 0.7/0.1/0.2.
    pub fn default_for(dataset_name: &str) -> Self {
        if dataset_name.to_ascii_lowercase().starts_with("ett") {
            Self::ETT
        } else {
            Self::STANDARD
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Split(format!(
                "fractions must lie in (0,1): {fracs:?}"
            )));
        }
        let total: f64 = fracs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!("fractions sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Row counts for a panel of `n` rows.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon keeps e.g. 100 * 0.7 from flooring to 69.
        let n_train = (n as f64 * self.train_frac + 1e-9).floor() as usize;
        let n_val = (n as f64 * self.val_frac + 1e-9).floor() as usize;
        let n_val = n_val.min(n - n_train);
        (n_train, n_val, n - n_train - n_val)
    }
}

/// Contiguous chronological split. Each part must hold at least
/// `min_rows` rows (look-back + horizon) so it yields one window.
pub fn split(panel: &Panel, spec: &SplitSpec, min_rows: usize) -> Result<(Panel, Panel, Panel)> {
    spec.validate()?;
    let (n_train, n_val, n_test) = spec.sizes(panel.len());
    for (name, size) in [("train", n_train), ("val", n_val), ("test", n_test)] {
        if size < min_rows.max(1) {
            return Err(Error::Split(format!(
                "{name} split has {size} rows, need at least {min_rows}"
            )));
        }
    }
    Ok((
        panel.slice_rows(0, n_train),
        panel.slice_rows(n_train, n_train + n_val),
        panel.slice_rows(n_train + n_val, panel.len()),
    ))
}

/// Per-feature standardization statistics fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const ZSCORE_STD_FLOOR: f64 = 1e-8;

impl ZScore {
    pub fn fit(train: &Panel) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Ingest("cannot fit z-score on an empty panel".into()));
        }
        let n = train.len() as f64;
        let mean: Array1<f64> = train.values.mean_axis(Axis(0)).expect("nonempty");
        let std = train
            .values
            .columns()
            .into_iter()
            .zip(mean.iter())
            .map(|(col, m)| {
                let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                var.sqrt().max(ZSCORE_STD_FLOOR)
            })
            .collect();
        Ok(Self {
            mean: mean.to_vec(),
            std,
        })
    }

    pub fn transform(&self, panel: &Panel) -> Panel {
        let mut out = panel.clone();
        for (j, mut col) in out.values.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        out
    }

    pub fn inverse(&self, values: &Array2<f64>) -> Array2<f64> {
        let mut out = values.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| v * self.std[j] + self.mean[j]);
        }
        out
    }
}

/// Standardizes `train` and every panel in `others` with train statistics.
pub fn zscore_fit_transform(train: &Panel, others: &[&Panel]) -> Result<(Panel, Vec<Panel>, ZScore)> {
    let stats = ZScore::fit(train)?;
    let train_out = stats.transform(train);
    let others_out = others.iter().map(|p| stats.transform(p)).collect();
    Ok((train_out, others_out, stats))
}

/// One forecasting instance: `y` starts the row after `x` ends.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub start_index: usize,
}

pub fn window_count(n: usize, seq_len: usize, pred_len: usize) -> Result<usize> {
    if seq_len == 0 || pred_len == 0 {
        return Err(Error::Config("look-back and horizon must be >= 1".into()));
    }
    let needed = seq_len + pred_len;
    if n < needed {
        return Err(Error::Window {
            needed,
            available: n,
        });
    }
    Ok(n - needed + 1)
}

/// Materializes every stride-1 window of the panel.
pub fn windows(panel: &Panel, seq_len: usize, pred_len: usize) -> Result<Vec<WindowPair>> {
    let set = WindowSet::new(panel.values.clone(), seq_len, pred_len)?;
    Ok((0..set.len())
        .map(|i| WindowPair {
            x: set.x(i).to_owned(),
            y: set.y(i).to_owned(),
            start_index: i,
        })
        .collect())
}

/// Random access to (look-back, horizon) pairs.
pub trait Windows {
    fn len(&self) -> usize;
    fn x(&self, i: usize) -> ArrayView2<'_, f64>;
    fn y(&self, i: usize) -> ArrayView2<'_, f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Lazy stride-1 windows over one contiguous block of rows.
#[derive(Debug, Clone)]
pub struct WindowSet {
    values: Array2<f64>,
    seq_len: usize,
    pred_len: usize,
    count: usize,
}

impl WindowSet {
    pub fn new(values: Array2<f64>, seq_len: usize, pred_len: usize) -> Result<Self> {
        let count = window_count(values.nrows(), seq_len, pred_len)?;
        Ok(Self {
            values,
            seq_len,
            pred_len,
            count,
        })
    }

    pub fn from_panel(panel: &Panel, seq_len: usize, pred_len: usize) -> Result<Self> {
        Self::new(panel.values.clone(), seq_len, pred_len)
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn pred_len(&self) -> usize {
        self.pred_len
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }
}

impl Windows for WindowSet {
    fn len(&self) -> usize {
        self.count
    }

    fn x(&self, i: usize) -> ArrayView2<'_, f64> {
        self.values.slice(s![i..i + self.seq_len, ..])
    }

    fn y(&self, i: usize) -> ArrayView2<'_, f64> {
        let start = i + self.seq_len;
        self.values.slice(s![start..start + self.pred_len, ..])
    }
}

impl Windows for [WindowPair] {
    fn len(&self) -> usize {
        <[WindowPair]>::len(self)
    }

    fn x(&self, i: usize) -> ArrayView2<'_, f64> {
        self[i].x.view()
    }

    fn y(&self, i: usize) -> ArrayView2<'_, f64> {
        self[i].y.view()
    }
}

impl Windows for Vec<WindowPair> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn x(&self, i: usize) -> ArrayView2<'_, f64> {
        self[i].x.view()
    }

    fn y(&self, i: usize) -> ArrayView2<'_, f64> {
        self[i].y.view()
    }
}
