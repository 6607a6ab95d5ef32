//! Daily market panel: CSV parsing, calendar alignment, presence filtering,
//! forward-filling, next-day labels, train-range standardization, and rolling
//! lookback windows.
//!
//! Dates are kept as `YYYY-MM-DD` strings; lexicographic order is
//! chronological order, so the calendar is just the sorted union of dates.
//! Labels always come from raw closes stored at load time, so standardizing
//! the feature channels never disturbs them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::mat::Mat;

pub const CHANNELS: usize = 9;
pub const CHANNEL_NAMES: [&str; CHANNELS] = [
    "open", "high", "low", "close", "volume", "ma5", "ma10", "ma20", "ma30",
];
pub const PANEL_HEADER: &str = "date,stock_id,open,high,low,close,volume,ma5,ma10,ma20,ma30";

/// Fraction of calendar days a stock must be present to survive loading.
pub const DEFAULT_MIN_PRESENCE: f64 = 0.95;

/// Standard deviations are floored here before dividing.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct PanelRow {
    pub date: String,
    pub stock: String,
    pub values: [f64; CHANNELS],
}

#[derive(Debug, PartialEq)]
pub enum PanelError {
    Empty,
    BadHeader { got: String },
    Parse { line: usize, msg: String },
    DuplicateRow { line: usize, date: String, stock: String },
    NoStocksLeft,
    BadSplit(String),
    AnchorOutOfRange { anchor: usize, days: usize },
    LookbackTooLong { lookback: usize, days: usize },
    NoLabeledStocks,
}

impl core::fmt::Display for PanelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PanelError::Empty => write!(f, "panel file has no data rows"),
            PanelError::BadHeader { got } => {
                write!(f, "bad panel header {got:?}, expected {PANEL_HEADER:?}")
            }
            PanelError::Parse { line, msg } => write!(f, "panel line {line}: {msg}"),
            PanelError::DuplicateRow { line, date, stock } => {
                if *line > 0 {
                    write!(f, "panel line {line}: duplicate row for ({date}, {stock})")
                } else {
                    write!(f, "duplicate panel row for ({date}, {stock})")
                }
            }
            PanelError::NoStocksLeft => write!(f, "no stock meets the presence threshold"),
            PanelError::BadSplit(msg) => write!(f, "bad split: {msg}"),
            PanelError::AnchorOutOfRange { anchor, days } => {
                write!(f, "anchor {anchor} needs a next day but calendar has {days} days")
            }
            PanelError::LookbackTooLong { lookback, days } => {
                write!(f, "lookback {lookback} too long for {days} calendar days")
            }
            PanelError::NoLabeledStocks => write!(f, "no stock has a label on this day"),
        }
    }
}

/// Side records produced while loading; callers decide how to surface them.
#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    /// (stock, presence fraction) for stocks dropped under the threshold.
    pub dropped: Vec<(String, f64)>,
    /// Gap days forward-filled inside active ranges.
    pub filled: usize,
    /// Days backfilled before a stock's first observation.
    pub backfilled: usize,
}

#[derive(Clone, Debug, Default)]
pub struct StandardizeReport {
    /// (stock, channel name) pairs whose std hit the floor.
    pub floored: Vec<(String, &'static str)>,
    /// Stocks with no presence in the train range (fallback stats used).
    pub no_train_data: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct StockPanel {
    stocks: Vec<String>,
    dates: Vec<String>,
    /// stock-major: values[(i * days + t) * CHANNELS + c].
    values: Vec<f64>,
    /// Original observation mask, before any filling.
    present: Vec<bool>,
    /// Closes as loaded (after filling), immune to standardization.
    raw_close: Vec<f64>,
    first_obs: Vec<usize>,
    last_obs: Vec<usize>,
    standardized: bool,
    train_stats: Option<TrainStats>,
}

impl StockPanel {
    pub fn stocks(&self) -> &[String] {
        &self.stocks
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn n_stocks(&self) -> usize {
        self.stocks.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn value(&self, stock: usize, day: usize, channel: usize) -> f64 {
        self.values[(stock * self.dates.len() + day) * CHANNELS + channel]
    }

    pub fn is_present(&self, stock: usize, day: usize) -> bool {
        self.present[stock * self.dates.len() + day]
    }

    pub fn raw_close(&self, stock: usize, day: usize) -> f64 {
        self.raw_close[stock * self.dates.len() + day]
    }

    pub fn first_obs(&self, stock: usize) -> usize {
        self.first_obs[stock]
    }

    pub fn last_obs(&self, stock: usize) -> usize {
        self.last_obs[stock]
    }

    pub fn date_index(&self, date: &str) -> Option<usize> {
        self.dates.binary_search_by(|d| d.as_str().cmp(date)).ok()
    }

    /// Assembles a panel from parsed rows: union calendar, presence filter,
    /// forward-fill inside each stock's active range, backfill before it.
    pub fn from_rows(rows: &[PanelRow], min_presence: f64) -> Result<(Self, LoadReport), PanelError> {
        if rows.is_empty() {
            return Err(PanelError::Empty);
        }
        let mut date_set: BTreeSet<&str> = BTreeSet::new();
        let mut stock_set: BTreeSet<&str> = BTreeSet::new();
        for r in rows {
            date_set.insert(&r.date);
            stock_set.insert(&r.stock);
        }
        let dates: Vec<String> = date_set.iter().map(|d| d.to_string()).collect();
        let date_idx: BTreeMap<&str, usize> =
            date_set.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let days = dates.len();

        let mut report = LoadReport::default();
        let mut kept: Vec<String> = Vec::new();
        let mut per_stock: BTreeMap<&str, Vec<Option<&PanelRow>>> = BTreeMap::new();
        for s in &stock_set {
            per_stock.insert(s, vec![None; days]);
        }
        for r in rows {
            let slot = &mut per_stock.get_mut(r.stock.as_str()).unwrap()[date_idx[r.date.as_str()]];
            if slot.is_some() {
                // Line number is unknown at this stage; parse_panel_csv
                // reports duplicates with their line before we get here.
                return Err(PanelError::DuplicateRow {
                    line: 0,
                    date: r.date.clone(),
                    stock: r.stock.clone(),
                });
            }
            *slot = Some(r);
        }
        for (stock, days_vec) in &per_stock {
            let present = days_vec.iter().filter(|d| d.is_some()).count();
            let frac = present as f64 / days as f64;
            if frac >= min_presence {
                kept.push(stock.to_string());
            } else {
                report.dropped.push((stock.to_string(), frac));
            }
        }
        if kept.is_empty() {
            return Err(PanelError::NoStocksLeft);
        }

        let n = kept.len();
        let mut values = vec![0.0; n * days * CHANNELS];
        let mut present = vec![false; n * days];
        let mut raw_close = vec![0.0; n * days];
        let mut first_obs = vec![0usize; n];
        let mut last_obs = vec![0usize; n];
        for (i, stock) in kept.iter().enumerate() {
            let days_vec = &per_stock[stock.as_str()];
            let first = days_vec.iter().position(|d| d.is_some()).unwrap();
            let last = days_vec.iter().rposition(|d| d.is_some()).unwrap();
            first_obs[i] = first;
            last_obs[i] = last;
            let mut carry: Option<[f64; CHANNELS]> = None;
            for t in 0..days {
                let cell = if t < first {
                    report.backfilled += 1;
                    days_vec[first].map(|r| r.values)
                } else {
                    match days_vec[t] {
                        Some(r) => {
                            present[i * days + t] = true;
                            carry = Some(r.values);
                            Some(r.values)
                        }
                        None => {
                            if t <= last {
                                report.filled += 1;
                            }
                            carry
                        }
                    }
                };
                let vals = cell.expect("active range starts at first observation");
                let base = (i * days + t) * CHANNELS;
                values[base..base + CHANNELS].copy_from_slice(&vals);
                raw_close[i * days + t] = vals[3];
            }
        }
        Ok((
            StockPanel {
                stocks: kept,
                dates,
                values,
                present,
                raw_close,
                first_obs,
                last_obs,
                standardized: false,
                train_stats: None,
            },
            report,
        ))
    }

    /// Parses the panel CSV and assembles it in one step.
    pub fn load_str(text: &str, min_presence: f64) -> Result<(Self, LoadReport), PanelError> {
        let rows = parse_panel_csv(text)?;
        Self::from_rows(&rows, min_presence)
    }

    /// Next-day relative return per stock at `anchor`: close[t+1]/close[t] - 1
    /// on raw closes. Unavailable when either day's close was not originally
    /// observed, the anchor precedes the stock's first observation, or the
    /// anchor close is not positive.
    pub fn compute_labels(&self, anchor: usize) -> Result<LabelVector, PanelError> {
        let days = self.dates.len();
        if anchor + 1 >= days {
            return Err(PanelError::AnchorOutOfRange { anchor, days });
        }
        let n = self.stocks.len();
        let mut y = vec![0.0; n];
        let mut available = vec![false; n];
        for i in 0..n {
            let ok = self.is_present(i, anchor)
                && self.is_present(i, anchor + 1)
                && anchor >= self.first_obs[i]
                && self.raw_close(i, anchor) > 0.0;
            if ok {
                y[i] = self.raw_close(i, anchor + 1) / self.raw_close(i, anchor) - 1.0;
                available[i] = true;
            }
        }
        Ok(LabelVector { y, available })
    }

    /// Per-stock, per-channel z-scoring with statistics taken only from
    /// originally observed days inside the train range.
    pub fn standardize(
        &self,
        split: &SplitIndices,
    ) -> Result<(StockPanel, StandardizeReport), PanelError> {
        let n = self.stocks.len();
        let mut out = self.clone();
        let mut report = StandardizeReport::default();
        let mut stats = TrainStats {
            mean: Mat::zeros(n, CHANNELS),
            std: Mat::zeros(n, CHANNELS),
        };
        for i in 0..n {
            let train_days: Vec<usize> = (split.train.0..=split.train.1)
                .filter(|&t| self.is_present(i, t))
                .collect();
            if train_days.is_empty() {
                report.no_train_data.push(self.stocks[i].clone());
                for c in 0..CHANNELS {
                    stats.mean.set(i, c, 0.0);
                    stats.std.set(i, c, 1.0);
                }
                continue;
            }
            for c in 0..CHANNELS {
                let m = train_days.len() as f64;
                let mean = train_days.iter().map(|&t| self.value(i, t, c)).sum::<f64>() / m;
                let var = train_days
                    .iter()
                    .map(|&t| {
                        let d = self.value(i, t, c) - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / m;
                let mut std = libm::sqrt(var);
                if std < STD_FLOOR {
                    std = STD_FLOOR;
                    report.floored.push((self.stocks[i].clone(), CHANNEL_NAMES[c]));
                }
                stats.mean.set(i, c, mean);
                stats.std.set(i, c, std);
            }
        }
        apply_stats(&mut out, &stats);
        out.standardized = true;
        out.train_stats = Some(stats);
        Ok((out, report))
    }

    /// Re-applies stored train statistics; used at prediction time so a saved
    /// model sees inputs scaled exactly as during training.
    pub fn standardize_with(&self, stats: &TrainStats) -> Result<StockPanel, PanelError> {
        if stats.mean.rows() != self.stocks.len() {
            return Err(PanelError::BadSplit("statistics shape mismatch".into()));
        }
        let mut out = self.clone();
        apply_stats(&mut out, stats);
        out.standardized = true;
        out.train_stats = Some(stats.clone());
        Ok(out)
    }

    pub fn train_stats(&self) -> Option<&TrainStats> {
        self.train_stats.as_ref()
    }

    /// The batch for one anchor day: inputs are the L days ending at the
    /// anchor. On the final calendar day no label exists; labels are zero and
    /// marked unavailable, which suits prediction but not training.
    pub fn window_at(&self, anchor: usize, lookback: usize) -> Result<WindowBatch, PanelError> {
        let days = self.dates.len();
        if lookback == 0 || lookback > days {
            return Err(PanelError::LookbackTooLong { lookback, days });
        }
        if anchor + 1 < lookback || anchor >= days {
            return Err(PanelError::AnchorOutOfRange { anchor, days });
        }
        let n = self.stocks.len();
        let labels = if anchor + 1 < days {
            self.compute_labels(anchor)?
        } else {
            LabelVector {
                y: vec![0.0; n],
                available: vec![false; n],
            }
        };
        let start = anchor + 1 - lookback;
        let mut windows = Mat::zeros(n, lookback * CHANNELS);
        let mut label_available = vec![false; n];
        for i in 0..n {
            let row = windows.row_mut(i);
            for (w, t) in (start..=anchor).enumerate() {
                let base = (i * days + t) * CHANNELS;
                row[w * CHANNELS..(w + 1) * CHANNELS]
                    .copy_from_slice(&self.values[base..base + CHANNELS]);
            }
            label_available[i] = labels.available[i] && self.first_obs[i] <= start;
        }
        Ok(WindowBatch {
            anchor,
            date: self.dates[anchor].clone(),
            lookback,
            windows,
            labels: labels.y,
            label_available,
            standardized: self.standardized,
        })
    }

    /// One batch per anchor T in [L-1, T_total-2]: inputs are the L days
    /// ending at T, the label looks one day ahead.
    pub fn make_windows(&self, lookback: usize) -> Result<Vec<WindowBatch>, PanelError> {
        let days = self.dates.len();
        if lookback == 0 || lookback + 1 > days {
            return Err(PanelError::LookbackTooLong { lookback, days });
        }
        ((lookback - 1)..(days - 1))
            .map(|anchor| self.window_at(anchor, lookback))
            .collect()
    }
}

fn apply_stats(panel: &mut StockPanel, stats: &TrainStats) {
    let days = panel.dates.len();
    for i in 0..panel.stocks.len() {
        for t in 0..days {
            let base = (i * days + t) * CHANNELS;
            for c in 0..CHANNELS {
                let v = panel.values[base + c];
                panel.values[base + c] = (v - stats.mean.at(i, c)) / stats.std.at(i, c);
            }
        }
    }
}

/// Train-range mean and (floored) std per stock and channel.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainStats {
    pub mean: Mat,
    pub std: Mat,
}

#[derive(Clone, Debug)]
pub struct LabelVector {
    pub y: Vec<f64>,
    pub available: Vec<bool>,
}

/// Inputs for one anchor day: per-stock windows (rows are stocks, row layout
/// is time-major: t*CHANNELS + c) plus the next-day labels.
#[derive(Clone, Debug)]
pub struct WindowBatch {
    pub anchor: usize,
    pub date: String,
    pub lookback: usize,
    pub windows: Mat,
    pub labels: Vec<f64>,
    pub label_available: Vec<bool>,
    /// Whether the source panel was standardized; encoders require it.
    pub standardized: bool,
}

impl WindowBatch {
    /// Indicator channels per day, inferred so hand-built batches with other
    /// widths also work.
    pub fn channels(&self) -> usize {
        self.windows.cols() / self.lookback
    }

    /// Copy of stock `i`'s window as a lookback x channels matrix.
    pub fn window(&self, i: usize) -> Mat {
        Mat::from_vec(self.lookback, self.channels(), self.windows.row(i).to_vec())
    }

    pub fn n_stocks(&self) -> usize {
        self.windows.rows()
    }
}

/// Inclusive date ranges, as strings straight from configuration.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train: (String, String),
    pub valid: (String, String),
    pub test: (String, String),
}

/// The same split resolved to inclusive calendar index ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitIndices {
    pub train: (usize, usize),
    pub valid: (usize, usize),
    pub test: (usize, usize),
}

impl SplitSpec {
    pub fn resolve(&self, dates: &[String]) -> Result<SplitIndices, PanelError> {
        for (name, (a, b)) in [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
        ] {
            check_date(a).map_err(|m| PanelError::BadSplit(alloc::format!("{name} start: {m}")))?;
            check_date(b).map_err(|m| PanelError::BadSplit(alloc::format!("{name} end: {m}")))?;
            if a > b {
                return Err(PanelError::BadSplit(alloc::format!(
                    "{name} range starts after it ends ({a} > {b})"
                )));
            }
        }
        if !(self.train.1 < self.valid.0 && self.valid.1 < self.test.0) {
            return Err(PanelError::BadSplit(
                "ranges must be ordered train < valid < test without overlap".into(),
            ));
        }
        let range = |lo: &str, hi: &str, name: &str| -> Result<(usize, usize), PanelError> {
            let start = dates.partition_point(|d| d.as_str() < lo);
            let end = dates.partition_point(|d| d.as_str() <= hi);
            if start >= end {
                return Err(PanelError::BadSplit(alloc::format!(
                    "{name} range [{lo}, {hi}] contains no calendar days"
                )));
            }
            Ok((start, end - 1))
        };
        Ok(SplitIndices {
            train: range(&self.train.0, &self.train.1, "train")?,
            valid: range(&self.valid.0, &self.valid.1, "valid")?,
            test: range(&self.test.0, &self.test.1, "test")?,
        })
    }
}

fn check_date(d: &str) -> Result<(), String> {
    let b = d.as_bytes();
    let ok = b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, c)| {
            if i == 4 || i == 7 {
                true
            } else {
                c.is_ascii_digit()
            }
        });
    let month_ok = ok && &d[5..7] >= "01" && &d[5..7] <= "12";
    let day_ok = ok && &d[8..10] >= "01" && &d[8..10] <= "31";
    if ok && month_ok && day_ok {
        Ok(())
    } else {
        Err(alloc::format!("{d:?} is not a YYYY-MM-DD date"))
    }
}

/// Parses the panel CSV: fixed header, one row per (date, stock), numeric
/// fields finite. Errors carry 1-based line numbers.
pub fn parse_panel_csv(text: &str) -> Result<Vec<PanelRow>, PanelError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(PanelError::Empty)?;
    if header.trim_end() != PANEL_HEADER {
        return Err(PanelError::BadHeader {
            got: header.trim_end().to_string(),
        });
    }
    let mut rows = Vec::new();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != CHANNELS + 2 {
            return Err(PanelError::Parse {
                line: lineno,
                msg: alloc::format!("expected {} fields, got {}", CHANNELS + 2, fields.len()),
            });
        }
        let date = fields[0].to_string();
        check_date(&date).map_err(|m| PanelError::Parse { line: lineno, msg: m })?;
        let stock = fields[1].to_string();
        if stock.is_empty() {
            return Err(PanelError::Parse {
                line: lineno,
                msg: "empty stock_id".into(),
            });
        }
        let mut values = [0.0; CHANNELS];
        for (c, field) in fields[2..].iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| PanelError::Parse {
                line: lineno,
                msg: alloc::format!("bad number {field:?} in column {}", CHANNEL_NAMES[c]),
            })?;
            if !v.is_finite() {
                return Err(PanelError::Parse {
                    line: lineno,
                    msg: alloc::format!("non-finite value in column {}", CHANNEL_NAMES[c]),
                });
            }
            values[c] = v;
        }
        if !seen.insert((date.clone(), stock.clone())) {
            return Err(PanelError::DuplicateRow {
                line: lineno,
                date,
                stock,
            });
        }
        rows.push(PanelRow { date, stock, values });
    }
    if rows.is_empty() {
        return Err(PanelError::Empty);
    }
    Ok(rows)
}
