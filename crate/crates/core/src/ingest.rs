//! Price ingestion, calendar alignment and simple returns.
//!
//! Price files are delimiter-separated with a header naming at least the
//! `asset`, `date` and `close` columns; `open`, `high`, `low` and `volume`
//! are optional. Dates are UTC calendar days (`YYYY-MM-DD`). Missing
//! observations are absent cells, never zeros.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

pub const PRICE_HEADER: [&str; 7] = ["asset", "date", "open", "high", "low", "close", "volume"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: duplicate row for ({asset}, {date})")]
    Conflict {
        line: u64,
        asset: String,
        date: NaiveDate,
    },
    #[error("line {line}: {message}")]
    Validation { line: u64, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("write failed: {0}")]
    Write(String),
}

/// Delimiter settings for price files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriceFormat {
    pub delimiter: u8,
}

impl Default for PriceFormat {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

/// One daily bar. `close` is always present for a stored bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub open: Option<f64>,
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub close: f64,
    pub volume: Option<f64>,
}

impl Bar {
    pub fn from_close(close: f64) -> Self {
        Self {
            open: None,
            high: None,
            low: None,
            close,
            volume: None,
        }
    }
}

/// Daily bars per asset on a shared, strictly increasing calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    assets: Vec<String>,
    dates: Vec<NaiveDate>,
    // [asset][date]
    bars: Vec<Vec<Option<Bar>>>,
}

impl PricePanel {
    /// Builds a panel from `(asset, date, bar)` rows. Assets are ordered by
    /// name; the calendar is the union of all row dates.
    pub fn from_rows<I>(rows: I) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = (String, NaiveDate, Bar)>,
    {
        let mut by_asset: BTreeMap<String, BTreeMap<NaiveDate, Bar>> = BTreeMap::new();
        for (i, (asset, date, bar)) in rows.into_iter().enumerate() {
            let line = i as u64 + 1;
            validate_bar(&bar, line)?;
            let series = by_asset.entry(asset.clone()).or_default();
            if series.insert(date, bar).is_some() {
                return Err(IngestError::Conflict { line, asset, date });
            }
        }
        Ok(Self::assemble(by_asset))
    }

    fn assemble(by_asset: BTreeMap<String, BTreeMap<NaiveDate, Bar>>) -> Self {
        let mut dates: Vec<NaiveDate> = by_asset.values().flat_map(|s| s.keys().copied()).collect();
        dates.sort_unstable();
        dates.dedup();
        let mut assets = Vec::with_capacity(by_asset.len());
        let mut bars = Vec::with_capacity(by_asset.len());
        for (asset, series) in by_asset {
            let column = dates.iter().map(|d| series.get(d).copied()).collect();
            assets.push(asset);
            bars.push(column);
        }
        Self { assets, dates, bars }
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn asset_index(&self, asset: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == asset)
    }

    pub fn bar(&self, asset: usize, t: usize) -> Option<&Bar> {
        self.bars[asset][t].as_ref()
    }

    pub fn close(&self, asset: usize, t: usize) -> Option<f64> {
        self.bars[asset][t].map(|b| b.close)
    }

    /// First and last date with a price for `asset`.
    pub fn coverage(&self, asset: usize) -> Option<(NaiveDate, NaiveDate)> {
        let column = &self.bars[asset];
        let first = column.iter().position(Option::is_some)?;
        let last = column.iter().rposition(Option::is_some)?;
        Some((self.dates[first], self.dates[last]))
    }

    /// Keeps only the named assets (ordered by name). Unknown names are an error.
    pub fn select_assets(&self, names: &[String]) -> Result<Self, IngestError> {
        let mut by_asset = BTreeMap::new();
        for name in names {
            let a = self
                .asset_index(name)
                .ok_or_else(|| IngestError::InvalidArgument(format!("asset {name} not in price panel")))?;
            let series: BTreeMap<NaiveDate, Bar> = self
                .dates
                .iter()
                .zip(&self.bars[a])
                .filter_map(|(d, b)| b.map(|b| (*d, b)))
                .collect();
            by_asset.insert(name.clone(), series);
        }
        Ok(Self::assemble(by_asset))
    }
}

fn validate_bar(bar: &Bar, line: u64) -> Result<(), IngestError> {
    if !bar.close.is_finite() || bar.close <= 0.0 {
        return Err(IngestError::Validation {
            line,
            message: format!("close must be strictly positive, got {}", bar.close),
        });
    }
    for (name, value) in [("open", bar.open), ("high", bar.high), ("low", bar.low)] {
        if let Some(v) = value {
            if !v.is_finite() || v <= 0.0 {
                return Err(IngestError::Validation {
                    line,
                    message: format!("{name} must be strictly positive, got {v}"),
                });
            }
        }
    }
    if let Some(v) = bar.volume {
        if !v.is_finite() || v < 0.0 {
            return Err(IngestError::Validation {
                line,
                message: format!("volume must be nonnegative, got {v}"),
            });
        }
    }
    Ok(())
}

pub fn load_price_panel(path: &Path, format: &PriceFormat) -> Result<PricePanel, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_price_panel(file, format)
}

pub fn read_price_panel<R: Read>(reader: R, format: &PriceFormat) -> Result<PricePanel, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| IngestError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (asset_col, date_col, close_col) = match (column("asset"), column("date"), column("close")) {
        (Some(a), Some(d), Some(c)) => (a, d, c),
        _ => {
            return Err(IngestError::Parse {
                line: 1,
                message: "header must name asset, date and close columns".into(),
            })
        }
    };
    let optional = [column("open"), column("high"), column("low"), column("volume")];

    let mut by_asset: BTreeMap<String, BTreeMap<NaiveDate, Bar>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| IngestError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let asset = field(asset_col);
        if asset.is_empty() {
            return Err(IngestError::Parse {
                line,
                message: "empty asset identifier".into(),
            });
        }
        let date = NaiveDate::parse_from_str(field(date_col), "%Y-%m-%d").map_err(|e| IngestError::Parse {
            line,
            message: format!("bad date {:?}: {e}", field(date_col)),
        })?;
        let number = |i: Option<usize>, name: &str| -> Result<Option<f64>, IngestError> {
            match i.map(field) {
                None | Some("") => Ok(None),
                Some(s) => s.parse::<f64>().map(Some).map_err(|_| IngestError::Parse {
                    line,
                    message: format!("bad {name} value {s:?}"),
                }),
            }
        };
        let close = number(Some(close_col), "close")?.ok_or_else(|| IngestError::Parse {
            line,
            message: "missing close".into(),
        })?;
        let bar = Bar {
            open: number(optional[0], "open")?,
            high: number(optional[1], "high")?,
            low: number(optional[2], "low")?,
            close,
            volume: number(optional[3], "volume")?,
        };
        validate_bar(&bar, line)?;
        let series = by_asset.entry(asset.to_string()).or_default();
        if series.insert(date, bar).is_some() {
            return Err(IngestError::Conflict {
                line,
                asset: asset.to_string(),
                date,
            });
        }
    }
    Ok(PricePanel::assemble(by_asset))
}

/// Emits the panel in the canonical 7-column layout, ordered by date then asset.
/// Floats use the shortest representation that parses back to the same value.
pub fn write_price_panel<W: Write>(panel: &PricePanel, writer: W, format: &PriceFormat) -> Result<(), IngestError> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(format.delimiter)
        .from_writer(writer);
    let werr = |e: csv::Error| IngestError::Write(e.to_string());
    wtr.write_record(PRICE_HEADER).map_err(werr)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (t, date) in panel.dates.iter().enumerate() {
        let date = date.format("%Y-%m-%d").to_string();
        for (a, asset) in panel.assets.iter().enumerate() {
            if let Some(bar) = panel.bars[a][t] {
                wtr.write_record([
                    asset.clone(),
                    date.clone(),
                    opt(bar.open),
                    opt(bar.high),
                    opt(bar.low),
                    bar.close.to_string(),
                    opt(bar.volume),
                ])
                .map_err(werr)?;
            }
        }
    }
    wtr.flush().map_err(|e| IngestError::Write(e.to_string()))
}

/// One asset's values on a calendar. `None` marks a missing observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    dates: Vec<NaiveDate>,
    values: Vec<Option<f64>>,
}

impl Series {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<Option<f64>>) -> Self {
        assert_eq!(dates.len(), values.len(), "series dates and values differ in length");
        debug_assert!(dates.windows(2).all(|w| w[0] < w[1]), "series dates must increase");
        Self { dates, values }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.dates.binary_search(&date).ok().and_then(|i| self.values[i])
    }

    /// Number of realized (non-missing) values.
    pub fn realized(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Simple returns (fractions, 0.05 = 5%) per asset on the price calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    assets: Vec<String>,
    dates: Vec<NaiveDate>,
    // [asset][date]
    returns: Vec<Vec<Option<f64>>>,
}

impl ReturnPanel {
    /// Assembles a panel from per-asset return columns on a shared calendar.
    pub fn from_columns(
        assets: Vec<String>,
        dates: Vec<NaiveDate>,
        returns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, IngestError> {
        if assets.len() != returns.len() {
            return Err(IngestError::InvalidArgument(format!(
                "{} assets but {} return columns",
                assets.len(),
                returns.len()
            )));
        }
        if returns.iter().any(|c| c.len() != dates.len()) {
            return Err(IngestError::InvalidArgument("return column length differs from calendar".into()));
        }
        if !dates.windows(2).all(|w| w[0] < w[1]) {
            return Err(IngestError::InvalidArgument("calendar must be strictly increasing".into()));
        }
        Ok(Self { assets, dates, returns })
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn asset_index(&self, asset: &str) -> Option<usize> {
        self.assets.iter().position(|a| a == asset)
    }

    pub fn column(&self, asset: usize) -> &[Option<f64>] {
        &self.returns[asset]
    }

    pub fn series(&self, asset: &str) -> Option<Series> {
        let a = self.asset_index(asset)?;
        Some(Series::new(self.dates.clone(), self.returns[a].clone()))
    }

    pub fn value(&self, asset: usize, t: usize) -> Option<f64> {
        self.returns[asset][t]
    }

    /// Largest absolute realized return, 0 for an empty panel.
    pub fn max_abs(&self) -> f64 {
        self.returns
            .iter()
            .flatten()
            .flatten()
            .fold(0.0_f64, |m, r| m.max(r.abs()))
    }
}

/// `close[t] / close[t-1] - 1` wherever both closes exist on consecutive
/// calendar days. A missing day breaks the chain: no return spans a gap.
pub fn compute_returns(panel: &PricePanel) -> ReturnPanel {
    let dates = panel.dates.clone();
    let returns = panel
        .bars
        .iter()
        .map(|column| {
            let mut out = vec![None; dates.len()];
            for t in 1..dates.len() {
                if (dates[t] - dates[t - 1]).num_days() != 1 {
                    continue;
                }
                if let (Some(prev), Some(cur)) = (column[t - 1], column[t]) {
                    out[t] = Some(cur.close / prev.close - 1.0);
                }
            }
            out
        })
        .collect();
    ReturnPanel {
        assets: panel.assets.clone(),
        dates,
        returns,
    }
}

/// Clamps one return to `[-cap, cap]`.
#[inline]
pub fn cap_return(r: f64, cap: f64) -> f64 {
    r.min(cap).max(-cap)
}

/// Returns a capped copy of the panel; `None` leaves returns unchanged.
pub fn winsorize(panel: &ReturnPanel, cap: Option<f64>) -> Result<ReturnPanel, IngestError> {
    let Some(cap) = cap else {
        return Ok(panel.clone());
    };
    if cap.is_nan() || cap <= 0.0 {
        return Err(IngestError::InvalidArgument(format!("cap must be positive, got {cap}")));
    }
    let returns = panel
        .returns
        .iter()
        .map(|column| column.iter().map(|r| r.map(|r| cap_return(r, cap))).collect())
        .collect();
    Ok(ReturnPanel {
        assets: panel.assets.clone(),
        dates: panel.dates.clone(),
        returns,
    })
}
