//! Benchmark-model fits, abnormal returns and cumulative abnormal returns.
//!
//! Window offsets are calendar days relative to the event day (day 0).
//! The estimation window holds the last `estimation_length` realized returns
//! on or before `event - max(gap, -tau1) - 1`, walking backward over missing
//! days, so it never touches the gap or the event window.

use std::fmt;
use std::io::Write;
use std::ops::RangeInclusive;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use thiserror::Error;

use crate::events::{Category, Event, EventSet};
use crate::ingest::{winsorize, IngestError, ReturnPanel, Series};
use crate::stats;

/// `|CAR| > SIGNIFICANCE_MULTIPLIER * sigma_car` flags an individual observation.
pub const SIGNIFICANCE_MULTIPLIER: f64 = 2.0;

#[derive(Debug, Error)]
pub enum CarError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient estimation data: {realized} realized returns, {required} required")]
    InsufficientEstimation { realized: usize, required: usize },
    #[error("no realized returns inside the event window")]
    EmptyEventWindow,
    #[error("proxy returns have zero variance over the estimation window")]
    DegenerateRegressor,
    #[error("market model requires proxy returns")]
    MissingProxy,
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Event window `[start, end]` in day offsets (tau1, tau2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventWindow {
    pub start: i32,
    pub end: i32,
}

impl EventWindow {
    pub fn new(start: i32, end: i32) -> Result<Self, CarError> {
        if start > end {
            return Err(CarError::InvalidArgument(format!("event window start {start} exceeds end {end}")));
        }
        Ok(Self { start, end })
    }

    /// Nominal number of days, day 0 included when covered.
    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn offsets(&self) -> RangeInclusive<i32> {
        self.start..=self.end
    }
}

fn signed(k: i32) -> String {
    if k > 0 {
        format!("+{k}")
    } else {
        k.to_string()
    }
}

impl fmt::Display for EventWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", signed(self.start), signed(self.end))
    }
}

impl FromStr for EventWindow {
    type Err = String;

    /// Parses `T1:T2`, e.g. `-5:30`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("window {s:?} must look like T1:T2"))?;
        let parse = |x: &str| x.trim().trim_start_matches('+').parse::<i32>().map_err(|e| format!("window {s:?}: {e}"));
        EventWindow::new(parse(a)?, parse(b)?).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    /// Target number of realized estimation returns.
    pub estimation_length: usize,
    /// Fewest realized estimation returns accepted.
    pub estimation_min: usize,
    /// Days immediately before the event excluded from estimation.
    pub gap_length: u32,
    pub event_window: EventWindow,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            estimation_length: 250,
            estimation_min: 120,
            gap_length: 30,
            event_window: EventWindow { start: -5, end: 30 },
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), CarError> {
        if self.estimation_min == 0 || self.estimation_min > self.estimation_length {
            return Err(CarError::InvalidArgument(format!(
                "need 1 <= estimation_min ({}) <= estimation_length ({})",
                self.estimation_min, self.estimation_length
            )));
        }
        EventWindow::new(self.event_window.start, self.event_window.end)?;
        Ok(())
    }

    pub fn with_window(mut self, window: EventWindow) -> Self {
        self.event_window = window;
        self
    }

    /// Last calendar day the estimation window may use.
    pub fn estimation_end(&self, event_date: NaiveDate) -> NaiveDate {
        let back = i64::from(self.gap_length).max(-i64::from(self.event_window.start)) + 1;
        offset_date(event_date, -back as i32)
    }
}

fn offset_date(date: NaiveDate, offset: i32) -> NaiveDate {
    if offset >= 0 {
        date + Days::new(offset as u64)
    } else {
        date - Days::new(offset.unsigned_abs() as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    ConstantMean,
    MarketProxy,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::ConstantMean => "constant-mean",
            ModelKind::MarketProxy => "market",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Benchmark {
    ConstantMean { mean: f64 },
    Market { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub benchmark: Benchmark,
    /// Standard deviation of estimation-window abnormal returns.
    pub resid_sd: f64,
    pub n_obs: usize,
    pub estimation_start: NaiveDate,
    pub estimation_end: NaiveDate,
}

impl ModelFit {
    pub fn kind(&self) -> ModelKind {
        match self.benchmark {
            Benchmark::ConstantMean { .. } => ModelKind::ConstantMean,
            Benchmark::Market { .. } => ModelKind::MarketProxy,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self.benchmark {
            Benchmark::Market { beta, .. } => Some(beta),
            Benchmark::ConstantMean { .. } => None,
        }
    }

    /// Normal return for one day; market fits need the proxy return.
    pub fn expected(&self, proxy_return: Option<f64>) -> Option<f64> {
        match self.benchmark {
            Benchmark::ConstantMean { mean } => Some(mean),
            Benchmark::Market { alpha, beta } => proxy_return.map(|x| alpha + beta * x),
        }
    }
}

struct EstimationSample {
    y: Vec<f64>,
    x: Vec<f64>,
    first: NaiveDate,
    last: NaiveDate,
}

fn estimation_sample(
    returns: &Series,
    proxy: Option<&Series>,
    event_date: NaiveDate,
    cfg: &WindowConfig,
) -> Result<EstimationSample, CarError> {
    let end = cfg.estimation_end(event_date);
    let dates = returns.dates();
    let stop = dates.partition_point(|d| *d <= end);
    let mut picked = Vec::with_capacity(cfg.estimation_length);
    for i in (0..stop).rev() {
        if picked.len() == cfg.estimation_length {
            break;
        }
        let Some(y) = returns.values()[i] else { continue };
        let x = match proxy {
            Some(p) => match p.get(dates[i]) {
                Some(x) => x,
                None => continue,
            },
            None => 0.0,
        };
        picked.push((dates[i], y, x));
    }
    if picked.len() < cfg.estimation_min {
        return Err(CarError::InsufficientEstimation {
            realized: picked.len(),
            required: cfg.estimation_min,
        });
    }
    picked.reverse();
    let first = picked[0].0;
    let last = picked[picked.len() - 1].0;
    debug_assert!(last < offset_date(event_date, -(cfg.gap_length as i32)));
    debug_assert!(last < offset_date(event_date, cfg.event_window.start));
    Ok(EstimationSample {
        y: picked.iter().map(|p| p.1).collect(),
        x: picked.iter().map(|p| p.2).collect(),
        first,
        last,
    })
}

/// Mean and sample standard deviation of the estimation returns.
pub fn fit_constant_mean(returns: &Series, event_date: NaiveDate, cfg: &WindowConfig) -> Result<ModelFit, CarError> {
    cfg.validate()?;
    let sample = estimation_sample(returns, None, event_date, cfg)?;
    Ok(ModelFit {
        benchmark: Benchmark::ConstantMean {
            mean: stats::mean(&sample.y),
        },
        resid_sd: stats::sample_sd(&sample.y),
        n_obs: sample.y.len(),
        estimation_start: sample.first,
        estimation_end: sample.last,
    })
}

/// OLS of asset returns on proxy returns over days where both exist.
/// The residual standard deviation uses divisor `n - 2`.
pub fn fit_market_model(
    returns: &Series,
    proxy_returns: &Series,
    event_date: NaiveDate,
    cfg: &WindowConfig,
) -> Result<ModelFit, CarError> {
    cfg.validate()?;
    let sample = estimation_sample(returns, Some(proxy_returns), event_date, cfg)?;
    let (x, y) = (&sample.x, &sample.y);
    if x.iter().all(|v| *v == x[0]) {
        return Err(CarError::DegenerateRegressor);
    }
    let mx = stats::mean(x);
    let my = stats::mean(y);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx <= 0.0 {
        return Err(CarError::DegenerateRegressor);
    }
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let n = y.len();
    let resid_sd = if n > 2 {
        let sse: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - alpha - beta * xi).powi(2)).sum();
        (sse / (n - 2) as f64).sqrt()
    } else {
        0.0
    };
    Ok(ModelFit {
        benchmark: Benchmark::Market { alpha, beta },
        resid_sd,
        n_obs: n,
        estimation_start: sample.first,
        estimation_end: sample.last,
    })
}

/// Per-day simple average of every asset except `exclude_asset`; missing
/// where no other asset has a return.
pub fn build_ew_proxy(panel: &ReturnPanel, exclude_asset: &str) -> Result<Series, CarError> {
    if panel.assets().len() < 2 {
        return Err(CarError::InvalidArgument("equal-weighted proxy needs at least two assets".into()));
    }
    let skip = panel
        .asset_index(exclude_asset)
        .ok_or_else(|| CarError::InvalidArgument(format!("asset {exclude_asset} not in panel")))?;
    let values = (0..panel.dates().len())
        .map(|t| {
            let (sum, n) = (0..panel.assets().len())
                .filter(|&a| a != skip)
                .filter_map(|a| panel.value(a, t))
                .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect();
    Ok(Series::new(panel.dates().to_vec(), values))
}

/// Abnormal returns `(offset, AR)` on each realized day of the window.
pub fn abnormal_returns(
    fit: &ModelFit,
    returns: &Series,
    proxy_returns: Option<&Series>,
    event_date: NaiveDate,
    window: EventWindow,
) -> Result<Vec<(i32, f64)>, CarError> {
    if fit.kind() == ModelKind::MarketProxy && proxy_returns.is_none() {
        return Err(CarError::MissingProxy);
    }
    Ok(window
        .offsets()
        .filter_map(|k| {
            let date = offset_date(event_date, k);
            let r = returns.get(date)?;
            let expected = fit.expected(proxy_returns.and_then(|p| p.get(date)))?;
            Some((k, r - expected))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowCar {
    pub car: f64,
    /// `resid_sd * sqrt(n_days)` over realized window days.
    pub sigma_car: f64,
    pub n_days: usize,
    pub significant: bool,
    pub abnormal: Vec<(i32, f64)>,
}

pub fn compute_car(
    fit: &ModelFit,
    returns: &Series,
    proxy_returns: Option<&Series>,
    event_date: NaiveDate,
    window: EventWindow,
) -> Result<WindowCar, CarError> {
    let abnormal = abnormal_returns(fit, returns, proxy_returns, event_date, window)?;
    if abnormal.is_empty() {
        return Err(CarError::EmptyEventWindow);
    }
    let car: f64 = abnormal.iter().map(|(_, ar)| ar).sum();
    let n_days = abnormal.len();
    let sigma_car = fit.resid_sd * (n_days as f64).sqrt();
    Ok(WindowCar {
        car,
        sigma_car,
        n_days,
        significant: car.abs() > SIGNIFICANCE_MULTIPLIER * sigma_car,
        abnormal,
    })
}

/// Which benchmark the pipeline fits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ModelSpec {
    ConstantMean,
    /// Market model on the named asset; that asset itself gets a constant mean.
    MarketProxy(String),
    /// Market model on a leave-one-out equal-weighted index.
    MarketEw,
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::ConstantMean => f.write_str("constant-mean"),
            ModelSpec::MarketProxy(a) => write!(f, "market-proxy:{a}"),
            ModelSpec::MarketEw => f.write_str("market-ew"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant-mean" => Ok(ModelSpec::ConstantMean),
            "market-ew" => Ok(ModelSpec::MarketEw),
            _ => match s.strip_prefix("market-proxy:") {
                Some(asset) if !asset.is_empty() => Ok(ModelSpec::MarketProxy(asset.to_string())),
                _ => Err(format!(
                    "unknown model {s:?} (expected constant-mean, market-proxy:ASSET or market-ew)"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarResult {
    pub event_id: String,
    pub event_date: NaiveDate,
    pub asset: String,
    pub category: Category,
    pub window: EventWindow,
    pub car: f64,
    pub sigma_car: f64,
    pub n_days: usize,
    pub significant: bool,
    pub fit: ModelFit,
    pub abnormal: Vec<(i32, f64)>,
}

impl CarResult {
    pub fn model(&self) -> ModelKind {
        self.fit.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    ExcludedCategory,
    InsufficientEstimation { realized: usize, required: usize },
    EmptyEventWindow,
    DegenerateRegressor,
    Other(String),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::ExcludedCategory => f.write_str("excluded category"),
            SkipReason::InsufficientEstimation { realized, required } => {
                write!(f, "insufficient estimation data ({realized} of {required})")
            }
            SkipReason::EmptyEventWindow => f.write_str("no returns in event window"),
            SkipReason::DegenerateRegressor => f.write_str("zero proxy variance"),
            SkipReason::Other(msg) => f.write_str(msg),
        }
    }
}

impl From<CarError> for SkipReason {
    fn from(e: CarError) -> Self {
        match e {
            CarError::InsufficientEstimation { realized, required } => {
                SkipReason::InsufficientEstimation { realized, required }
            }
            CarError::EmptyEventWindow => SkipReason::EmptyEventWindow,
            CarError::DegenerateRegressor => SkipReason::DegenerateRegressor,
            other => SkipReason::Other(other.to_string()),
        }
    }
}

/// A dropped (event, asset) pair. `asset` is `*` when the whole event was dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub event_id: String,
    pub asset: String,
    pub reason: SkipReason,
}

/// CAR rows ordered by (event date, event id, asset), plus the pairs that
/// were dropped and why.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CarTable {
    rows: Vec<CarResult>,
    skipped: Vec<Skipped>,
}

/// All rows belonging to one event.
#[derive(Debug, Clone, Copy)]
pub struct EventGroup<'a> {
    pub event_id: &'a str,
    pub date: NaiveDate,
    pub category: Category,
    pub rows: &'a [CarResult],
}

impl EventGroup<'_> {
    pub fn mean_car(&self) -> f64 {
        self.rows.iter().map(|r| r.car).sum::<f64>() / self.rows.len() as f64
    }

    pub fn cars(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.car).collect()
    }
}

impl CarTable {
    pub fn new(mut rows: Vec<CarResult>, skipped: Vec<Skipped>) -> Self {
        rows.sort_by(|a, b| (a.event_date, &a.event_id, &a.asset).cmp(&(b.event_date, &b.event_id, &b.asset)));
        Self { rows, skipped }
    }

    pub fn rows(&self) -> &[CarResult] {
        &self.rows
    }

    pub fn skipped(&self) -> &[Skipped] {
        &self.skipped
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows partitioned by event, in table order.
    pub fn event_groups(&self) -> Vec<EventGroup<'_>> {
        self.rows
            .chunk_by(|a, b| a.event_id == b.event_id)
            .map(|rows| EventGroup {
                event_id: &rows[0].event_id,
                date: rows[0].event_date,
                category: rows[0].category,
                rows,
            })
            .collect()
    }

    pub fn groups_in(&self, category: Category) -> Vec<EventGroup<'_>> {
        self.event_groups().into_iter().filter(|g| g.category == category).collect()
    }

    pub fn n_events(&self, category: Category) -> usize {
        self.groups_in(category).len()
    }

    pub fn n_obs(&self, category: Category) -> usize {
        self.rows.iter().filter(|r| r.category == category).count()
    }

    pub fn filter(&self, mut keep: impl FnMut(&CarResult) -> bool) -> CarTable {
        CarTable {
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
            skipped: self.skipped.clone(),
        }
    }

    /// Distinct assets, sorted.
    pub fn assets(&self) -> Vec<String> {
        let mut assets: Vec<String> = self.rows.iter().map(|r| r.asset.clone()).collect();
        assets.sort();
        assets.dedup();
        assets
    }
}

pub const CAR_TABLE_HEADER: [&str; 9] = [
    "event_id",
    "asset",
    "category",
    "model",
    "tau1",
    "tau2",
    "car",
    "sigma_car",
    "significant",
];

pub fn write_car_table<W: Write>(table: &CarTable, writer: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CAR_TABLE_HEADER)?;
    for r in table.rows() {
        wtr.write_record([
            r.event_id.clone(),
            r.asset.clone(),
            r.category.to_string(),
            r.model().to_string(),
            r.window.start.to_string(),
            r.window.end.to_string(),
            r.car.to_string(),
            r.sigma_car.to_string(),
            r.significant.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Cumulative average abnormal return by day offset over the rows of one category.
pub fn cumulative_average_path(table: &CarTable, category: Category) -> Vec<(i32, f64)> {
    let mut by_day: std::collections::BTreeMap<i32, (f64, usize)> = Default::default();
    for r in table.rows().iter().filter(|r| r.category == category) {
        for (k, ar) in &r.abnormal {
            let cell = by_day.entry(*k).or_default();
            cell.0 += ar;
            cell.1 += 1;
        }
    }
    let mut acc = 0.0;
    by_day
        .into_iter()
        .map(|(k, (sum, n))| {
            acc += sum / n as f64;
            (k, acc)
        })
        .collect()
}

/// Fits and CARs for every analyzable (event, asset) pair.
///
/// Returns are capped before fitting when `cap` is set (the proxy too).
/// Excluded-category events and pairs without enough data are recorded in
/// the table's skip list. Pairs run in parallel; the result order does not
/// depend on scheduling.
pub fn event_panel_cars(
    panel: &ReturnPanel,
    events: &EventSet,
    cfg: &WindowConfig,
    model: &ModelSpec,
    cap: Option<f64>,
) -> Result<CarTable, CarError> {
    cfg.validate()?;
    let panel = winsorize(panel, cap)?;
    let assets = panel.assets();
    let series: Vec<Series> = assets.iter().map(|a| panel.series(a).expect("asset in panel")).collect();

    // (proxy series, asset uses constant mean)
    let proxies: Vec<Option<Series>> = match model {
        ModelSpec::ConstantMean => vec![None; assets.len()],
        ModelSpec::MarketProxy(proxy) => {
            let p = panel
                .series(proxy)
                .ok_or_else(|| CarError::InvalidArgument(format!("proxy asset {proxy} not in panel")))?;
            assets.iter().map(|a| (a != proxy).then(|| p.clone())).collect()
        }
        ModelSpec::MarketEw => assets
            .iter()
            .map(|a| build_ew_proxy(&panel, a).map(Some))
            .collect::<Result<_, _>>()?,
    };

    let mut skipped = Vec::new();
    let mut jobs: Vec<(&Event, usize)> = Vec::new();
    for e in events {
        if !e.category.is_analyzable() {
            skipped.push(Skipped {
                event_id: e.id.clone(),
                asset: "*".into(),
                reason: SkipReason::ExcludedCategory,
            });
            continue;
        }
        jobs.extend((0..assets.len()).map(|a| (e, a)));
    }

    let outcomes: Vec<Result<CarResult, Skipped>> = jobs
        .par_iter()
        .map(|&(event, a)| {
            let returns = &series[a];
            let proxy = proxies[a].as_ref();
            let run = || -> Result<CarResult, CarError> {
                let fit = match proxy {
                    None => fit_constant_mean(returns, event.date, cfg)?,
                    Some(p) => fit_market_model(returns, p, event.date, cfg)?,
                };
                let wc = compute_car(&fit, returns, proxy, event.date, cfg.event_window)?;
                Ok(CarResult {
                    event_id: event.id.clone(),
                    event_date: event.date,
                    asset: assets[a].clone(),
                    category: event.category,
                    window: cfg.event_window,
                    car: wc.car,
                    sigma_car: wc.sigma_car,
                    n_days: wc.n_days,
                    significant: wc.significant,
                    fit,
                    abnormal: wc.abnormal,
                })
            };
            run().map_err(|e| Skipped {
                event_id: event.id.clone(),
                asset: assets[a].clone(),
                reason: e.into(),
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(skip) => skipped.push(skip),
        }
    }
    Ok(CarTable::new(rows, skipped))
}
