//! Robustness batteries: placebo events, leave-one-out, window and cap
//! sweeps, subsample filters and grouped decompositions.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::index;
use thiserror::Error;

use crate::abnormal::{event_panel_cars, CarError, CarTable, EventWindow, ModelSpec, WindowConfig};
use crate::events::{Category, Event, EventSet, RegistryError, Selection};
use crate::inference::{
    bootstrap_clusters_diff, clusters, permutation_test, BootstrapConfig, BootstrapResult, InferenceError,
    PermResult, WeightingScheme,
};
use crate::ingest::ReturnPanel;
use crate::rng::substream;

const WEEKDAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no eligible {weekday} dates: {needed} needed, {available} available")]
    Infeasible {
        weekday: Weekday,
        needed: usize,
        available: usize,
    },
    #[error("category {category} has {found} events, at least 2 required")]
    InsufficientEvents { category: Category, found: usize },
    #[error("{context}")]
    Inference {
        context: String,
        #[source]
        source: InferenceError,
    },
    #[error(transparent)]
    Car(#[from] CarError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

fn inference(context: impl Into<String>) -> impl FnOnce(InferenceError) -> RobustnessError {
    let context = context.into();
    move |source| RobustnessError::Inference { context, source }
}

// ---------------------------------------------------------------------------
// Placebos

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceboSpec {
    pub n_events: usize,
    /// Dates within this many days of any real event are ineligible.
    pub exclusion_horizon: u32,
    pub period: (NaiveDate, NaiveDate),
    /// Weekday counts (Monday first) to match. `None` uses the analyzable
    /// real events.
    pub weekday_target: Option<[usize; 7]>,
    pub seed: u64,
}

/// Weekday counts, Monday first.
pub fn weekday_histogram<'a>(events: impl IntoIterator<Item = &'a Event>) -> [usize; 7] {
    let mut h = [0; 7];
    for e in events {
        h[e.date.weekday().num_days_from_monday() as usize] += 1;
    }
    h
}

/// Largest-remainder apportionment of `n` seats over `weights`. Equal
/// remainders go to the earlier index (Monday first).
pub fn apportion(weights: &[usize; 7], n: usize) -> Result<[usize; 7], RobustnessError> {
    let total: usize = weights.iter().sum();
    if total == 0 {
        return Err(RobustnessError::InvalidArgument("weekday target histogram is empty".into()));
    }
    let mut seats = [0; 7];
    let mut remainders = [(0usize, 0usize); 7];
    for i in 0..7 {
        let share = n * weights[i];
        seats[i] = share / total;
        remainders[i] = (share % total, i);
    }
    let left = n - seats.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(left) {
        seats[i] += 1;
    }
    Ok(seats)
}

fn near_any(date: NaiveDate, sorted: &[NaiveDate], horizon: i64) -> bool {
    let i = sorted.partition_point(|d| *d < date);
    let close = |d: &NaiveDate| (date - *d).num_days().abs() <= horizon;
    sorted.get(i).is_some_and(close) || (i > 0 && close(&sorted[i - 1]))
}

/// Pseudo-events on non-event dates with the real events' weekday mix.
///
/// Each weekday stratum is sampled without replacement from its eligible
/// dates using its own substream, so the result depends only on the seed.
pub fn generate_placebos(real: &EventSet, spec: &PlaceboSpec) -> Result<EventSet, RobustnessError> {
    if spec.n_events == 0 {
        return Err(RobustnessError::InvalidArgument("placebo count must be positive".into()));
    }
    let (start, end) = spec.period;
    if start > end {
        return Err(RobustnessError::InvalidArgument(format!("placebo period {start}..{end} is empty")));
    }
    let target = match spec.weekday_target {
        Some(t) => t,
        None => weekday_histogram(real.iter().filter(|e| e.category.is_analyzable() && e.category != Category::Placebo)),
    };
    let quota = apportion(&target, spec.n_events)?;

    let mut real_dates: Vec<NaiveDate> = real.iter().map(|e| e.date).collect();
    real_dates.sort();
    let horizon = i64::from(spec.exclusion_horizon);
    let mut pools: [Vec<NaiveDate>; 7] = Default::default();
    for date in start.iter_days().take_while(|d| *d <= end) {
        if !near_any(date, &real_dates, horizon) {
            pools[date.weekday().num_days_from_monday() as usize].push(date);
        }
    }

    let mut picked = Vec::with_capacity(spec.n_events);
    for (w, pool) in pools.iter().enumerate() {
        if quota[w] > pool.len() {
            return Err(RobustnessError::Infeasible {
                weekday: WEEKDAYS[w],
                needed: quota[w],
                available: pool.len(),
            });
        }
        let mut rng = substream(spec.seed, w as u64);
        picked.extend(index::sample(&mut rng, pool.len(), quota[w]).into_iter().map(|i| pool[i]));
    }
    picked.sort();
    assert!(
        picked.iter().all(|d| !near_any(*d, &real_dates, horizon)),
        "placebo date inside an exclusion neighborhood"
    );

    let events = picked
        .into_iter()
        .enumerate()
        .map(|(i, date)| {
            let mut e = Event::new(format!("placebo-{:04}", i + 1), date, Category::Placebo);
            e.name = format!("Placebo {date}");
            e.selection = Selection::Exogenous;
            e
        })
        .collect();
    Ok(EventSet::new(events, Some(spec.period))?)
}

// ---------------------------------------------------------------------------
// Leave-one-out

#[derive(Debug, Clone, PartialEq)]
pub struct LooRow {
    pub event_id: String,
    /// The dropped event's mean CAR across assets.
    pub event_car: f64,
    pub mean_excluding: f64,
    /// `(mean_excluding - baseline) / |baseline|`.
    pub pct_change: f64,
    pub sign_flip: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooReport {
    pub category: Category,
    pub scheme: WeightingScheme,
    pub baseline: f64,
    pub rows: Vec<LooRow>,
}

/// Category mean recomputed with each event dropped in turn.
pub fn leave_one_out(
    table: &CarTable,
    category: Category,
    scheme: WeightingScheme,
) -> Result<LooReport, RobustnessError> {
    let groups = table.groups_in(category);
    if groups.len() < 2 {
        return Err(RobustnessError::InsufficientEvents {
            category,
            found: groups.len(),
        });
    }
    let cl = clusters(table, category);
    let baseline = scheme.statistic(cl.iter().map(Vec::as_slice));
    let rows = groups
        .iter()
        .enumerate()
        .map(|(skip, g)| {
            let rest = cl.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, c)| c.as_slice());
            let mean_excluding = scheme.statistic(rest);
            LooRow {
                event_id: g.event_id.to_string(),
                event_car: g.mean_car(),
                mean_excluding,
                pct_change: (mean_excluding - baseline) / baseline.abs(),
                sign_flip: mean_excluding.signum() != baseline.signum(),
            }
        })
        .collect();
    Ok(LooReport {
        category,
        scheme,
        baseline,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Group comparison shared by sweeps and subsamples

/// Which two categories are compared and how.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub group_a: Category,
    pub group_b: Category,
    pub scheme: WeightingScheme,
    pub bootstrap: BootstrapConfig,
    /// Exact permutation cutoff (and Monte Carlo draw count above it).
    pub max_exact: u64,
}

impl Default for Comparison {
    fn default() -> Self {
        Self {
            group_a: Category::InfraNegative,
            group_b: Category::RegNegative,
            scheme: WeightingScheme::ObservationWeighted,
            bootstrap: BootstrapConfig::default(),
            max_exact: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub category: Category,
    pub n_events: usize,
    pub n_obs: usize,
    pub mean: Option<f64>,
}

fn summaries(table: &CarTable, scheme: WeightingScheme) -> Vec<GroupSummary> {
    Category::ANALYZED
        .iter()
        .map(|&category| {
            let cl = clusters(table, category);
            GroupSummary {
                category,
                n_events: cl.len(),
                n_obs: cl.iter().map(Vec::len).sum(),
                mean: (!cl.is_empty()).then(|| scheme.statistic(cl.iter().map(Vec::as_slice))),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Sweeps

/// Everything needed to rerun the CAR pipeline under a changed setting.
#[derive(Debug, Clone)]
pub struct PipelineInputs<'a> {
    pub returns: &'a ReturnPanel,
    pub events: &'a EventSet,
    pub window: WindowConfig,
    pub model: ModelSpec,
    pub cap: Option<f64>,
    pub comparison: Comparison,
}

impl PipelineInputs<'_> {
    pub fn cars(&self) -> Result<CarTable, CarError> {
        event_panel_cars(self.returns, self.events, &self.window, &self.model, self.cap)
    }

    fn setting(&self, label: String) -> Result<SweepSetting, RobustnessError> {
        let table = self.cars()?;
        let cmp = &self.comparison;
        let a = clusters(&table, cmp.group_a);
        let b = clusters(&table, cmp.group_b);
        let diff = if a.len() >= 2 && b.len() >= 2 {
            Some(bootstrap_clusters_diff(&a, &b, cmp.scheme, &cmp.bootstrap).map_err(inference(label.clone()))?)
        } else {
            None
        };
        Ok(SweepSetting {
            label,
            groups: summaries(&table, cmp.scheme),
            diff,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSetting {
    pub label: String,
    pub groups: Vec<GroupSummary>,
    /// Bootstrap of the compared difference; `None` when a group has fewer than two events.
    pub diff: Option<BootstrapResult>,
}

impl SweepSetting {
    pub fn mean(&self, category: Category) -> Option<f64> {
        self.groups.iter().find(|g| g.category == category).and_then(|g| g.mean)
    }

    /// True when the difference is not significant at `alpha`.
    pub fn is_null(&self, alpha: f64) -> Option<bool> {
        self.diff.as_ref().map(|d| d.p_value >= alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axis: String,
    pub baseline: SweepSetting,
    pub settings: Vec<SweepSetting>,
    /// Per category: every setting's mean has the baseline mean's sign.
    pub sign_consistent: Vec<(Category, bool)>,
}

fn sweep(
    axis: &str,
    base: &PipelineInputs<'_>,
    base_label: String,
    runs: Vec<(String, PipelineInputs<'_>)>,
) -> Result<SweepReport, RobustnessError> {
    let baseline = base.setting(base_label)?;
    let settings = runs
        .into_iter()
        .map(|(label, inputs)| inputs.setting(label))
        .collect::<Result<Vec<_>, _>>()?;
    let sign_consistent = Category::ANALYZED
        .iter()
        .filter_map(|&c| {
            let sign = baseline.mean(c)?.signum();
            Some((c, settings.iter().filter_map(|s| s.mean(c)).all(|m| m.signum() == sign)))
        })
        .collect();
    Ok(SweepReport {
        axis: axis.to_string(),
        baseline,
        settings,
        sign_consistent,
    })
}

pub fn window_sweep(inputs: &PipelineInputs<'_>, windows: &[EventWindow]) -> Result<SweepReport, RobustnessError> {
    if windows.is_empty() {
        return Err(RobustnessError::InvalidArgument("window list is empty".into()));
    }
    let runs = windows
        .iter()
        .map(|&w| {
            let mut run = inputs.clone();
            run.window = inputs.window.with_window(w);
            (w.to_string(), run)
        })
        .collect();
    sweep("window", inputs, inputs.window.event_window.to_string(), runs)
}

pub fn cap_label(cap: Option<f64>) -> String {
    cap.map_or_else(|| "none".to_string(), |c| c.to_string())
}

pub fn cap_sweep(inputs: &PipelineInputs<'_>, caps: &[Option<f64>]) -> Result<SweepReport, RobustnessError> {
    if caps.is_empty() {
        return Err(RobustnessError::InvalidArgument("cap list is empty".into()));
    }
    let runs = caps
        .iter()
        .map(|&cap| {
            let mut run = inputs.clone();
            run.cap = cap;
            (cap_label(cap), run)
        })
        .collect();
    sweep("cap", inputs, cap_label(inputs.cap), runs)
}

// ---------------------------------------------------------------------------
// Subsamples

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubsampleFilter {
    /// Events admitted through the exogenous route (alone or with the return screen).
    ExogenousOnly,
    /// Events with no other event inside the overlap horizon.
    NonOverlapping,
    ExcludeIds(Vec<String>),
}

impl fmt::Display for SubsampleFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsampleFilter::ExogenousOnly => f.write_str("exogenous-only"),
            SubsampleFilter::NonOverlapping => f.write_str("non-overlapping"),
            SubsampleFilter::ExcludeIds(ids) => write!(f, "exclude:{}", ids.join(";")),
        }
    }
}

impl SubsampleFilter {
    pub fn keeps(&self, event: &Event) -> bool {
        match self {
            SubsampleFilter::ExogenousOnly => event.selection.is_exogenous(),
            SubsampleFilter::NonOverlapping => event.overlap_ids.is_empty(),
            SubsampleFilter::ExcludeIds(ids) => !ids.contains(&event.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleReport {
    pub filter: SubsampleFilter,
    pub groups: Vec<GroupSummary>,
    pub diff: BootstrapResult,
    pub permutation: PermResult,
}

/// Reruns the comparison on the rows whose event passes `filter`. The
/// permutation test uses event-level means.
pub fn subsample_run(
    table: &CarTable,
    events: &EventSet,
    filter: &SubsampleFilter,
    cmp: &Comparison,
) -> Result<SubsampleReport, RobustnessError> {
    let kept = table.filter(|r| events.get(&r.event_id).is_some_and(|e| filter.keeps(e)));
    let a = clusters(&kept, cmp.group_a);
    let b = clusters(&kept, cmp.group_b);
    let context = |c: Category| format!("filter {filter}, group {c}");
    for (c, cl) in [(cmp.group_a, &a), (cmp.group_b, &b)] {
        if cl.len() < 2 {
            return Err(RobustnessError::Inference {
                context: context(c),
                source: InferenceError::InsufficientClusters {
                    group: c.token().into(),
                    found: cl.len(),
                    required: 2,
                },
            });
        }
    }
    let diff = bootstrap_clusters_diff(&a, &b, cmp.scheme, &cmp.bootstrap).map_err(inference(filter.to_string()))?;
    let means = |cl: &[Vec<f64>]| cl.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect::<Vec<_>>();
    let permutation = permutation_test(&means(&a), &means(&b), cmp.max_exact, cmp.bootstrap.seed)
        .map_err(inference(filter.to_string()))?;
    Ok(SubsampleReport {
        filter: filter.clone(),
        groups: summaries(&kept, cmp.scheme),
        diff,
        permutation,
    })
}

// ---------------------------------------------------------------------------
// Decomposition

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecomposeBy {
    /// Rows are categories, cells are assets.
    Asset,
    /// One row, cells are categories.
    Category,
    /// Rows are categories, cells are event tags; untagged events go to `untagged`.
    Tag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub key: String,
    pub n_obs: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionRow {
    pub label: String,
    pub n_obs: usize,
    pub overall_mean: f64,
    pub cells: Vec<Cell>,
    /// Max minus min cell mean.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub by: DecomposeBy,
    pub rows: Vec<DecompositionRow>,
}

fn decomposition_row(label: String, pairs: impl Iterator<Item = (String, f64)>) -> DecompositionRow {
    let mut cells: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let (mut total, mut n) = (0.0, 0);
    for (key, car) in pairs {
        let cell = cells.entry(key).or_default();
        cell.0 += car;
        cell.1 += 1;
        total += car;
        n += 1;
    }
    let cells: Vec<Cell> = cells
        .into_iter()
        .map(|(key, (sum, n_obs))| Cell {
            key,
            n_obs,
            mean: sum / n_obs as f64,
        })
        .collect();
    let max = cells.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
    let min = cells.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min);
    DecompositionRow {
        label,
        n_obs: n,
        overall_mean: total / n as f64,
        cells,
        spread: max - min,
    }
}

/// Mean CAR per cell with the max-min spread per row. Rows cover the
/// categories present in the table, in reporting order.
pub fn group_decompose(table: &CarTable, events: &EventSet, by: DecomposeBy) -> Decomposition {
    let mut present: Vec<Category> = table.rows().iter().map(|r| r.category).collect();
    present.sort();
    present.dedup();
    let rows = match by {
        DecomposeBy::Category if !table.is_empty() => vec![decomposition_row(
            "all".into(),
            table.rows().iter().map(|r| (r.category.token().to_string(), r.car)),
        )],
        DecomposeBy::Category => Vec::new(),
        DecomposeBy::Asset => present
            .iter()
            .map(|&c| {
                let rows = table.rows().iter().filter(|r| r.category == c);
                decomposition_row(c.token().into(), rows.map(|r| (r.asset.clone(), r.car)))
            })
            .collect(),
        DecomposeBy::Tag => present
            .iter()
            .map(|&c| {
                let pairs = table.rows().iter().filter(|r| r.category == c).flat_map(|r| {
                    let tags = events.get(&r.event_id).map(|e| e.tags.clone()).unwrap_or_default();
                    let tags = if tags.is_empty() { vec!["untagged".to_string()] } else { tags };
                    tags.into_iter().map(move |t| (t, r.car))
                });
                decomposition_row(c.token().into(), pairs)
            })
            .collect(),
    };
    Decomposition { by, rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn apportionment() {
        assert_eq!(apportion(&[1, 1, 1, 0, 0, 0, 0], 200).unwrap(), [67, 67, 66, 0, 0, 0, 0]);
        assert_eq!(apportion(&[3, 0, 0, 0, 1, 0, 0], 8).unwrap(), [6, 0, 0, 0, 2, 0, 0]);
        assert_eq!(apportion(&[1; 7], 3).unwrap(), [1, 1, 1, 0, 0, 0, 0]);
        assert!(apportion(&[0; 7], 3).is_err());
    }

    fn toy_registry() -> EventSet {
        EventSet::new(
            vec![
                Event::new("a", d("2020-03-12"), Category::InfraNegative),
                Event::new("b", d("2021-05-21"), Category::RegNegative),
                Event::new("c", d("2022-11-11"), Category::InfraNegative),
            ],
            Some((d("2019-01-01"), d("2025-06-30"))),
        )
        .unwrap()
    }

    #[test]
    fn placebos_avoid_events_and_repeat() {
        let real = toy_registry();
        let spec = PlaceboSpec {
            n_events: 200,
            exclusion_horizon: 30,
            period: (d("2019-01-01"), d("2025-06-30")),
            weekday_target: None,
            seed: 42,
        };
        let p = generate_placebos(&real, &spec).unwrap();
        assert_eq!(p.len(), 200);
        for e in &p {
            assert_eq!(e.category, Category::Placebo);
            for r in &real {
                assert!((e.date - r.date).num_days().abs() > 30);
            }
        }
        assert_eq!(weekday_histogram(&p), apportion(&weekday_histogram(&real), 200).unwrap());
        assert_eq!(p, generate_placebos(&real, &spec).unwrap());
        assert_eq!(p.events()[0].id, "placebo-0001");
    }

    #[test]
    fn placebo_pool_can_run_dry() {
        let real = toy_registry();
        let spec = PlaceboSpec {
            n_events: 5,
            exclusion_horizon: 5000,
            period: (d("2019-01-01"), d("2025-06-30")),
            weekday_target: None,
            seed: 1,
        };
        assert!(matches!(generate_placebos(&real, &spec), Err(RobustnessError::Infeasible { .. })));
    }
}
