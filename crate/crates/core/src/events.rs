//! Event registry: loading, the 4-category classification, selection audit
//! and overlap annotation.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::ingest::Series;

pub const EVENT_HEADER: [&str; 8] = [
    "id",
    "date",
    "name",
    "category",
    "selection",
    "impact_usd",
    "affected_users",
    "tags",
];

/// Financial impact above which an event qualifies on its own (USD).
pub const IMPACT_USD_THRESHOLD: f64 = 1e8;
/// Affected-user count above which an event qualifies on its own.
pub const AFFECTED_USERS_THRESHOLD: u64 = 100_000;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {message}")]
    Validation { line: u64, message: String },
    #[error("duplicate event id {0}")]
    Conflict(String),
    #[error("event {id} dated {date} lies outside the study period {start}..={end}")]
    OutOfPeriod {
        id: String,
        date: NaiveDate,
        start: NaiveDate,
        end: NaiveDate,
    },
    #[error("write failed: {0}")]
    Write(String),
}

/// Type x valence classification. `Excluded` events stay in the registry but
/// never enter an analysis; `Placebo` marks generated pseudo-events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    InfraNegative,
    InfraPositive,
    RegNegative,
    RegPositive,
    Excluded,
    Placebo,
}

impl Category {
    /// The four substantive categories, in reporting order.
    pub const ANALYZED: [Category; 4] = [
        Category::InfraNegative,
        Category::InfraPositive,
        Category::RegNegative,
        Category::RegPositive,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Category::InfraNegative => "Infra_Neg",
            Category::InfraPositive => "Infra_Pos",
            Category::RegNegative => "Reg_Neg",
            Category::RegPositive => "Reg_Pos",
            Category::Excluded => "Excluded",
            Category::Placebo => "Placebo",
        }
    }

    pub fn is_analyzable(self) -> bool {
        self != Category::Excluded
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Infra_Neg" => Ok(Category::InfraNegative),
            "Infra_Pos" => Ok(Category::InfraPositive),
            "Reg_Neg" => Ok(Category::RegNegative),
            "Reg_Pos" => Ok(Category::RegPositive),
            "Excluded" => Ok(Category::Excluded),
            "Placebo" => Ok(Category::Placebo),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

/// Which inclusion route admitted the event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selection {
    Exogenous,
    ReturnThreshold,
    Both,
}

impl Selection {
    pub fn token(self) -> &'static str {
        match self {
            Selection::Exogenous => "Exogenous",
            Selection::ReturnThreshold => "Return",
            Selection::Both => "Both",
        }
    }

    /// True unless the event entered through the return threshold alone.
    pub fn is_exogenous(self) -> bool {
        self != Selection::ReturnThreshold
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Exogenous" => Ok(Selection::Exogenous),
            "Return" => Ok(Selection::ReturnThreshold),
            "Both" => Ok(Selection::Both),
            other => Err(format!("unknown selection {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub id: String,
    pub date: NaiveDate,
    pub name: String,
    pub category: Category,
    pub selection: Selection,
    pub impact_usd: Option<f64>,
    pub affected_users: Option<u64>,
    /// Ids of other events within the overlap horizon; filled by [`detect_overlaps`].
    pub overlap_ids: Vec<String>,
    pub tags: Vec<String>,
}

impl Event {
    pub fn new(id: impl Into<String>, date: NaiveDate, category: Category) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id,
            date,
            category,
            selection: Selection::Exogenous,
            impact_usd: None,
            affected_users: None,
            overlap_ids: Vec::new(),
            tags: Vec::new(),
        }
    }
}

/// Events sorted by `(date, id)` with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSet {
    events: Vec<Event>,
    study_period: Option<(NaiveDate, NaiveDate)>,
}

impl EventSet {
    /// Validates id uniqueness and, when a study period is given, that every
    /// event falls inside it. Without a period the span of the event dates is used.
    pub fn new(mut events: Vec<Event>, study_period: Option<(NaiveDate, NaiveDate)>) -> Result<Self, RegistryError> {
        let mut seen = HashSet::new();
        for e in &events {
            if !seen.insert(e.id.as_str()) {
                return Err(RegistryError::Conflict(e.id.clone()));
            }
        }
        events.sort_by(|a, b| (a.date, &a.id).cmp(&(b.date, &b.id)));
        let period = match study_period {
            Some((start, end)) => {
                if let Some(e) = events.iter().find(|e| e.date < start || e.date > end) {
                    return Err(RegistryError::OutOfPeriod {
                        id: e.id.clone(),
                        date: e.date,
                        start,
                        end,
                    });
                }
                Some((start, end))
            }
            None => match (events.first(), events.last()) {
                (Some(first), Some(last)) => Some((first.date, last.date)),
                _ => None,
            },
        };
        Ok(Self {
            events,
            study_period: period,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn study_period(&self) -> Option<(NaiveDate, NaiveDate)> {
        self.study_period
    }

    pub fn get(&self, id: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.id == id)
    }

    /// Subset keeping the study period. Overlap annotations are left as they were.
    pub fn filter(&self, mut keep: impl FnMut(&Event) -> bool) -> EventSet {
        EventSet {
            events: self.events.iter().filter(|e| keep(e)).cloned().collect(),
            study_period: self.study_period,
        }
    }

    pub fn count(&self, category: Category) -> usize {
        self.events.iter().filter(|e| e.category == category).count()
    }
}

impl<'a> IntoIterator for &'a EventSet {
    type Item = &'a Event;
    type IntoIter = std::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

pub fn load_events(path: &Path) -> Result<EventSet, RegistryError> {
    let file = File::open(path).map_err(|source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_events(file)
}

pub fn read_events<R: Read>(reader: R) -> Result<EventSet, RegistryError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| RegistryError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(EVENT_HEADER.iter().copied()) {
        return Err(RegistryError::Parse {
            line: 1,
            message: format!("expected header {}", EVENT_HEADER.join(",")),
        });
    }

    let mut events = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| RegistryError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let invalid = |message: String| RegistryError::Validation { line, message };
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(invalid("empty event id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(RegistryError::Conflict(id));
        }
        let date = NaiveDate::parse_from_str(&record[1], "%Y-%m-%d").map_err(|e| RegistryError::Parse {
            line,
            message: format!("bad date {:?}: {e}", &record[1]),
        })?;
        let category = record[3].parse::<Category>().map_err(invalid)?;
        let selection = record[4].parse::<Selection>().map_err(invalid)?;
        let impact_usd = match &record[5] {
            "" => None,
            s => match s.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => Some(v),
                _ => return Err(invalid(format!("impact_usd must be a nonnegative amount, got {s:?}"))),
            },
        };
        let affected_users = match &record[6] {
            "" => None,
            s => Some(
                s.parse::<u64>()
                    .map_err(|_| invalid(format!("affected_users must be a nonnegative count, got {s:?}")))?,
            ),
        };
        let tags = record[7]
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect();
        events.push(Event {
            id,
            date,
            name: record[2].to_string(),
            category,
            selection,
            impact_usd,
            affected_users,
            overlap_ids: Vec::new(),
            tags,
        });
    }
    EventSet::new(events, None)
}

pub fn write_events<W: Write>(set: &EventSet, writer: W) -> Result<(), RegistryError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let werr = |e: csv::Error| RegistryError::Write(e.to_string());
    wtr.write_record(EVENT_HEADER).map_err(werr)?;
    for e in set {
        wtr.write_record([
            e.id.clone(),
            e.date.format("%Y-%m-%d").to_string(),
            e.name.clone(),
            e.category.token().to_string(),
            e.selection.token().to_string(),
            e.impact_usd.map(|v| v.to_string()).unwrap_or_default(),
            e.affected_users.map(|v| v.to_string()).unwrap_or_default(),
            e.tags.join(";"),
        ])
        .map_err(werr)?;
    }
    wtr.flush().map_err(|e| RegistryError::Write(e.to_string()))
}

/// Annotates every pair of distinct events at most `horizon_days` apart,
/// across all categories. Existing annotations are replaced.
pub fn detect_overlaps(set: &EventSet, horizon_days: u32) -> EventSet {
    let horizon = i64::from(horizon_days);
    let mut events = set.events.clone();
    for e in &mut events {
        e.overlap_ids.clear();
    }
    let n = events.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (events[j].date - events[i].date).num_days().abs();
            if gap <= horizon {
                let (a, b) = (events[i].id.clone(), events[j].id.clone());
                events[i].overlap_ids.push(b);
                events[j].overlap_ids.push(a);
            }
        }
    }
    EventSet {
        events,
        study_period: set.study_period,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub event_id: String,
    pub same_day_return: Option<f64>,
    /// Compound return over event days 0, +1, +2.
    pub three_day_return: Option<f64>,
    pub met_same_day: bool,
    pub met_three_day: bool,
    pub met_impact: bool,
    pub met_users: bool,
    pub qualifies: bool,
    /// False when the BTC series lacks a needed day.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionAudit {
    pub rows: Vec<AuditRow>,
}

/// Re-checks the four impact criteria for every event against the BTC
/// return series. Missing BTC days mark the row incomplete rather than failing.
pub fn audit_selection(set: &EventSet, btc_returns: &Series, threshold: f64) -> SelectionAudit {
    let rows = set
        .iter()
        .map(|e| {
            let day = |k: u64| btc_returns.get(e.date + chrono::Days::new(k));
            let same_day = day(0);
            let three_day = match (day(0), day(1), day(2)) {
                (Some(a), Some(b), Some(c)) => Some((1.0 + a) * (1.0 + b) * (1.0 + c) - 1.0),
                _ => None,
            };
            let met_same_day = same_day.is_some_and(|r| r.abs() > threshold);
            let met_three_day = three_day.is_some_and(|r| r.abs() > threshold);
            let met_impact = e.impact_usd.is_some_and(|v| v > IMPACT_USD_THRESHOLD);
            let met_users = e.affected_users.is_some_and(|v| v > AFFECTED_USERS_THRESHOLD);
            AuditRow {
                event_id: e.id.clone(),
                same_day_return: same_day,
                three_day_return: three_day,
                met_same_day,
                met_three_day,
                met_impact,
                met_users,
                qualifies: met_same_day || met_three_day || met_impact || met_users,
                complete: same_day.is_some() && three_day.is_some(),
            }
        })
        .collect();
    SelectionAudit { rows }
}
