//! Correlated-return simulator and a Monte Carlo study of test size and
//! interval coverage when asset CARs cluster by event.
//!
//! Daily returns follow one common factor:
//! `r_it = sd * (sqrt(rho) f_t + sqrt(1 - rho) e_it)` with standard normal
//! `f` and `e`, so any two assets correlate at exactly `rho`.

use chrono::{Days, NaiveDate};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::abnormal::{event_panel_cars, CarError, ModelSpec, WindowConfig};
use crate::events::{Category, Event, EventSet, RegistryError, Selection};
use crate::inference::{bootstrap_clusters_mean, clusters, one_sample_t, BootstrapConfig, InferenceError, WeightingScheme};
use crate::ingest::ReturnPanel;
use crate::rng::{mix_seed, substream};
use crate::stats;

pub const MIN_STUDY_TRIALS: usize = 200;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{n_events} events need {needed} calendar days, only {available} available")]
    Infeasible {
        n_events: usize,
        needed: usize,
        available: usize,
    },
    #[error(transparent)]
    Car(#[from] CarError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub n_assets: usize,
    pub n_events: usize,
    /// Pairwise correlation of daily returns, in `[0, 1)`.
    pub rho: f64,
    pub daily_sd: f64,
    /// Added to every asset's return on each event-window day.
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub window: WindowConfig,
    /// Calendar length of each simulated panel; `None` uses the tightest layout.
    pub calendar_days: Option<usize>,
    pub alpha: f64,
    pub replications: usize,
    pub scheme: WeightingScheme,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n_assets: 4,
            n_events: 8,
            rho: 0.9,
            daily_sd: 0.03,
            delta: 0.0,
            trials: 500,
            seed: 42,
            window: WindowConfig::default(),
            calendar_days: None,
            alpha: 0.05,
            replications: 1000,
            scheme: WeightingScheme::ObservationWeighted,
        }
    }
}

/// Panel start date for every simulated trial.
pub fn sim_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

struct Layout {
    first: usize,
    spacing: usize,
    needed: usize,
}

impl SimSpec {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: String| Err(CalibrationError::InvalidArgument(m));
        if self.n_assets == 0 || self.n_events == 0 {
            return bad("need at least one asset and one event".into());
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho {} outside [0, 1)", self.rho));
        }
        if !(self.daily_sd > 0.0 && self.daily_sd.is_finite()) {
            return bad(format!("daily sd {} must be positive", self.daily_sd));
        }
        if !self.delta.is_finite() {
            return bad("delta must be finite".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        self.window.validate()?;
        Ok(())
    }

    /// Events sit `spacing` days apart, with a full estimation window before
    /// the first one, so no estimation window reaches back into an earlier
    /// event window.
    fn layout(&self) -> Result<Layout, CalibrationError> {
        let w = &self.window;
        let anchor = (w.gap_length as i64).max(-i64::from(w.event_window.start)) as usize;
        let tail = w.event_window.end.max(0) as usize;
        let first = w.estimation_length + anchor;
        let spacing = first + tail + 1;
        let needed = first + (self.n_events - 1) * spacing + tail + 1;
        if let Some(available) = self.calendar_days {
            if available < needed {
                return Err(CalibrationError::Infeasible {
                    n_events: self.n_events,
                    needed,
                    available,
                });
            }
        }
        Ok(Layout { first, spacing, needed })
    }

    /// Expected CAR per asset: `delta` times the window length.
    pub fn true_car(&self) -> f64 {
        self.delta * self.window.event_window.len() as f64
    }
}

/// One simulated panel and its events, determined by `(spec.seed, trial)`.
pub fn simulate_panel(spec: &SimSpec, trial: usize) -> Result<(ReturnPanel, EventSet), CalibrationError> {
    spec.validate()?;
    let layout = spec.layout()?;
    let n_days = spec.calendar_days.unwrap_or(layout.needed);
    let start = sim_start();
    let dates: Vec<NaiveDate> = (0..n_days).map(|i| start + Days::new(i as u64)).collect();

    let mut rng = substream(spec.seed, trial as u64);
    let (load, idio) = (spec.rho.sqrt(), (1.0 - spec.rho).sqrt());
    let mut columns = vec![Vec::with_capacity(n_days); spec.n_assets];
    for _ in 0..n_days {
        let f: f64 = StandardNormal.sample(&mut rng);
        for col in columns.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            col.push(spec.daily_sd * (load * f + idio * e));
        }
    }

    let window = spec.window.event_window;
    let mut events = Vec::with_capacity(spec.n_events);
    for k in 0..spec.n_events {
        let day = layout.first + k * layout.spacing;
        for offset in window.offsets() {
            let t = day as i64 + i64::from(offset);
            if (0..n_days as i64).contains(&t) {
                for col in columns.iter_mut() {
                    col[t as usize] += spec.delta;
                }
            }
        }
        let mut e = Event::new(format!("sim-{:03}", k + 1), dates[day], Category::InfraNegative);
        e.selection = Selection::Exogenous;
        events.push(e);
    }

    let assets = (1..=spec.n_assets).map(|i| format!("A{i:02}")).collect();
    let columns = columns.into_iter().map(|c| c.into_iter().map(Some).collect()).collect();
    let panel = ReturnPanel::from_columns(assets, dates, columns).map_err(CarError::from)?;
    Ok((panel, EventSet::new(events, None)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub estimate: f64,
    pub naive_reject: bool,
    pub bootstrap_reject: bool,
    pub covered: bool,
}

/// Runs the CAR pipeline on one simulated panel and applies both tests.
pub fn run_trial(spec: &SimSpec, trial: usize) -> Result<TrialOutcome, CalibrationError> {
    let (panel, events) = simulate_panel(spec, trial)?;
    let table = event_panel_cars(&panel, &events, &spec.window, &ModelSpec::ConstantMean, None)?;
    let pooled: Vec<f64> = table.rows().iter().map(|r| r.car).collect();
    let naive = one_sample_t(&pooled)?;
    let cfg = BootstrapConfig {
        replications: spec.replications,
        seed: mix_seed(spec.seed, trial as u64),
        ci_level: 1.0 - spec.alpha,
    };
    let boot = bootstrap_clusters_mean(&clusters(&table, Category::InfraNegative), spec.scheme, &cfg)?;
    let truth = spec.true_car();
    Ok(TrialOutcome {
        estimate: boot.estimate,
        naive_reject: naive.p_value < spec.alpha,
        bootstrap_reject: boot.p_value < spec.alpha,
        covered: boot.ci_low <= truth && truth <= boot.ci_high,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub trials: usize,
    /// Share of trials where a one-sample t test on all pooled asset CARs rejects.
    pub naive_rejection_rate: f64,
    /// Share of trials where the event-level bootstrap p falls below alpha.
    pub bootstrap_rejection_rate: f64,
    /// Share of trials whose bootstrap interval contains the true CAR.
    pub bootstrap_ci_coverage: f64,
    pub mean_estimate: f64,
    /// Monte Carlo standard error of `mean_estimate`.
    pub estimate_mc_se: f64,
    pub true_car: f64,
    /// Share of trials where both tests reach the same decision.
    pub agreement_rate: f64,
}

/// Size and coverage over `spec.trials` simulated panels. Trials run in
/// parallel; each depends only on `(seed, trial)`.
pub fn coverage_study(spec: &SimSpec) -> Result<CoverageReport, CalibrationError> {
    spec.validate()?;
    if spec.trials < MIN_STUDY_TRIALS {
        return Err(CalibrationError::InvalidArgument(format!(
            "{} trials requested, at least {MIN_STUDY_TRIALS} required",
            spec.trials
        )));
    }
    spec.layout()?;
    let outcomes = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(spec, t))
        .collect::<Result<Vec<_>, _>>()?;
    let n = outcomes.len() as f64;
    let share = |f: fn(&TrialOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / n;
    let estimates: Vec<f64> = outcomes.iter().map(|o| o.estimate).collect();
    Ok(CoverageReport {
        trials: outcomes.len(),
        naive_rejection_rate: share(|o| o.naive_reject),
        bootstrap_rejection_rate: share(|o| o.bootstrap_reject),
        bootstrap_ci_coverage: share(|o| o.covered),
        mean_estimate: stats::mean(&estimates),
        estimate_mc_se: stats::sample_sd(&estimates) / n.sqrt(),
        true_car: spec.true_car(),
        agreement_rate: share(|o| o.naive_reject == o.bootstrap_reject),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_keeps_estimation_clear_of_events() {
        let spec = SimSpec::default();
        let (panel, events) = simulate_panel(&spec, 0).unwrap();
        let days: Vec<NaiveDate> = events.iter().map(|e| e.date).collect();
        for pair in days.windows(2) {
            let est_start = pair[1] - Days::new(30 + 1 + 249);
            assert!(est_start > pair[0] + Days::new(30));
        }
        assert_eq!(panel.dates().len(), 280 + 7 * 311 + 31);
    }

    #[test]
    fn too_short_calendar_is_infeasible() {
        let spec = SimSpec {
            calendar_days: Some(1000),
            ..SimSpec::default()
        };
        assert!(matches!(simulate_panel(&spec, 0), Err(CalibrationError::Infeasible { .. })));
    }

    #[test]
    fn deterministic_per_trial() {
        let spec = SimSpec::default();
        let a = simulate_panel(&spec, 3).unwrap().0;
        let b = simulate_panel(&spec, 3).unwrap().0;
        let c = simulate_panel(&spec, 4).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn study_needs_enough_trials() {
        let spec = SimSpec {
            trials: 10,
            ..SimSpec::default()
        };
        assert!(coverage_study(&spec).is_err());
    }
}
