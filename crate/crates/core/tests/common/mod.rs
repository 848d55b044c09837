#![allow(dead_code)]

use chrono::{Days, NaiveDate};
use eventkit::abnormal::{CarResult, CarTable, Benchmark, ModelFit};
use eventkit::{Category, Event, EventSet, EventWindow, ReturnPanel, Series};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

pub fn calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    (0..n).map(|i| start + Days::new(i as u64)).collect()
}

pub fn series(start: NaiveDate, values: &[f64]) -> Series {
    Series::new(calendar(start, values.len()), values.iter().map(|v| Some(*v)).collect())
}

/// Gaussian-ish returns with a common component and optional holes.
pub fn random_panel(seed: u64, n_assets: usize, n_days: usize, missing: f64) -> ReturnPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let common: Vec<f64> = (0..n_days).map(|_| rng.random_range(-0.03..0.03)).collect();
    let columns = (0..n_assets)
        .map(|_| {
            let beta = rng.random_range(0.5..1.5);
            common
                .iter()
                .map(|c| {
                    let r = beta * c + rng.random_range(-0.02..0.02);
                    (rng.random::<f64>() >= missing).then_some(r)
                })
                .collect()
        })
        .collect();
    let assets = (0..n_assets).map(|i| format!("X{i}")).collect();
    ReturnPanel::from_columns(assets, calendar(date("2020-01-01"), n_days), columns).unwrap()
}

/// A table built straight from per-event CAR lists.
pub fn table_from(groups: &[(Category, Vec<f64>)]) -> CarTable {
    let base = date("2021-01-01");
    let mut rows = Vec::new();
    for (i, (category, cars)) in groups.iter().enumerate() {
        for (j, car) in cars.iter().enumerate() {
            rows.push(CarResult {
                event_id: format!("e{i:03}"),
                event_date: base + Days::new(i as u64),
                asset: format!("A{j}"),
                category: *category,
                window: EventWindow::new(0, 5).unwrap(),
                car: *car,
                sigma_car: 0.01,
                n_days: 6,
                significant: false,
                fit: ModelFit {
                    benchmark: Benchmark::ConstantMean { mean: 0.0 },
                    resid_sd: 0.01,
                    n_obs: 250,
                    estimation_start: base,
                    estimation_end: base,
                },
                abnormal: Vec::new(),
            });
        }
    }
    CarTable::new(rows, Vec::new())
}

pub fn events_on(dates: &[NaiveDate], category: Category) -> EventSet {
    let events = dates
        .iter()
        .enumerate()
        .map(|(i, d)| Event::new(format!("ev{i:03}"), *d, category))
        .collect();
    EventSet::new(events, None).unwrap()
}
