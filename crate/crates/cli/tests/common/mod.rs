#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use eventkit_cli::{run, Cli};
use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

/// Daily closes for `assets` driven by one common factor with correlation `rho`.
pub fn write_prices(path: &Path, assets: &[&str], start: NaiveDate, n_days: usize, rho: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 0.03).unwrap();
    let mut px = vec![100.0; assets.len()];
    let mut s = String::from("asset,date,open,high,low,close,volume\n");
    for t in 0..n_days {
        let d = start + Days::new(t as u64);
        let m = z.sample(&mut rng);
        for (i, a) in assets.iter().enumerate() {
            px[i] *= 1.0 + rho.sqrt() * m + (1.0 - rho).sqrt() * z.sample(&mut rng);
            let c = px[i];
            s.push_str(&format!("{a},{d},{c},{c},{c},{c},1000\n"));
        }
    }
    fs::write(path, s).unwrap();
}

/// Registry rows as `(id, date, category, selection)`.
pub fn write_events(path: &Path, rows: &[(&str, &str, &str, &str)]) {
    let mut s = String::from("id,date,name,category,selection,impact_usd,affected_users,tags\n");
    for (id, d, c, sel) in rows {
        s.push_str(&format!("{id},{d},{id},{c},{sel},,,\n"));
    }
    fs::write(path, s).unwrap();
}

/// A four-asset panel over 2019-2023 with a handful of events in each group.
pub fn toy_study(dir: &Path) -> (PathBuf, PathBuf) {
    let prices = dir.join("prices.csv");
    let events = dir.join("events.csv");
    write_prices(&prices, &["BTC", "ETH", "SOL", "ADA"], date("2019-01-01"), 1800, 0.85, 11);
    let mut rows = Vec::new();
    let specs = [
        ("Infra_Neg", "2020-03-02"),
        ("Reg_Neg", "2020-04-06"),
        ("Infra_Pos", "2020-05-04"),
        ("Reg_Pos", "2020-06-01"),
    ];
    let ids: Vec<String> = (0..20).map(|i| format!("ev-{i:02}")).collect();
    let dates: Vec<String> = (0..20)
        .map(|i| {
            let (_, base) = specs[i % 4];
            (date(base) + Days::new((i / 4) as u64 * 200)).to_string()
        })
        .collect();
    for i in 0..20 {
        rows.push((ids[i].as_str(), dates[i].as_str(), specs[i % 4].0, "Exogenous"));
    }
    write_events(&events, &rows);
    (prices, events)
}

/// Runs the CLI in-process with `args` (program name excluded).
pub fn invoke(args: &[&str]) -> anyhow::Result<String> {
    let cli = Cli::try_parse_from(std::iter::once("eventkit").chain(args.iter().copied()))?;
    run(&cli, None)
}

/// `(file name, bytes)` for every file in `dir`, sorted by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}
