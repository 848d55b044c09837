//! Command-line driver for the eventkit toolkit.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;

use std::path::PathBuf;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use eventkit::calibration::SimSpec;
use eventkit::power::PowerInput;
use eventkit::robustness::{DecomposeBy, SubsampleFilter};
use eventkit::Category;

use crate::commands::{Outcome, PermUnit, PlaceboArgs};
use crate::config::{RunConfig, SEED_ENV};

#[derive(Debug, Parser)]
#[command(name = "eventkit", version, about = "Event-study CARs with cluster-aware inference")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Each overrides the config file.
#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub prices: Option<PathBuf>,
    #[arg(long, global = true)]
    pub events: Option<PathBuf>,
    /// Comma-separated asset subset.
    #[arg(long, global = true)]
    pub assets: Option<String>,
    /// constant-mean, market-proxy:ASSET or market-ew.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Event window as T1:T2.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Winsorization cap as a fraction, or none.
    #[arg(long, global = true)]
    pub cap: Option<String>,
    /// observation or event.
    #[arg(long, global = true)]
    pub weighting: Option<String>,
    /// Bootstrap replications.
    #[arg(long = "B", global = true)]
    pub replications: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Confidence level.
    #[arg(long, global = true)]
    pub level: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UnitArg {
    Event,
    Observation,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ByArg {
    Asset,
    Category,
    Tag,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long, default_value = "Infra_Neg", value_parser = parse_category)]
    pub a: Category,
    #[arg(long, default_value = "Reg_Neg", value_parser = parse_category)]
    pub b: Category,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Abnormal returns and CARs for every (event, asset) pair.
    Cars,
    /// Event-block bootstrap of a category mean.
    Bootstrap {
        /// One category; all analyzed categories when omitted.
        #[arg(long, value_parser = parse_category)]
        category: Option<Category>,
    },
    /// Event-block bootstrap of a difference in category means.
    Diff(PairArgs),
    /// Two-sample permutation test.
    Permute {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, value_enum, default_value = "event")]
        unit: UnitArg,
    },
    /// Welch t on event-level means.
    Im(PairArgs),
    /// Weekday-matched placebo events away from real events.
    Placebo {
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Minimum distance in days from any registry event.
        #[arg(long, default_value_t = 30)]
        horizon: u32,
        /// Sampling period as START:END (YYYY-MM-DD); defaults to the price calendar.
        #[arg(long, value_parser = parse_period)]
        period: Option<(NaiveDate, NaiveDate)>,
    },
    /// Leave-one-out influence of each event on a category mean.
    Loo {
        #[arg(long, default_value = "Infra_Neg", value_parser = parse_category)]
        category: Category,
    },
    /// Rerun the comparison over several event windows.
    SweepWindow {
        #[arg(long, default_value = report::REPORT_WINDOWS, allow_hyphen_values = true)]
        windows: String,
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Rerun the comparison over several winsorization caps.
    SweepCap {
        #[arg(long, default_value = report::REPORT_CAPS)]
        caps: String,
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Rerun the comparison on filtered event subsets.
    Subsample {
        /// exogenous-only, non-overlapping or exclude:ID;ID. Repeatable.
        #[arg(long = "filter", value_parser = commands::parse_filter, default_values = ["exogenous-only", "non-overlapping"])]
        filters: Vec<SubsampleFilter>,
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Mean CAR broken down by asset, category or tag.
    Decompose {
        #[arg(long, value_enum, default_value = "asset")]
        by: ByArg,
    },
    /// Sample size and minimum detectable effect for a two-group comparison.
    Power {
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.80)]
        power: f64,
        /// Standardized effect size for the sample-size calculation.
        #[arg(long, default_value_t = 0.13)]
        d: f64,
        /// Pooled event-level standard deviation for the MDE.
        #[arg(long, default_value_t = 0.27)]
        sigma: f64,
        #[arg(long, default_value_t = 8)]
        n1: u64,
        #[arg(long, default_value_t = 7)]
        n2: u64,
    },
    /// Monte Carlo size and coverage study on simulated correlated panels.
    Calibrate {
        #[arg(long, default_value_t = 4)]
        n_assets: usize,
        #[arg(long, default_value_t = 8)]
        n_events: usize,
        #[arg(long, default_value_t = 0.9)]
        rho: f64,
        #[arg(long, default_value_t = 0.03)]
        sd: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        /// Bootstrap replications per trial.
        #[arg(long = "sim-B", default_value_t = 1000)]
        sim_replications: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Every battery plus a combined Markdown report.
    Report,
}

fn parse_category(s: &str) -> Result<Category, String> {
    s.parse()
}

fn parse_period(s: &str) -> Result<(NaiveDate, NaiveDate), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let d = |x: &str| NaiveDate::parse_from_str(x.trim(), "%Y-%m-%d").map_err(|e| format!("{x:?}: {e}"));
    let (a, b) = (d(a)?, d(b)?);
    if a > b {
        return Err(format!("period start {a} is after end {b}"));
    }
    Ok((a, b))
}

/// Resolves configuration: defaults, then the file, then `EVENTKIT_SEED`
/// if no seed was given elsewhere, then flags.
pub fn resolve_config(g: &GlobalArgs, env_seed: Option<String>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seed_from_file = false;
    if let Some(path) = &g.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        seed_from_file = text
            .lines()
            .any(|l| l.split_once('=').is_some_and(|(k, _)| k.trim() == "seed") && !l.trim_start().starts_with('#'));
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    if g.seed.is_none() && !seed_from_file {
        if let Some(v) = env_seed {
            cfg.set("seed", &v).with_context(|| format!("from {SEED_ENV}"))?;
        }
    }
    let flags: [(&str, Option<String>); 12] = [
        ("prices", g.prices.as_ref().map(|p| p.display().to_string())),
        ("events", g.events.as_ref().map(|p| p.display().to_string())),
        ("assets", g.assets.clone()),
        ("model", g.model.clone()),
        ("window", g.window.clone()),
        ("cap", g.cap.clone()),
        ("weighting", g.weighting.clone()),
        ("B", g.replications.map(|v| v.to_string())),
        ("seed", g.seed.map(|v| v.to_string())),
        ("level", g.level.map(|v| v.to_string())),
        ("out", g.out.as_ref().map(|p| p.display().to_string())),
        ("workers", g.workers.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v).with_context(|| format!("--{k}"))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cfg: &RunConfig, command: &Command) -> Result<Outcome> {
    match command {
        Command::Cars => commands::run_cars(cfg),
        Command::Bootstrap { category } => commands::run_bootstrap(cfg, *category),
        Command::Diff(p) => commands::run_diff(cfg, p.a, p.b),
        Command::Permute { pair, unit } => {
            let unit = match unit {
                UnitArg::Event => PermUnit::Event,
                UnitArg::Observation => PermUnit::Observation,
            };
            commands::run_permute(cfg, pair.a, pair.b, unit)
        }
        Command::Im(p) => commands::run_im(cfg, p.a, p.b),
        Command::Placebo { n, horizon, period } => commands::run_placebo(
            cfg,
            &PlaceboArgs {
                n: *n,
                horizon: *horizon,
                period: *period,
            },
        ),
        Command::Loo { category } => commands::run_loo(cfg, *category),
        Command::SweepWindow { windows, pair } => {
            let w = commands::parse_windows(windows).map_err(anyhow::Error::msg)?;
            commands::run_sweep_window(cfg, &w, pair.a, pair.b)
        }
        Command::SweepCap { caps, pair } => {
            let c = commands::parse_caps(caps).map_err(anyhow::Error::msg)?;
            commands::run_sweep_cap(cfg, &c, pair.a, pair.b)
        }
        Command::Subsample { filters, pair } => commands::run_subsample(cfg, filters, pair.a, pair.b),
        Command::Decompose { by } => commands::run_decompose(
            cfg,
            match by {
                ByArg::Asset => DecomposeBy::Asset,
                ByArg::Category => DecomposeBy::Category,
                ByArg::Tag => DecomposeBy::Tag,
            },
        ),
        Command::Power {
            alpha,
            power,
            d,
            sigma,
            n1,
            n2,
        } => commands::run_power(
            cfg,
            &PowerInput {
                alpha: *alpha,
                power: *power,
                d: *d,
                sigma_pooled: *sigma,
                n1: *n1,
                n2: *n2,
            },
        ),
        Command::Calibrate {
            n_assets,
            n_events,
            rho,
            sd,
            delta,
            trials,
            sim_replications,
            alpha,
        } => commands::run_calibrate(
            cfg,
            &SimSpec {
                n_assets: *n_assets,
                n_events: *n_events,
                rho: *rho,
                daily_sd: *sd,
                delta: *delta,
                trials: *trials,
                seed: cfg.seed,
                alpha: *alpha,
                replications: *sim_replications,
                scheme: cfg.weighting,
                ..SimSpec::default()
            },
        ),
        Command::Report => {
            let (artifacts, _) = report::run_report(cfg)?;
            Ok(Outcome {
                summary: format!("report.md and {} tables", artifacts.len() - 1),
                artifacts,
            })
        }
    }
}

/// Runs one parsed invocation end to end. Every artifact is rendered in
/// memory first, so a failing run writes nothing.
pub fn run(cli: &Cli, env_seed: Option<String>) -> Result<String> {
    let cfg = resolve_config(&cli.global, env_seed)?;
    let outcome = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .context("building worker pool")?
            .install(|| dispatch(&cfg, &cli.command))?,
        None => dispatch(&cfg, &cli.command)?,
    };
    output::emit(&cfg.out, &outcome.artifacts)?;
    Ok(outcome.summary)
}
