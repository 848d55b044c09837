use rand::Rng;
use rayon::prelude::*;

use super::{clusters, InferenceError, WeightingScheme};
use crate::abnormal::CarTable;
use crate::events::Category;
use crate::rng::substream;
use crate::stats;

pub const MIN_REPLICATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub seed: u64,
    pub ci_level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 5000,
            seed: 42,
            ci_level: 0.95,
        }
    }
}

impl BootstrapConfig {
    fn validate(&self) -> Result<(), InferenceError> {
        if self.replications < MIN_REPLICATIONS {
            return Err(InferenceError::InvalidArgument(format!(
                "{} replications requested, at least {MIN_REPLICATIONS} required",
                self.replications
            )));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(InferenceError::InvalidArgument(format!("ci level {} outside (0, 1)", self.ci_level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// Statistic on the original sample.
    pub estimate: f64,
    /// Standard deviation of the replication statistics (divisor B - 1).
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `2 min(P*(θ ≤ 0), P*(θ ≥ 0))`, floored at `2 / B`.
    pub p_value: f64,
    pub replications: usize,
    pub scheme: WeightingScheme,
    pub seed: u64,
    pub ci_level: f64,
    /// Events per group (one entry, or two for a difference).
    pub n_events: Vec<usize>,
}

fn check_clusters(name: &str, clusters: &[Vec<f64>]) -> Result<(), InferenceError> {
    if clusters.len() < 2 {
        return Err(InferenceError::InsufficientClusters {
            group: name.to_string(),
            found: clusters.len(),
            required: 2,
        });
    }
    if clusters.iter().any(|c| c.is_empty()) {
        return Err(InferenceError::InvalidArgument(format!("group {name} has an event with no CARs")));
    }
    Ok(())
}

fn resample<R: Rng>(rng: &mut R, clusters: &[Vec<f64>], scheme: WeightingScheme) -> f64 {
    let n = clusters.len();
    let draws: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    scheme.statistic(draws.iter().map(|&i| clusters[i].as_slice()))
}

fn summarize(
    estimate: f64,
    mut stats_b: Vec<f64>,
    scheme: WeightingScheme,
    cfg: &BootstrapConfig,
    n_events: Vec<usize>,
) -> BootstrapResult {
    let b = stats_b.len() as f64;
    let se = stats::sample_sd(&stats_b);
    let below = stats_b.iter().filter(|v| **v <= 0.0).count() as f64 / b;
    let above = stats_b.iter().filter(|v| **v >= 0.0).count() as f64 / b;
    let p_value = (2.0 * below.min(above)).max(2.0 / b).min(1.0);
    stats_b.sort_by(f64::total_cmp);
    let tail = (1.0 - cfg.ci_level) / 2.0;
    BootstrapResult {
        estimate,
        se,
        ci_low: stats::quantile_sorted(&stats_b, tail),
        ci_high: stats::quantile_sorted(&stats_b, 1.0 - tail),
        p_value,
        replications: cfg.replications,
        scheme,
        seed: cfg.seed,
        ci_level: cfg.ci_level,
        n_events,
    }
}

/// Event-level block bootstrap of a group statistic. Each replication
/// redraws whole events with replacement; replication `b` uses substream `b`
/// of the seed, so results do not depend on the thread count.
pub fn bootstrap_clusters_mean(
    clusters: &[Vec<f64>],
    scheme: WeightingScheme,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult, InferenceError> {
    cfg.validate()?;
    check_clusters("sample", clusters)?;
    let estimate = scheme.statistic(clusters.iter().map(Vec::as_slice));
    let stats_b: Vec<f64> = (0..cfg.replications)
        .into_par_iter()
        .map(|b| resample(&mut substream(cfg.seed, b as u64), clusters, scheme))
        .collect();
    Ok(summarize(estimate, stats_b, scheme, cfg, vec![clusters.len()]))
}

/// Bootstrap of `stat(A) - stat(B)`, resampling each group's events
/// independently within every replication.
pub fn bootstrap_clusters_diff(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    scheme: WeightingScheme,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult, InferenceError> {
    cfg.validate()?;
    check_clusters("A", a)?;
    check_clusters("B", b)?;
    let estimate = scheme.statistic(a.iter().map(Vec::as_slice)) - scheme.statistic(b.iter().map(Vec::as_slice));
    let stats_b: Vec<f64> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(cfg.seed, rep as u64);
            let sa = resample(&mut rng, a, scheme);
            let sb = resample(&mut rng, b, scheme);
            sa - sb
        })
        .collect();
    Ok(summarize(estimate, stats_b, scheme, cfg, vec![a.len(), b.len()]))
}

fn named(e: InferenceError, name: &str) -> InferenceError {
    match e {
        InferenceError::InsufficientClusters { found, required, .. } => InferenceError::InsufficientClusters {
            group: name.to_string(),
            found,
            required,
        },
        other => other,
    }
}

pub fn block_bootstrap_mean(
    table: &CarTable,
    category: Category,
    scheme: WeightingScheme,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult, InferenceError> {
    bootstrap_clusters_mean(&clusters(table, category), scheme, cfg).map_err(|e| named(e, category.token()))
}

pub fn block_bootstrap_diff(
    table: &CarTable,
    category_a: Category,
    category_b: Category,
    scheme: WeightingScheme,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult, InferenceError> {
    let a = clusters(table, category_a);
    let b = clusters(table, category_b);
    if a.len() < 2 {
        return Err(named(check_clusters("A", &a).unwrap_err(), category_a.token()));
    }
    if b.len() < 2 {
        return Err(named(check_clusters("B", &b).unwrap_err(), category_b.token()));
    }
    bootstrap_clusters_diff(&a, &b, scheme, cfg)
}
