//! Cluster-aware tests on CAR tables.
//!
//! Events are the clusters: asset CARs from the same event move together,
//! so every resampling or test here treats an event as one unit.

mod bootstrap;
mod permutation;
mod ttest;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::abnormal::CarTable;
use crate::events::Category;
use crate::stats;

pub use bootstrap::{
    block_bootstrap_diff, block_bootstrap_mean, bootstrap_clusters_diff, bootstrap_clusters_mean, BootstrapConfig,
    BootstrapResult,
};
pub use permutation::{permutation_test, PermResult};
pub use ttest::{im_t_test, one_sample_t, welch_t, TTestResult};

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("group {group} has {found} events, at least {required} required")]
    InsufficientClusters { group: String, found: usize, required: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// How a group statistic weights asset-level CARs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WeightingScheme {
    /// Mean over all asset CARs, so events with more assets weigh more.
    #[default]
    ObservationWeighted,
    /// Mean of per-event means.
    EventEqualWeighted,
}

impl WeightingScheme {
    pub fn token(self) -> &'static str {
        match self {
            WeightingScheme::ObservationWeighted => "observation",
            WeightingScheme::EventEqualWeighted => "event",
        }
    }

    /// Statistic over a set of clusters given by index (repeats allowed).
    pub(crate) fn statistic<'a>(self, clusters: impl Iterator<Item = &'a [f64]>) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        match self {
            WeightingScheme::ObservationWeighted => {
                for c in clusters {
                    sum += c.iter().sum::<f64>();
                    n += c.len();
                }
            }
            WeightingScheme::EventEqualWeighted => {
                for c in clusters {
                    sum += stats::mean(c);
                    n += 1;
                }
            }
        }
        sum / n as f64
    }
}

impl fmt::Display for WeightingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for WeightingScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "observation" => Ok(WeightingScheme::ObservationWeighted),
            "event" => Ok(WeightingScheme::EventEqualWeighted),
            other => Err(format!("unknown weighting {other:?} (expected observation or event)")),
        }
    }
}

/// Asset CARs grouped by event for one category, in table order.
pub fn clusters(table: &CarTable, category: Category) -> Vec<Vec<f64>> {
    table.groups_in(category).iter().map(|g| g.cars()).collect()
}

/// `(event_id, mean CAR across assets)` for each event in the category.
pub fn event_level_means(table: &CarTable, category: Category) -> Vec<(String, f64)> {
    table
        .groups_in(category)
        .iter()
        .map(|g| (g.event_id.to_string(), g.mean_car()))
        .collect()
}

/// Category statistic under a scheme; `None` when the category is empty.
pub fn group_mean(table: &CarTable, category: Category, scheme: WeightingScheme) -> Option<f64> {
    let cl = clusters(table, category);
    (!cl.is_empty()).then(|| scheme.statistic(cl.iter().map(Vec::as_slice)))
}

/// Deflates a t statistic for average cross-sectional correlation `rho_bar`
/// among `n` observations: `t / sqrt(1 + (n - 1) rho_bar)`.
pub fn kp_adjust(t_unadj: f64, n: usize, rho_bar: f64) -> Result<f64, InferenceError> {
    if n == 0 {
        return Err(InferenceError::InvalidArgument("n must be at least 1".into()));
    }
    if !rho_bar.is_finite() || rho_bar > 1.0 {
        return Err(InferenceError::InvalidArgument(format!("rho_bar {rho_bar} outside [-1/(n-1), 1]")));
    }
    let inflation = 1.0 + (n - 1) as f64 * rho_bar;
    if inflation <= 0.0 {
        return Err(InferenceError::InvalidArgument(format!(
            "variance inflation 1 + (n-1) rho_bar = {inflation} is not positive"
        )));
    }
    Ok(t_unadj / inflation.sqrt())
}

/// Average pairwise correlation between the event-window abnormal returns
/// of different assets for the same event, pooled over events in the
/// category. Pairs need at least three common days. One estimator among
/// several reasonable ones; `None` when no pair qualifies.
pub fn estimate_rho_bar(table: &CarTable, category: Category) -> Option<f64> {
    let mut rhos = Vec::new();
    for g in table.groups_in(category) {
        for (i, a) in g.rows.iter().enumerate() {
            for b in &g.rows[i + 1..] {
                let (x, y): (Vec<f64>, Vec<f64>) = a
                    .abnormal
                    .iter()
                    .filter_map(|(k, ar)| b.abnormal.iter().find(|(kb, _)| kb == k).map(|(_, br)| (*ar, *br)))
                    .unzip();
                if x.len() >= 3 {
                    rhos.extend(stats::pearson(&x, &y));
                }
            }
        }
    }
    (!rhos.is_empty()).then(|| stats::mean(&rhos))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kp_identities() {
        assert_eq!(kp_adjust(2.5, 10, 0.0).unwrap(), 2.5);
        assert_eq!(kp_adjust(2.5, 1, 0.7).unwrap(), 2.5);
        assert_eq!(kp_adjust(3.0, 4, 1.0).unwrap(), 1.5);
        assert!(kp_adjust(1.0, 3, -0.5).is_err());
        assert!(kp_adjust(1.0, 3, 1.5).is_err());
    }

    #[test]
    fn scheme_tokens() {
        for s in ["observation", "event"] {
            assert_eq!(s.parse::<WeightingScheme>().unwrap().to_string(), s);
        }
        assert!("pooled".parse::<WeightingScheme>().is_err());
    }

    #[test]
    fn scheme_statistics_differ_on_unbalanced_clusters() {
        let cl = [vec![-0.10, -0.20], vec![0.30]];
        let obs = WeightingScheme::ObservationWeighted.statistic(cl.iter().map(Vec::as_slice));
        let ev = WeightingScheme::EventEqualWeighted.statistic(cl.iter().map(Vec::as_slice));
        assert!((obs - 0.0).abs() < 1e-15);
        assert!((ev - 0.075).abs() < 1e-15);
    }
}
