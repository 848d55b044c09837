use itertools::Itertools;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::InferenceError;
use crate::rng::substream;
use crate::stats;

/// Absolute slack when comparing permuted and observed differences.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PermResult {
    pub observed_diff: f64,
    /// Assignments evaluated; in Monte Carlo mode this counts the observed one too.
    pub n_assignments: u64,
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided permutation test of `mean(a) - mean(b)`.
///
/// When `C(na + nb, na) <= max_exact` every assignment is enumerated and
/// `p` is the share with `|diff| >= |observed|` (the observed split included).
/// Otherwise `max_exact` random relabelings are drawn, draw `i` from
/// substream `i` of `seed`, and `p = (hits + 1) / (max_exact + 1)`.
pub fn permutation_test(a: &[f64], b: &[f64], max_exact: u64, seed: u64) -> Result<PermResult, InferenceError> {
    if a.is_empty() || b.is_empty() {
        return Err(InferenceError::InvalidArgument("permutation test needs two nonempty groups".into()));
    }
    if max_exact == 0 {
        return Err(InferenceError::InvalidArgument("max_exact must be positive".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total: f64 = pooled.iter().sum();
    let observed = stats::mean(a) - stats::mean(b);
    let threshold = observed.abs() - TIE_TOLERANCE;
    let diff_from_sum = |sum_a: f64| sum_a / na as f64 - (total - sum_a) / nb as f64;

    let count = stats::binomial((na + nb) as u64, na as u64);
    if count <= u128::from(max_exact) {
        let hits = (0..na + nb)
            .combinations(na)
            .filter(|idx| diff_from_sum(idx.iter().map(|&i| pooled[i]).sum()).abs() >= threshold)
            .count();
        return Ok(PermResult {
            observed_diff: observed,
            n_assignments: count as u64,
            p_value: hits as f64 / count as f64,
            exact: true,
        });
    }

    let hits = (0..max_exact)
        .into_par_iter()
        .filter(|&i| {
            let mut shuffled = pooled.clone();
            shuffled.shuffle(&mut substream(seed, i));
            diff_from_sum(shuffled[..na].iter().sum()).abs() >= threshold
        })
        .count();
    Ok(PermResult {
        observed_diff: observed,
        n_assignments: max_exact + 1,
        p_value: (hits as f64 + 1.0) / (max_exact as f64 + 1.0),
        exact: false,
    })
}
