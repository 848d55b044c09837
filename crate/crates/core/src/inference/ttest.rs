use super::InferenceError;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct TTestResult {
    /// Mean difference (or the mean itself for one-sample tests).
    pub diff: f64,
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
}

fn need_two(name: &str, values: &[f64]) -> Result<(), InferenceError> {
    if values.len() < 2 {
        return Err(InferenceError::InsufficientClusters {
            group: name.into(),
            found: values.len(),
            required: 2,
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(InferenceError::InvalidArgument(format!("group {name} has non-finite values")));
    }
    Ok(())
}

fn finish(diff: f64, se: f64, df: f64, level: f64) -> TTestResult {
    let (t_stat, p_value, half) = if se > 0.0 {
        let t = diff / se;
        (t, stats::t_two_sided_p(t, df), stats::t_quantile(0.5 + level / 2.0, df) * se)
    } else if diff == 0.0 {
        (0.0, 1.0, 0.0)
    } else {
        (diff.signum() * f64::INFINITY, 0.0, 0.0)
    };
    TTestResult {
        diff,
        t_stat,
        df,
        p_value,
        ci_low: diff - half,
        ci_high: diff + half,
        ci_level: level,
    }
}

/// Welch two-sample t test with Welch–Satterthwaite degrees of freedom and
/// a 95% interval for the difference.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TTestResult, InferenceError> {
    need_two("A", a)?;
    need_two("B", b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = stats::sample_variance(a) / na;
    let vb = stats::sample_variance(b) / nb;
    let se = (va + vb).sqrt();
    let df = if se > 0.0 {
        (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0))
    } else {
        na + nb - 2.0
    };
    Ok(finish(stats::mean(a) - stats::mean(b), se, df, 0.95))
}

/// Two-sample t test on event-level means, each event one cluster. The
/// values passed in are already cluster means; the test itself is Welch's.
pub fn im_t_test(means_a: &[f64], means_b: &[f64]) -> Result<TTestResult, InferenceError> {
    welch_t(means_a, means_b)
}

/// One-sample t test of `mean(values) = 0`, df `n - 1`, 95% interval.
pub fn one_sample_t(values: &[f64]) -> Result<TTestResult, InferenceError> {
    need_two("sample", values)?;
    let n = values.len() as f64;
    let se = stats::sample_sd(values) / n.sqrt();
    Ok(finish(stats::mean(values), se, n - 1.0, 0.95))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_groups() {
        let a = [0.1, -0.2, 0.05];
        let r = welch_t(&a, &a).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert_relative_eq!(r.p_value, 1.0);
    }

    #[test]
    fn separated_groups() {
        let b = [1.0, 1.0 + 1e-9, 1.0 - 1e-9, 1.0 + 5e-10];
        let r = im_t_test(&[0.0; 4], &b).unwrap();
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn zero_variance_with_difference() {
        let r = welch_t(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.t_stat, f64::INFINITY);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.df, 2.0);
    }

    #[test]
    fn known_welch_values() {
        // hand computation: means 2 and 5, variances 1 and 4, n = 3 each
        let r = welch_t(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        let se = (1.0f64 / 3.0 + 4.0 / 3.0).sqrt();
        assert_relative_eq!(r.t_stat, -3.0 / se, epsilon = 1e-12);
        let df = (5.0f64 / 3.0).powi(2) / ((1.0f64 / 3.0).powi(2) / 2.0 + (4.0f64 / 3.0).powi(2) / 2.0);
        assert_relative_eq!(r.df, df, epsilon = 1e-12);
        assert!(r.ci_low < r.diff && r.diff < r.ci_high);
    }

    #[test]
    fn needs_two_values() {
        assert!(matches!(
            welch_t(&[1.0], &[1.0, 2.0]),
            Err(InferenceError::InsufficientClusters { found: 1, .. })
        ));
    }

    #[test]
    fn one_sample() {
        let r = one_sample_t(&[0.1, 0.3]).unwrap();
        assert_relative_eq!(r.diff, 0.2, epsilon = 1e-15);
        assert_eq!(r.df, 1.0);
        assert_relative_eq!(r.t_stat, 2.0, epsilon = 1e-12);
    }
}
