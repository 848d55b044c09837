use eventkit::power::{mde, n_per_group_exact, required_n_per_group, z_quantile};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn bisection_quantile(p: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if n.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantile_agrees_with_independent_inverses() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    for i in 1..2000 {
        let p = i as f64 / 2000.0;
        let z = z_quantile(p).unwrap();
        assert!((z - bisection_quantile(p)).abs() < 1e-8, "p = {p}");
        assert!((z - normal.inverse_cdf(p)).abs() < 1e-8, "p = {p}");
    }
    for p in [1e-12, 1e-8, 1e-5, 0.999_99] {
        assert!((z_quantile(p).unwrap() - bisection_quantile(p)).abs() < 1e-8);
    }
}

proptest! {
    #[test]
    fn quantile_is_odd(p in 1e-12f64..0.5) {
        prop_assert!((z_quantile(p).unwrap() + z_quantile(1.0 - p).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn sample_size_monotonicity(d in 0.05f64..3.0, bump in 0.01f64..1.0, power in 0.5f64..0.94) {
        prop_assert!(required_n_per_group(0.05, power, d + bump).unwrap() <= required_n_per_group(0.05, power, d).unwrap());
        prop_assert!(required_n_per_group(0.05, power + 0.05, d).unwrap() >= required_n_per_group(0.05, power, d).unwrap());
        prop_assert!(n_per_group_exact(0.05, power, -d).unwrap() == n_per_group_exact(0.05, power, d).unwrap());
        let ratio = n_per_group_exact(0.05, power, 2.0 * d).unwrap() / n_per_group_exact(0.05, power, d).unwrap();
        prop_assert!((ratio - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mde_scales_with_root_n(n in 1u64..10_000, sigma in 0.01f64..1.0) {
        let base = mde(0.05, 0.8, sigma, 1, 1).unwrap();
        let scaled = mde(0.05, 0.8, sigma, n, n).unwrap() * (n as f64).sqrt();
        prop_assert!((scaled - base).abs() < 1e-12 * base);
    }
}
