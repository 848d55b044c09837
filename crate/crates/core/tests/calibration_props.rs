use eventkit::calibration::{coverage_study, simulate_panel, SimSpec};
use eventkit::stats::pearson;
use eventkit::{EventWindow, WindowConfig};

fn long_panel(rho: f64) -> SimSpec {
    SimSpec {
        n_assets: 2,
        n_events: 1,
        rho,
        window: WindowConfig {
            estimation_length: 100,
            estimation_min: 50,
            gap_length: 0,
            event_window: EventWindow::new(0, 0).unwrap(),
        },
        calendar_days: Some(1000),
        ..SimSpec::default()
    }
}

fn sample_rho(spec: &SimSpec) -> f64 {
    let (panel, _) = simulate_panel(spec, 0).unwrap();
    let a: Vec<f64> = panel.column(0).iter().map(|v| v.unwrap()).collect();
    let b: Vec<f64> = panel.column(1).iter().map(|v| v.unwrap()).collect();
    assert_eq!(a.len(), 1000);
    pearson(&a, &b).unwrap()
}

#[test]
fn independent_assets_are_uncorrelated() {
    assert!(sample_rho(&long_panel(0.0)).abs() < 0.1);
}

#[test]
fn factor_loading_sets_correlation() {
    let r = sample_rho(&long_panel(0.9));
    assert!((0.85..=0.95).contains(&r), "{r}");
}

#[test]
fn study_is_thread_count_invariant() {
    let spec = SimSpec {
        trials: 200,
        ..SimSpec::default()
    };
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| coverage_study(&spec).unwrap());
    let many = pool(4).install(|| coverage_study(&spec).unwrap());
    assert_eq!(one, many);
    // null injection: the average estimate is centred on zero
    assert!(one.mean_estimate.abs() < 2.5 * one.estimate_mc_se, "{one:?}");
}

#[test]
fn independence_gives_nominal_size() {
    let spec = SimSpec {
        rho: 0.0,
        ..SimSpec::default()
    };
    let r = coverage_study(&spec).unwrap();
    assert!((r.naive_rejection_rate - 0.05).abs() <= 0.02, "{r:?}");
}

#[test]
fn one_asset_tests_mostly_agree() {
    let spec = SimSpec {
        n_assets: 1,
        rho: 0.0,
        ..SimSpec::default()
    };
    let r = coverage_study(&spec).unwrap();
    assert!(r.agreement_rate >= 0.95, "{r:?}");
}

#[test]
fn injected_effect_is_recovered_and_detected() {
    let spec = SimSpec {
        delta: 0.024,
        trials: 200,
        ..SimSpec::default()
    };
    let r = coverage_study(&spec).unwrap();
    assert!((r.mean_estimate - r.true_car).abs() < 2.0 * r.estimate_mc_se, "{r:?}");
    assert!(r.bootstrap_rejection_rate > 0.8, "{r:?}");
}
