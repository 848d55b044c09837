mod common;

use chrono::Days;
use common::{date, events_on, random_panel, series};
use eventkit::abnormal::{abnormal_returns, Benchmark, SkipReason};
use eventkit::{
    compute_car, event_panel_cars, fit_constant_mean, fit_market_model, winsorize, Category, EventWindow, ModelSpec,
    WindowConfig,
};
use proptest::prelude::*;

fn cfg(len: usize, gap: u32, window: (i32, i32)) -> WindowConfig {
    WindowConfig {
        estimation_length: len,
        estimation_min: len / 2,
        gap_length: gap,
        event_window: EventWindow::new(window.0, window.1).unwrap(),
    }
}

/// Solves the 2x2 normal equations by Cramer's rule.
fn normal_equation_oracle(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    ((sy * sxx - sx * sxy) / det, (n * sxy - sx * sy) / det)
}

#[test]
fn market_fit_matches_closed_form_on_200_days() {
    let start = date("2020-01-01");
    let panel = random_panel(7, 2, 260, 0.0);
    let (x, y) = (panel.series("X0").unwrap(), panel.series("X1").unwrap());
    let event = start + Days::new(230);
    let c = cfg(200, 30, (0, 5));
    let fit = fit_market_model(&y, &x, event, &c).unwrap();
    assert_eq!(fit.n_obs, 200);
    let xs: Vec<f64> = (0..200).map(|i| x.values()[i].unwrap()).collect();
    let ys: Vec<f64> = (0..200).map(|i| y.values()[i].unwrap()).collect();
    let (alpha, beta) = normal_equation_oracle(&xs, &ys);
    let Benchmark::Market { alpha: a, beta: b } = fit.benchmark else { panic!() };
    assert!((a - alpha).abs() < 1e-12, "{a} vs {alpha}");
    assert!((b - beta).abs() < 1e-12, "{b} vs {beta}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_mean_residuals_sum_to_zero(values in prop::collection::vec(-0.2f64..0.2, 40..120)) {
        let start = date("2020-01-01");
        let s = series(start, &values);
        let n = values.len();
        let c = cfg(n - 5, 0, (0, 0));
        let fit = fit_constant_mean(&s, start + Days::new((n - 1) as u64), &c).unwrap();
        let Benchmark::ConstantMean { mean } = fit.benchmark else { panic!() };
        let used = &values[n - 1 - fit.n_obs..n - 1];
        let total: f64 = used.iter().map(|r| r - mean).sum();
        prop_assert!(total.abs() < 1e-12 * fit.n_obs as f64);
    }

    #[test]
    fn market_residuals_are_orthogonal(seed in any::<u64>()) {
        let panel = random_panel(seed, 2, 200, 0.1);
        let (x, y) = (panel.series("X0").unwrap(), panel.series("X1").unwrap());
        let event = date("2020-01-01") + Days::new(199);
        let c = cfg(150, 5, (0, 3));
        let fit = fit_market_model(&y, &x, event, &c).unwrap();
        let Benchmark::Market { alpha, beta } = fit.benchmark else { panic!() };
        let (mut sum, mut cross) = (0.0, 0.0);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (i, d) in panel.dates().iter().enumerate() {
            if *d < fit.estimation_start || *d > fit.estimation_end { continue; }
            if let (Some(xv), Some(yv)) = (x.values()[i], y.values()[i]) {
                let e = yv - alpha - beta * xv;
                sum += e;
                cross += e * xv;
                xs.push(xv);
                ys.push(yv);
            }
        }
        prop_assert_eq!(xs.len(), fit.n_obs);
        prop_assert!(sum.abs() < 1e-10 && cross.abs() < 1e-10);
        let (oa, ob) = normal_equation_oracle(&xs, &ys);
        prop_assert!((oa - alpha).abs() < 1e-10 && (ob - beta).abs() < 1e-10);
    }

    #[test]
    fn car_is_additive_over_partitions(seed in any::<u64>(), t1 in -10i32..0, len in 2i32..30, cut in 0i32..29) {
        let t2 = t1 + len;
        let k = t1 + cut % len;
        let panel = random_panel(seed, 2, 400, 0.05);
        let (x, y) = (panel.series("X0").unwrap(), panel.series("X1").unwrap());
        let event = date("2020-01-01") + Days::new(350);
        let fit = fit_market_model(&y, &x, event, &cfg(250, 30, (t1, t2))).unwrap();
        let car = |a, b| compute_car(&fit, &y, Some(&x), event, EventWindow::new(a, b).unwrap()).map(|c| c.car).unwrap_or(0.0);
        let whole = car(t1, t2);
        prop_assert!((whole - car(t1, k) - car(k + 1, t2)).abs() < 1e-12);
    }

    #[test]
    fn capping_commutes_with_the_pipeline(seed in any::<u64>(), cap in 0.005f64..0.05) {
        let panel = random_panel(seed, 3, 420, 0.02);
        let events = events_on(&[date("2020-11-20"), date("2021-01-15")], Category::InfraNegative);
        let c = WindowConfig { estimation_min: 100, ..WindowConfig::default() };
        for model in [ModelSpec::ConstantMean, ModelSpec::MarketProxy("X0".into()), ModelSpec::MarketEw] {
            let inside = event_panel_cars(&panel, &events, &c, &model, Some(cap)).unwrap();
            let before = event_panel_cars(&winsorize(&panel, Some(cap)).unwrap(), &events, &c, &model, None).unwrap();
            prop_assert_eq!(&inside, &before);
        }
    }

    #[test]
    fn estimation_never_touches_gap_or_window(seed in any::<u64>(), gap in 0u32..40, t1 in -60i32..3, len in 0i32..20) {
        let panel = random_panel(seed, 2, 600, 0.1);
        let events = events_on(&[date("2021-06-01")], Category::RegNegative);
        let c = WindowConfig {
            estimation_length: 250,
            estimation_min: 100,
            gap_length: gap,
            event_window: EventWindow::new(t1, t1 + len).unwrap(),
        };
        let table = event_panel_cars(&panel, &events, &c, &ModelSpec::MarketEw, None).unwrap();
        // a short window can land only on missing days; nothing else may drop a pair
        prop_assert_eq!(table.len() + table.skipped().len(), 2);
        prop_assert!(table.skipped().iter().all(|s| s.reason == SkipReason::EmptyEventWindow));
        for r in table.rows() {
            let lo = r.event_date - Days::new(u64::from(gap));
            let first_window_day = if t1 < 0 { r.event_date - Days::new(t1.unsigned_abs() as u64) } else { r.event_date };
            prop_assert!(r.fit.estimation_end < lo.min(first_window_day));
            prop_assert!(r.n_days <= r.window.len());
            prop_assert_eq!(r.significant, r.car.abs() > 2.0 * r.sigma_car);
            prop_assert!((r.sigma_car - r.fit.resid_sd * (r.n_days as f64).sqrt()).abs() < 1e-15);
        }
    }
}

#[test]
fn proxy_asset_falls_back_to_constant_mean() {
    let panel = random_panel(3, 3, 500, 0.0);
    let events = events_on(&[date("2021-01-10")], Category::InfraNegative);
    let table = event_panel_cars(&panel, &events, &WindowConfig::default(), &ModelSpec::MarketProxy("X1".into()), None)
        .unwrap();
    for r in table.rows() {
        assert_eq!(r.fit.beta().is_none(), r.asset == "X1");
    }
}

#[test]
fn pairs_without_history_are_skipped() {
    let mut panel = random_panel(4, 2, 500, 0.0);
    // X1 starts trading late: blank its first 400 days
    let mut columns: Vec<Vec<Option<f64>>> = (0..2).map(|a| panel.column(a).to_vec()).collect();
    for v in columns[1].iter_mut().take(400) {
        *v = None;
    }
    panel = eventkit::ReturnPanel::from_columns(panel.assets().to_vec(), panel.dates().to_vec(), columns).unwrap();
    let events = events_on(&[date("2021-02-01")], Category::InfraNegative);
    let table = event_panel_cars(&panel, &events, &WindowConfig::default(), &ModelSpec::ConstantMean, None).unwrap();
    assert_eq!(table.len(), 1);
    assert_eq!(table.rows()[0].asset, "X0");
    assert_eq!(table.skipped().len(), 1);
    assert_eq!(table.skipped()[0].asset, "X1");
}

#[test]
fn excluded_events_never_produce_rows() {
    let panel = random_panel(5, 2, 500, 0.0);
    let mut events = events_on(&[date("2021-02-01"), date("2021-03-01")], Category::InfraNegative).events().to_vec();
    events[1].category = Category::Excluded;
    let events = eventkit::EventSet::new(events, None).unwrap();
    let table = event_panel_cars(&panel, &events, &WindowConfig::default(), &ModelSpec::ConstantMean, None).unwrap();
    assert!(table.rows().iter().all(|r| r.category == Category::InfraNegative));
    assert_eq!(table.skipped().len(), 1);
}

#[test]
fn abnormal_returns_follow_the_window() {
    let start = date("2020-01-01");
    let s = series(start, &[0.01; 300]);
    let fit = fit_constant_mean(&s, start + Days::new(290), &cfg(200, 30, (-5, 5))).unwrap();
    let ars = abnormal_returns(&fit, &s, None, start + Days::new(290), EventWindow::new(-5, 5).unwrap()).unwrap();
    assert_eq!(ars.first().unwrap().0, -5);
    assert_eq!(ars.len(), 11);
}
