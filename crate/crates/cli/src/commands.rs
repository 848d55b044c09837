//! One function per subcommand. Each loads what it needs, computes, and
//! returns rendered artifacts plus a short summary for the terminal.

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use eventkit::abnormal::{cumulative_average_path, write_car_table};
use eventkit::calibration::{coverage_study, SimSpec};
use eventkit::events::{detect_overlaps, load_events, write_events};
use eventkit::inference::{
    bootstrap_clusters_mean, clusters, group_mean, one_sample_t, BootstrapConfig, BootstrapResult, TTestResult,
};
use eventkit::ingest::{load_price_panel, PriceFormat};
use eventkit::power::PowerInput;
use eventkit::robustness::{
    cap_label, cap_sweep, generate_placebos, group_decompose, leave_one_out, subsample_run, window_sweep, Comparison,
    DecomposeBy, PipelineInputs, PlaceboSpec, SubsampleFilter, SweepReport,
};
use eventkit::{
    block_bootstrap_diff, block_bootstrap_mean, compute_returns, event_level_means, event_panel_cars, im_t_test,
    permutation_test, CarTable, Category, EventSet, EventWindow, ReturnPanel,
};

use crate::config::RunConfig;
use crate::output::{num, opt, Artifact, Table};

/// Inputs loaded once per invocation.
pub struct Loaded {
    pub returns: ReturnPanel,
    pub events: EventSet,
}

/// Reads prices and events, restricts assets and annotates overlaps. Runs
/// before the output directory is created so a bad input leaves no trace.
pub fn load(cfg: &RunConfig) -> Result<Loaded> {
    let prices_path = cfg.prices.as_ref().ok_or_else(|| anyhow!("no price file given (--prices)"))?;
    let events_path = cfg.events.as_ref().ok_or_else(|| anyhow!("no event file given (--events)"))?;
    let mut prices = load_price_panel(prices_path, &PriceFormat::default())
        .context("loading prices")?;
    if !cfg.assets.is_empty() {
        prices = prices.select_assets(&cfg.assets)?;
    }
    if prices.assets().is_empty() {
        bail!("price file {} holds no assets", prices_path.display());
    }
    let events = load_events(events_path).context("loading events")?;
    Ok(Loaded {
        returns: compute_returns(&prices),
        events: detect_overlaps(&events, cfg.overlap_horizon),
    })
}

pub fn bootstrap_config(cfg: &RunConfig) -> BootstrapConfig {
    BootstrapConfig {
        replications: cfg.replications,
        seed: cfg.seed,
        ci_level: cfg.ci_level,
    }
}

pub fn comparison(cfg: &RunConfig, a: Category, b: Category) -> Comparison {
    Comparison {
        group_a: a,
        group_b: b,
        scheme: cfg.weighting,
        bootstrap: bootstrap_config(cfg),
        max_exact: cfg.max_exact,
    }
}

pub fn inputs<'a>(cfg: &RunConfig, data: &'a Loaded, a: Category, b: Category) -> PipelineInputs<'a> {
    PipelineInputs {
        returns: &data.returns,
        events: &data.events,
        window: cfg.window_config(),
        model: cfg.model.clone(),
        cap: cfg.cap,
        comparison: comparison(cfg, a, b),
    }
}

pub fn cars(cfg: &RunConfig, data: &Loaded) -> Result<CarTable> {
    Ok(event_panel_cars(&data.returns, &data.events, &cfg.window_config(), &cfg.model, cfg.cap)?)
}

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
}

pub fn car_artifacts(cfg: &RunConfig, table: &CarTable) -> Result<Vec<Artifact>> {
    let mut body = crate::output::provenance(cfg).into_bytes();
    write_car_table(table, &mut body)?;
    let mut skipped = Table::new(&["event_id", "asset", "reason"]);
    for s in table.skipped() {
        skipped.push(vec![s.event_id.clone(), s.asset.clone(), s.reason.to_string()]);
    }
    Ok(vec![
        Artifact {
            name: "cars.csv".into(),
            contents: String::from_utf8(body)?,
        },
        skipped.artifact("skipped.csv", cfg),
        plot_artifact(cfg, table),
    ])
}

/// Cumulative average abnormal return per category, one `(x, y)` series each.
pub fn plot_artifact(cfg: &RunConfig, table: &CarTable) -> Artifact {
    let mut t = Table::new(&["series", "x", "y"]);
    for c in Category::ANALYZED.iter().chain([Category::Placebo].iter()) {
        for (k, y) in cumulative_average_path(table, *c) {
            t.push(vec![c.token().into(), k.to_string(), num(y)]);
        }
    }
    t.artifact("plot_caar.csv", cfg)
}

pub fn run_cars(cfg: &RunConfig) -> Result<Outcome> {
    let data = load(cfg)?;
    let table = cars(cfg, &data)?;
    Ok(Outcome {
        summary: format!("{} CARs, {} skipped pairs", table.len(), table.skipped().len()),
        artifacts: car_artifacts(cfg, &table)?,
    })
}

pub const INFERENCE_HEADER: [&str; 9] = ["test", "groupA", "groupB", "estimate", "se", "ci_low", "ci_high", "p", "meta"];

pub fn bootstrap_row(test: &str, a: &str, b: &str, r: &BootstrapResult) -> Vec<String> {
    let n: Vec<String> = r.n_events.iter().map(|n| n.to_string()).collect();
    vec![
        test.into(),
        a.into(),
        b.into(),
        num(r.estimate),
        num(r.se),
        num(r.ci_low),
        num(r.ci_high),
        format!("{:.4}", r.p_value),
        format!("scheme={};B={};level={};n_events={}", r.scheme, r.replications, r.ci_level, n.join("/")),
    ]
}

pub fn ttest_row(test: &str, a: &str, b: &str, r: &TTestResult) -> Vec<String> {
    let se = if r.t_stat.is_finite() && r.t_stat != 0.0 { (r.diff / r.t_stat).abs() } else { 0.0 };
    vec![
        test.into(),
        a.into(),
        b.into(),
        num(r.diff),
        num(se),
        num(r.ci_low),
        num(r.ci_high),
        format!("{:.4}", r.p_value),
        format!("t={:.4};df={:.2};level={}", r.t_stat, r.df, r.ci_level),
    ]
}

fn categories_or_all(category: Option<Category>) -> Vec<Category> {
    category.map_or_else(|| Category::ANALYZED.to_vec(), |c| vec![c])
}

pub fn run_bootstrap(cfg: &RunConfig, category: Option<Category>) -> Result<Outcome> {
    let data = load(cfg)?;
    let table = cars(cfg, &data)?;
    let mut t = Table::new(&INFERENCE_HEADER);
    let mut lines = Vec::new();
    for c in categories_or_all(category) {
        match block_bootstrap_mean(&table, c, cfg.weighting, &bootstrap_config(cfg)) {
            Ok(r) => {
                lines.push(format!("{c}: mean {:.4} CI [{:.4}, {:.4}] p {:.3}", r.estimate, r.ci_low, r.ci_high, r.p_value));
                t.push(bootstrap_row("bootstrap_mean", c.token(), "", &r));
            }
            Err(e) if category.is_none() => lines.push(format!("{c}: skipped ({e})")),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Outcome {
        artifacts: vec![t.artifact("bootstrap.csv", cfg)],
        summary: lines.join("\n"),
    })
}

pub fn run_diff(cfg: &RunConfig, a: Category, b: Category) -> Result<Outcome> {
    let data = load(cfg)?;
    let table = cars(cfg, &data)?;
    let r = block_bootstrap_diff(&table, a, b, cfg.weighting, &bootstrap_config(cfg))?;
    let mut t = Table::new(&INFERENCE_HEADER);
    t.push(bootstrap_row("bootstrap_diff", a.token(), b.token(), &r));
    Ok(Outcome {
        artifacts: vec![t.artifact("diff.csv", cfg)],
        summary: format!(
            "{a} - {b}: {:.4} CI [{:.4}, {:.4}] p {:.3} ({} weighting)",
            r.estimate, r.ci_low, r.ci_high, r.p_value, r.scheme
        ),
    })
}

/// Whether permutation runs on event means or on pooled asset CARs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermUnit {
    Event,
    Observation,
}

pub fn run_permute(cfg: &RunConfig, a: Category, b: Category, unit: PermUnit) -> Result<Outcome> {
    let data = load(cfg)?;
    let table = cars(cfg, &data)?;
    let values = |c: Category| -> Vec<f64> {
        match unit {
            PermUnit::Event => event_level_means(&table, c).into_iter().map(|(_, m)| m).collect(),
            PermUnit::Observation => table.rows().iter().filter(|r| r.category == c).map(|r| r.car).collect(),
        }
    };
    let r = permutation_test(&values(a), &values(b), cfg.max_exact, cfg.seed)?;
    let mut t = Table::new(&INFERENCE_HEADER);
    t.push(vec![
        "permutation".into(),
        a.token().into(),
        b.token().into(),
        num(r.observed_diff),
        String::new(),
        String::new(),
        String::new(),
        format!("{:.4}", r.p_value),
        format!(
            "unit={};exact={};assignments={}",
            if unit == PermUnit::Event { "event" } else { "observation" },
            r.exact,
            r.n_assignments
        ),
    ]);
    Ok(Outcome {
        artifacts: vec![t.artifact("permutation.csv", cfg)],
        summary: format!(
            "{a} - {b}: {:.4}, {} {} assignments, p {:.3}",
            r.observed_diff,
            r.n_assignments,
            if r.exact { "exact" } else { "sampled" },
            r.p_value
        ),
    })
}

pub fn run_im(cfg: &RunConfig, a: Category, b: Category) -> Result<Outcome> {
    let data = load(cfg)?;
    let table = cars(cfg, &data)?;
    let means = |c| event_level_means(&table, c).into_iter().map(|(_, m)| m).collect::<Vec<_>>();
    let r = im_t_test(&means(a), &means(b))?;
    let mut t = Table::new(&INFERENCE_HEADER);
    t.push(ttest_row("im_t", a.token(), b.token(), &r));
    Ok(Outcome {
        artifacts: vec![t.artifact("im.csv", cfg)],
        summary: format!("{a} - {b}: {:.4}, t {:.3}, df {:.1}, p {:.3}", r.diff, r.t_stat, r.df, r.p_value),
    })
}

pub struct PlaceboArgs {
    pub n: usize,
    pub horizon: u32,
    pub period: Option<(NaiveDate, NaiveDate)>,
}

pub struct PlaceboRun {
    pub events: EventSet,
    pub table: CarTable,
    pub bootstrap: Option<BootstrapResult>,
    pub t_test: Option<TTestResult>,
}

pub fn placebo_run(cfg: &RunConfig, data: &Loaded, args: &PlaceboArgs) -> Result<PlaceboRun> {
    let dates = data.returns.dates();
    let period = match args.period {
        Some(p) => p,
        None => (
            *dates.first().ok_or_else(|| anyhow!("empty price calendar"))?,
            *dates.last().expect("nonempty"),
        ),
    };
    let spec = PlaceboSpec {
        n_events: args.n,
        exclusion_horizon: args.horizon,
        period,
        weekday_target: None,
        seed: cfg.seed,
    };
    let events = generate_placebos(&data.events, &spec)?;
    let table = event_panel_cars(&data.returns, &events, &cfg.window_config(), &cfg.model, cfg.cap)?;
    let cl = clusters(&table, Category::Placebo);
    let bootstrap = bootstrap_clusters_mean(&cl, cfg.weighting, &bootstrap_config(cfg)).ok();
    let pooled: Vec<f64> = table.rows().iter().map(|r| r.car).collect();
    Ok(PlaceboRun {
        events,
        table,
        bootstrap,
        t_test: one_sample_t(&pooled).ok(),
    })
}

pub fn run_placebo(cfg: &RunConfig, args: &PlaceboArgs) -> Result<Outcome> {
    let data = load(cfg)?;
    let run = placebo_run(cfg, &data, args)?;
    let mut t = Table::new(&INFERENCE_HEADER);
    if let Some(r) = &run.bootstrap {
        t.push(bootstrap_row("placebo_bootstrap", "Placebo", "", r));
    }
    if let Some(r) = &run.t_test {
        t.push(ttest_row("placebo_pooled_t", "Placebo", "", r));
    }
    let mut registry = crate::output::provenance(cfg).into_bytes();
    write_events(&run.events, &mut registry)?;
    let summary = match &run.bootstrap {
        Some(r) => format!(
            "{} placebo events, {} analyzed: mean CAR {:.4}, p {:.3}",
            run.events.len(),
            r.n_events[0],
            r.estimate,
            r.p_value
        ),
        None => format!("{} placebo events, too few analyzable for inference", run.events.len()),
    };
    Ok(Outcome {
        artifacts: vec![
            Artifact {
                name: "placebo_events.csv".into(),
                contents: String::from_utf8(registry)?,
            },
            t.artifact("placebo.csv", cfg),
        ],
        summary,
    })
}

pub fn loo_table(cfg: &RunConfig, table: &CarTable, category: Category) -> Result<Table> {
    let r = leave_one_out(table, category, cfg.weighting)?;
    let mut t = Table::new(&["excluded", "event_car", "mean_car", "pct_change", "sign_flip"]);
    t.push(vec!["baseline".into(), String::new(), num(r.baseline), String::new(), String::new()]);
    for row in &r.rows {
        t.push(vec![
            row.event_id.clone(),
            num(row.event_car),
            num(row.mean_excluding),
            num(row.pct_change),
            row.sign_flip.to_string(),
        ]);
    }
    Ok(t)
}

pub fn run_loo(cfg: &RunConfig, category: Category) -> Result<Outcome> {
    let data = load(cfg)?;
    let table = cars(cfg, &data)?;
    let t = loo_table(cfg, &table, category)?;
    Ok(Outcome {
        summary: format!("{category}: {} leave-one-out rows", t.rows().len() - 1),
        artifacts: vec![t.artifact("loo.csv", cfg)],
    })
}

pub fn sweep_table(report: &SweepReport) -> Table {
    let mut header = vec!["setting".to_string()];
    header.extend(Category::ANALYZED.iter().map(|c| c.token().to_string()));
    header.extend(["delta", "ci_low", "ci_high", "p", "null"].map(String::from));
    let mut t = Table::new(&header);
    for s in std::iter::once(&report.baseline).chain(&report.settings) {
        let label = if std::ptr::eq(s, &report.baseline) { format!("baseline {}", s.label) } else { s.label.clone() };
        let mut row = vec![label];
        row.extend(Category::ANALYZED.iter().map(|c| opt(s.mean(*c))));
        match &s.diff {
            Some(d) => row.extend([
                num(d.estimate),
                num(d.ci_low),
                num(d.ci_high),
                format!("{:.4}", d.p_value),
                (d.p_value >= 0.05).to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        t.push(row);
    }
    let mut signs = vec!["sign_consistent".to_string()];
    signs.extend(Category::ANALYZED.iter().map(|c| {
        report.sign_consistent.iter().find(|(k, _)| k == c).map(|(_, ok)| ok.to_string()).unwrap_or_default()
    }));
    signs.extend(std::iter::repeat_n(String::new(), 5));
    t.push(signs);
    t
}

pub fn run_sweep_window(cfg: &RunConfig, windows: &[EventWindow], a: Category, b: Category) -> Result<Outcome> {
    let data = load(cfg)?;
    let r = window_sweep(&inputs(cfg, &data, a, b), windows)?;
    Ok(Outcome {
        summary: format!("{} windows swept", r.settings.len()),
        artifacts: vec![sweep_table(&r).artifact("sweep_window.csv", cfg)],
    })
}

pub fn run_sweep_cap(cfg: &RunConfig, caps: &[Option<f64>], a: Category, b: Category) -> Result<Outcome> {
    let data = load(cfg)?;
    let r = cap_sweep(&inputs(cfg, &data, a, b), caps)?;
    let nulls: Vec<String> = r
        .settings
        .iter()
        .map(|s| format!("{}: {}", s.label, s.is_null(0.05).map_or("n/a", |n| if n { "null" } else { "reject" })))
        .collect();
    Ok(Outcome {
        summary: nulls.join(", "),
        artifacts: vec![sweep_table(&r).artifact("sweep_cap.csv", cfg)],
    })
}

pub fn parse_filter(s: &str) -> Result<SubsampleFilter, String> {
    match s {
        "exogenous-only" => Ok(SubsampleFilter::ExogenousOnly),
        "non-overlapping" => Ok(SubsampleFilter::NonOverlapping),
        _ => match s.strip_prefix("exclude:") {
            Some(ids) => Ok(SubsampleFilter::ExcludeIds(
                ids.split([';', ',']).map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect(),
            )),
            None => Err(format!("unknown filter {s:?} (exogenous-only, non-overlapping, exclude:ID;ID)")),
        },
    }
}

pub const SUBSAMPLE_HEADER: [&str; 11] = [
    "filter", "n_a", "n_b", "mean_a", "mean_b", "delta", "ci_low", "ci_high", "p_bootstrap", "p_permutation",
    "assignments",
];

pub fn subsample_table(
    cfg: &RunConfig,
    table: &CarTable,
    events: &EventSet,
    filters: &[SubsampleFilter],
    a: Category,
    b: Category,
) -> Result<Table> {
    let cmp = comparison(cfg, a, b);
    let mut t = Table::new(&SUBSAMPLE_HEADER);
    for f in filters {
        let r = subsample_run(table, events, f, &cmp)?;
        let g = |c: Category| r.groups.iter().find(|x| x.category == c).expect("analyzed category");
        t.push(vec![
            f.to_string(),
            g(a).n_events.to_string(),
            g(b).n_events.to_string(),
            opt(g(a).mean),
            opt(g(b).mean),
            num(r.diff.estimate),
            num(r.diff.ci_low),
            num(r.diff.ci_high),
            format!("{:.4}", r.diff.p_value),
            format!("{:.4}", r.permutation.p_value),
            r.permutation.n_assignments.to_string(),
        ]);
    }
    Ok(t)
}

pub fn run_subsample(cfg: &RunConfig, filters: &[SubsampleFilter], a: Category, b: Category) -> Result<Outcome> {
    let data = load(cfg)?;
    let table = cars(cfg, &data)?;
    let t = subsample_table(cfg, &table, &data.events, filters, a, b)?;
    Ok(Outcome {
        summary: format!("{} filters evaluated", filters.len()),
        artifacts: vec![t.artifact("subsample.csv", cfg)],
    })
}

pub fn decompose_table(table: &CarTable, events: &EventSet, by: DecomposeBy) -> Table {
    let d = group_decompose(table, events, by);
    let mut t = Table::new(&["row", "cell", "n_obs", "mean_car"]);
    for row in &d.rows {
        for c in &row.cells {
            t.push(vec![row.label.clone(), c.key.clone(), c.n_obs.to_string(), num(c.mean)]);
        }
        t.push(vec![row.label.clone(), "spread".into(), row.n_obs.to_string(), num(row.spread)]);
    }
    t
}

pub fn run_decompose(cfg: &RunConfig, by: DecomposeBy) -> Result<Outcome> {
    let data = load(cfg)?;
    let table = cars(cfg, &data)?;
    let t = decompose_table(&table, &data.events, by);
    Ok(Outcome {
        summary: format!("{} decomposition rows", t.rows().len()),
        artifacts: vec![t.artifact("decompose.csv", cfg)],
    })
}

pub fn power_line(input: &PowerInput) -> Result<(String, Table)> {
    let r = input.evaluate()?;
    let zs = r.z_alpha + r.z_beta;
    let line = format!(
        "N per group = {} [2 * (({:.6} + {:.6}) / {})^2 = {:.2}]; MDE = {:.4} [{:.6} * {:.4} * sqrt(1/{} + 1/{})]",
        r.required_n, r.z_alpha, r.z_beta, input.d, r.n_exact, r.mde, zs, input.sigma_pooled, input.n1, input.n2
    );
    let mut t = Table::new(&["alpha", "power", "d", "sigma_pooled", "n1", "n2", "z_alpha", "z_beta", "n_exact", "n_per_group", "mde"]);
    t.push(vec![
        input.alpha.to_string(),
        input.power.to_string(),
        input.d.to_string(),
        input.sigma_pooled.to_string(),
        input.n1.to_string(),
        input.n2.to_string(),
        num(r.z_alpha),
        num(r.z_beta),
        num(r.n_exact),
        r.required_n.to_string(),
        num(r.mde),
    ]);
    Ok((line, t))
}

pub fn run_power(cfg: &RunConfig, input: &PowerInput) -> Result<Outcome> {
    let (line, t) = power_line(input)?;
    Ok(Outcome {
        artifacts: vec![t.artifact("power.csv", cfg)],
        summary: line,
    })
}

pub fn run_calibrate(cfg: &RunConfig, spec: &SimSpec) -> Result<Outcome> {
    let r = coverage_study(spec)?;
    let mut t = Table::new(&[
        "n_assets", "n_events", "rho", "daily_sd", "delta", "trials", "naive_rejection_rate", "bootstrap_rejection_rate",
        "bootstrap_ci_coverage", "mean_estimate", "estimate_mc_se", "true_car", "agreement_rate",
    ]);
    t.push(vec![
        spec.n_assets.to_string(),
        spec.n_events.to_string(),
        spec.rho.to_string(),
        spec.daily_sd.to_string(),
        spec.delta.to_string(),
        r.trials.to_string(),
        format!("{:.4}", r.naive_rejection_rate),
        format!("{:.4}", r.bootstrap_rejection_rate),
        format!("{:.4}", r.bootstrap_ci_coverage),
        num(r.mean_estimate),
        num(r.estimate_mc_se),
        num(r.true_car),
        format!("{:.4}", r.agreement_rate),
    ]);
    Ok(Outcome {
        artifacts: vec![t.artifact("calibration.csv", cfg)],
        summary: format!(
            "naive rejection {:.3}, bootstrap rejection {:.3}, bootstrap coverage {:.3} over {} trials",
            r.naive_rejection_rate, r.bootstrap_rejection_rate, r.bootstrap_ci_coverage, r.trials
        ),
    })
}

/// Group statistic for a category under the configured scheme.
pub fn mean_of(table: &CarTable, cfg: &RunConfig, c: Category) -> Option<f64> {
    group_mean(table, c, cfg.weighting)
}

pub fn parse_caps(list: &str) -> Result<Vec<Option<f64>>, String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|e| format!("cap {s:?}: {e}"))
            }
        })
        .collect()
}

pub fn parse_windows(list: &str) -> Result<Vec<EventWindow>, String> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

pub fn cap_text(cap: Option<f64>) -> String {
    cap_label(cap)
}
