//! Combined Markdown report: every battery run once on the configured data,
//! with realized sample sizes and the weighting scheme spelled out.

use std::fmt::Write as _;

use anyhow::Result;
use eventkit::inference::{estimate_rho_bar, kp_adjust, one_sample_t, welch_t};
use eventkit::power::PowerInput;
use eventkit::robustness::{cap_sweep, window_sweep, DecomposeBy, SubsampleFilter, SweepReport};
use eventkit::{
    block_bootstrap_diff, block_bootstrap_mean, event_level_means, event_panel_cars, im_t_test, permutation_test,
    CarTable, Category, EventWindow,
};

use crate::commands::{
    bootstrap_config, bootstrap_row, car_artifacts, cars, decompose_table, inputs, load, loo_table, mean_of,
    placebo_run, power_line, subsample_table, sweep_table, ttest_row, PlaceboArgs, INFERENCE_HEADER,
};
use crate::config::RunConfig;
use crate::output::{Artifact, Table};

pub const REPORT_WINDOWS: &str = "0:1,0:3,0:5,-5:30";
pub const REPORT_CAPS: &str = "0.30,0.50,0.75,none";
/// Window used to look for drift before the event.
pub const PRE_EVENT_WINDOW: (i32, i32) = (-30, -1);

fn pct(x: f64) -> String {
    format!("{:+.2}%", 100.0 * x)
}

fn opt_pct(x: Option<f64>) -> String {
    x.map_or("n/a".into(), pct)
}

/// Renders a [`Table`] as a Markdown table without the provenance line.
fn markdown(t: &Table, header: &[&str]) -> String {
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in t.rows() {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

fn sweep_markdown(r: &SweepReport) -> String {
    let mut s = String::from("| setting | Infra_Neg | Infra_Pos | Reg_Neg | Reg_Pos | N Infra_Neg | N Reg_Neg | delta | p |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for (i, st) in std::iter::once(&r.baseline).chain(&r.settings).enumerate() {
        let n = |c: Category| st.groups.iter().find(|g| g.category == c).map_or(0, |g| g.n_events);
        let label = if i == 0 { format!("{} (baseline)", st.label) } else { st.label.clone() };
        let (d, p) = st.diff.as_ref().map_or(("n/a".into(), "n/a".into()), |d| (pct(d.estimate), format!("{:.3}", d.p_value)));
        let _ = writeln!(
            s,
            "| {label} | {} | {} | {} | {} | {} | {} | {d} | {p} |",
            opt_pct(st.mean(Category::InfraNegative)),
            opt_pct(st.mean(Category::InfraPositive)),
            opt_pct(st.mean(Category::RegNegative)),
            opt_pct(st.mean(Category::RegPositive)),
            n(Category::InfraNegative),
            n(Category::RegNegative),
        );
    }
    let signs: Vec<String> = r.sign_consistent.iter().map(|(c, ok)| format!("{c} {}", if *ok { "yes" } else { "no" })).collect();
    let _ = writeln!(s, "\nSign consistent with baseline: {}.", signs.join(", "));
    s
}

fn sample_section(md: &mut String, table: &CarTable, data_events: &eventkit::EventSet) {
    md.push_str("## Event sample\n\n| category | registered | analyzed events | asset CARs | significant (abs CAR > 2 sigma) |\n|---|---|---|---|---|\n");
    for c in Category::ANALYZED {
        let sig = table.rows().iter().filter(|r| r.category == c && r.significant).count();
        let _ = writeln!(
            md,
            "| {c} | {} | {} | {} | {sig} |",
            data_events.count(c),
            table.n_events(c),
            table.n_obs(c)
        );
    }
    let _ = writeln!(
        md,
        "\n{} (event, asset) pairs were skipped; reasons are listed in `skipped.csv`. Excluded events registered: {}.\n",
        table.skipped().len(),
        data_events.count(Category::Excluded)
    );
}

/// Runs every battery and returns the Markdown document plus the tables it draws on.
pub fn run_report(cfg: &RunConfig) -> Result<(Vec<Artifact>, String)> {
    let data = load(cfg)?;
    let table = cars(cfg, &data)?;
    let (a, b) = (Category::InfraNegative, Category::RegNegative);
    let boot = bootstrap_config(cfg);
    let mut artifacts = car_artifacts(cfg, &table)?;
    let mut md = String::new();

    let _ = writeln!(md, "# Event study report\n");
    let _ = writeln!(
        md,
        "Config hash `{}`, seed {}, {} bootstrap replications at level {}. Model `{}`, event window {}, estimation {} days (minimum {}) ending {} days before the window, cap {}. Group statistics are **{}-weighted**.\n",
        cfg.hash(),
        cfg.seed,
        cfg.replications,
        cfg.ci_level,
        cfg.model,
        cfg.window,
        cfg.estimation_length,
        cfg.estimation_min,
        cfg.gap,
        crate::commands::cap_text(cfg.cap),
        cfg.weighting,
    );

    sample_section(&mut md, &table, &data.events);

    // Headline bootstrap per category and for the main contrast.
    let mut inf = Table::new(&INFERENCE_HEADER);
    md.push_str("## Mean CAR by category (event-block bootstrap)\n\n| category | events | mean CAR | 95% CI | p |\n|---|---|---|---|---|\n");
    for c in Category::ANALYZED {
        match block_bootstrap_mean(&table, c, cfg.weighting, &boot) {
            Ok(r) => {
                let _ = writeln!(md, "| {c} | {} | {} | [{}, {}] | {:.3} |", r.n_events[0], pct(r.estimate), pct(r.ci_low), pct(r.ci_high), r.p_value);
                inf.push(bootstrap_row("bootstrap_mean", c.token(), "", &r));
            }
            Err(e) => {
                let _ = writeln!(md, "| {c} | {} | {} | n/a | n/a ({e}) |", table.n_events(c), opt_pct(mean_of(&table, cfg, c)));
            }
        }
    }
    match block_bootstrap_diff(&table, a, b, cfg.weighting, &boot) {
        Ok(r) => {
            let _ = writeln!(
                md,
                "\nDifference {a} minus {b}: {} (CI [{}, {}], bootstrap p {:.3}, {} vs {} events).\n",
                pct(r.estimate), pct(r.ci_low), pct(r.ci_high), r.p_value, r.n_events[0], r.n_events[1]
            );
            inf.push(bootstrap_row("bootstrap_diff", a.token(), b.token(), &r));
        }
        Err(e) => {
            let _ = writeln!(md, "\nDifference {a} minus {b}: not estimable ({e}).\n");
        }
    }

    // Event-level tests that do not lean on asymptotics.
    md.push_str("## Event-level tests\n\n");
    let means = |c| event_level_means(&table, c).into_iter().map(|(_, m)| m).collect::<Vec<_>>();
    let (ma, mb) = (means(a), means(b));
    match permutation_test(&ma, &mb, cfg.max_exact, cfg.seed) {
        Ok(p) => {
            let _ = writeln!(
                md,
                "- Permutation test on event means: difference {}, {} {} assignments, p {:.3}.",
                pct(p.observed_diff), if p.exact { "exact over" } else { "sampled with" }, p.n_assignments, p.p_value
            );
            inf.push(vec![
                "permutation".into(), a.token().into(), b.token().into(), crate::output::num(p.observed_diff),
                String::new(), String::new(), String::new(), format!("{:.4}", p.p_value),
                format!("unit=event;exact={};assignments={}", p.exact, p.n_assignments),
            ]);
        }
        Err(e) => {
            let _ = writeln!(md, "- Permutation test: not run ({e}).");
        }
    }
    match im_t_test(&ma, &mb) {
        Ok(r) => {
            let _ = writeln!(md, "- Welch t on event means: t {:.3}, df {:.1}, p {:.3}.", r.t_stat, r.df, r.p_value);
            inf.push(ttest_row("im_t", a.token(), b.token(), &r));
        }
        Err(e) => {
            let _ = writeln!(md, "- Welch t on event means: not run ({e}).");
        }
    }
    for c in [a, b] {
        let pooled: Vec<f64> = table.rows().iter().filter(|r| r.category == c).map(|r| r.car).collect();
        if let Ok(r) = one_sample_t(&pooled) {
            let n_assets = table.assets().len().max(1);
            let adj = estimate_rho_bar(&table, c).and_then(|rho| kp_adjust(r.t_stat, n_assets, rho).ok().map(|t| (rho, t)));
            let _ = writeln!(
                md,
                "- {c} pooled t (treats {} asset CARs as independent): t {:.3}, p {:.3}{}.",
                pooled.len(),
                r.t_stat,
                r.p_value,
                adj.map_or(String::new(), |(rho, t)| format!("; correlation-adjusted t {t:.3} with average correlation {rho:.3}"))
            );
            inf.push(ttest_row("naive_pooled_t", c.token(), "", &r));
        }
    }
    md.push('\n');
    artifacts.push(inf.artifact("inference.csv", cfg));

    // Anticipation: drift over the month before the event.
    let pre_window = EventWindow::new(PRE_EVENT_WINDOW.0, PRE_EVENT_WINDOW.1)?;
    let pre = event_panel_cars(&data.returns, &data.events, &cfg.window_config().with_window(pre_window), &cfg.model, cfg.cap)?;
    let _ = writeln!(md, "## Pre-event drift, window {pre_window}\n\n| category | events | mean pre-event CAR |\n|---|---|---|");
    let mut pre_t = Table::new(&INFERENCE_HEADER);
    for c in Category::ANALYZED {
        let m = mean_of(&pre, cfg, c);
        let _ = writeln!(md, "| {c} | {} | {} |", pre.n_events(c), opt_pct(m));
    }
    let pre_means = |cs: [Category; 2]| -> Vec<f64> {
        cs.iter().flat_map(|&c| event_level_means(&pre, c)).map(|(_, m)| m).collect()
    };
    match welch_t(
        &pre_means([Category::InfraNegative, Category::InfraPositive]),
        &pre_means([Category::RegNegative, Category::RegPositive]),
    ) {
        Ok(r) => {
            let _ = writeln!(md, "\nWelch t, Infra vs Reg event-level pre-event CARs: t {:.3}, df {:.1}, p {:.3}.\n", r.t_stat, r.df, r.p_value);
            pre_t.push(ttest_row("pre_event_welch", "Infra", "Reg", &r));
        }
        Err(e) => {
            let _ = writeln!(md, "\nWelch t on pre-event CARs: not run ({e}).\n");
        }
    }
    artifacts.push(pre_t.artifact("pre_event.csv", cfg));

    // Heterogeneity across assets.
    let dec = decompose_table(&table, &data.events, DecomposeBy::Asset);
    md.push_str("## Mean CAR by asset\n\n");
    md.push_str(&markdown(&dec, &["category", "asset", "N", "mean CAR"]));
    md.push('\n');
    artifacts.push(dec.artifact("decompose_asset.csv", cfg));

    // Window and cap sensitivity.
    let pin = inputs(cfg, &data, a, b);
    let windows: Vec<EventWindow> = crate::commands::parse_windows(REPORT_WINDOWS).map_err(anyhow::Error::msg)?;
    let ws = window_sweep(&pin, &windows)?;
    md.push_str("## Event window sensitivity\n\n");
    md.push_str(&sweep_markdown(&ws));
    md.push('\n');
    artifacts.push(sweep_table(&ws).artifact("sweep_window.csv", cfg));

    // Leave-one-out on the main negative infrastructure group.
    md.push_str("## Leave-one-out, Infra_Neg\n\n");
    match loo_table(cfg, &table, a) {
        Ok(t) => {
            md.push_str(&markdown(&t, &["excluded", "event CAR", "mean CAR", "pct change", "sign flip"]));
            artifacts.push(t.artifact("loo.csv", cfg));
        }
        Err(e) => {
            let _ = writeln!(md, "Not run: {e}.");
        }
    }
    md.push('\n');

    // Placebo events.
    md.push_str("## Placebo events\n\n");
    let placebo_args = PlaceboArgs { n: 200, horizon: 30, period: None };
    match placebo_run(cfg, &data, &placebo_args) {
        Ok(run) => {
            let analyzed = run.table.n_events(Category::Placebo);
            match &run.bootstrap {
                Some(r) => {
                    let _ = writeln!(
                        md,
                        "{} placebo dates drawn, {analyzed} analyzed: mean CAR {} (CI [{}, {}], p {:.3}).",
                        run.events.len(), pct(r.estimate), pct(r.ci_low), pct(r.ci_high), r.p_value
                    );
                }
                None => {
                    let _ = writeln!(md, "{} placebo dates drawn, {analyzed} analyzed; too few for the bootstrap.", run.events.len());
                }
            }
            if let Some(t) = &run.t_test {
                let _ = writeln!(md, "Pooled t over placebo asset CARs: {:.3} (p {:.3}).", t.t_stat, t.p_value);
            }
        }
        Err(e) => {
            let _ = writeln!(md, "Not run: {e}.");
        }
    }
    md.push('\n');

    // Winsorization.
    let caps = crate::commands::parse_caps(REPORT_CAPS).map_err(anyhow::Error::msg)?;
    let cs = cap_sweep(&pin, &caps)?;
    md.push_str("## Winsorization sensitivity\n\n");
    md.push_str(&sweep_markdown(&cs));
    md.push('\n');
    artifacts.push(sweep_table(&cs).artifact("sweep_cap.csv", cfg));

    // Subsamples.
    md.push_str("## Subsample robustness\n\n");
    let filters = [SubsampleFilter::ExogenousOnly, SubsampleFilter::NonOverlapping];
    for f in &filters {
        match subsample_table(cfg, &table, &data.events, std::slice::from_ref(f), a, b) {
            Ok(t) => {
                md.push_str(&markdown(&t, &crate::commands::SUBSAMPLE_HEADER));
                artifacts.push(t.artifact(&format!("subsample_{f}.csv"), cfg));
            }
            Err(e) => {
                let _ = writeln!(md, "{f}: not run ({e}).");
            }
        }
        md.push('\n');
    }

    // Power at the realized group sizes.
    md.push_str("## Power\n\n");
    let pooled_sd = {
        let all: Vec<f64> = [a, b].iter().flat_map(|&c| means(c)).collect();
        eventkit::stats::sample_sd(&all)
    };
    let input = PowerInput {
        n1: ma.len() as u64,
        n2: mb.len() as u64,
        sigma_pooled: if pooled_sd > 0.0 { pooled_sd } else { PowerInput::default().sigma_pooled },
        ..PowerInput::default()
    };
    match power_line(&input) {
        Ok((line, t)) => {
            let _ = writeln!(md, "{line}\n");
            artifacts.push(t.artifact("power.csv", cfg));
        }
        Err(e) => {
            let _ = writeln!(md, "Not computed: {e}.\n");
        }
    }

    md.push_str(
        "## Choices fixed by this toolkit\n\n\
- The return-threshold selection criterion uses the window [0,+2].\n\
- When capping is active it applies to the proxy series as well as to each asset.\n\
- Event windows include day 0; missing days inside a window are skipped, not filled.\n\
- The pre-event comparison pools both signs within each event type and uses event-level means.\n\
- Bootstrap p is twice the smaller tail share of replications on either side of zero, floored at 2/B; intervals are percentile intervals with linear interpolation.\n\
- The average cross-asset correlation used for the adjusted t is the mean pairwise correlation of event-window abnormal returns.\n",
    );

    artifacts.push(Artifact {
        name: "report.md".into(),
        contents: md.clone(),
    });
    Ok((artifacts, md))
}
