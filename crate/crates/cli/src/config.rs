//! Run configuration: defaults, a flat `key = value` file, the
//! `EVENTKIT_SEED` fallback and command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use eventkit::{EventWindow, ModelSpec, WeightingScheme, WindowConfig};
use sha2::{Digest, Sha256};

pub const SEED_ENV: &str = "EVENTKIT_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub events: Option<PathBuf>,
    /// Empty means every asset in the price file.
    pub assets: Vec<String>,
    pub model: ModelSpec,
    pub window: EventWindow,
    pub estimation_length: usize,
    pub estimation_min: usize,
    pub gap: u32,
    pub cap: Option<f64>,
    pub weighting: WeightingScheme,
    pub replications: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub overlap_horizon: u32,
    pub max_exact: u64,
    pub out: PathBuf,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let w = WindowConfig::default();
        Self {
            prices: None,
            events: None,
            assets: Vec::new(),
            model: ModelSpec::ConstantMean,
            window: w.event_window,
            estimation_length: w.estimation_length,
            estimation_min: w.estimation_min,
            gap: w.gap_length,
            cap: None,
            weighting: WeightingScheme::ObservationWeighted,
            replications: 5000,
            seed: 42,
            ci_level: 0.95,
            overlap_horizon: 30,
            max_exact: 1_000_000,
            out: PathBuf::from("out"),
            workers: None,
        }
    }
}

fn parse_cap(v: &str) -> Result<Option<f64>> {
    if v.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let c: f64 = v.parse().with_context(|| format!("cap {v:?} is not a number or none"))?;
    if !(c > 0.0 && c.is_finite()) {
        bail!("cap must be positive, got {v}");
    }
    Ok(Some(c))
}

impl RunConfig {
    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            estimation_length: self.estimation_length,
            estimation_min: self.estimation_min,
            gap_length: self.gap,
            event_window: self.window,
        }
    }

    /// Sets one key. Keys match the flag names without dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = |e: String| anyhow!("{key} = {v:?}: {e}");
        match key.trim() {
            "prices" => self.prices = Some(PathBuf::from(v)),
            "events" => self.events = Some(PathBuf::from(v)),
            "assets" => {
                self.assets = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
            }
            "model" => self.model = v.parse().map_err(bad)?,
            "window" => self.window = v.parse().map_err(bad)?,
            "estimation_length" => self.estimation_length = v.parse().map_err(|e| bad(format!("{e}")))?,
            "estimation_min" => self.estimation_min = v.parse().map_err(|e| bad(format!("{e}")))?,
            "gap" => self.gap = v.parse().map_err(|e| bad(format!("{e}")))?,
            "cap" => self.cap = parse_cap(v)?,
            "weighting" => self.weighting = v.parse().map_err(bad)?,
            "B" => self.replications = v.parse().map_err(|e| bad(format!("{e}")))?,
            "seed" => self.seed = v.parse().map_err(|e| bad(format!("{e}")))?,
            "level" => self.ci_level = v.parse().map_err(|e| bad(format!("{e}")))?,
            "overlap_horizon" => self.overlap_horizon = v.parse().map_err(|e| bad(format!("{e}")))?,
            "max_exact" => self.max_exact = v.parse().map_err(|e| bad(format!("{e}")))?,
            "out" => self.out = PathBuf::from(v),
            "workers" => self.workers = Some(v.parse().map_err(|e| bad(format!("{e}")))?),
            other => bail!("unknown configuration key {other:?}"),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key = value", i + 1))?;
            self.set(k, v).with_context(|| format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.window_config().validate()?;
        if self.replications < 1000 {
            bail!("B must be at least 1000, got {}", self.replications);
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            bail!("level must lie in (0, 1), got {}", self.ci_level);
        }
        if self.overlap_horizon == 0 {
            bail!("overlap_horizon must be at least 1");
        }
        Ok(())
    }

    /// Canonical `key=value` listing of every setting that can change results.
    /// Output directory and worker count are left out.
    pub fn canonical(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut s = String::new();
        let _ = writeln!(s, "prices={}", path(&self.prices));
        let _ = writeln!(s, "events={}", path(&self.events));
        let _ = writeln!(s, "assets={}", self.assets.join(","));
        let _ = writeln!(s, "model={}", self.model);
        let _ = writeln!(s, "window={}:{}", self.window.start, self.window.end);
        let _ = writeln!(s, "estimation_length={}", self.estimation_length);
        let _ = writeln!(s, "estimation_min={}", self.estimation_min);
        let _ = writeln!(s, "gap={}", self.gap);
        let _ = writeln!(s, "cap={}", self.cap.map_or("none".to_string(), |c| c.to_string()));
        let _ = writeln!(s, "weighting={}", self.weighting);
        let _ = writeln!(s, "B={}", self.replications);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "level={}", self.ci_level);
        let _ = writeln!(s, "overlap_horizon={}", self.overlap_horizon);
        let _ = writeln!(s, "max_exact={}", self.max_exact);
        s
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_syntax() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nmodel = market-proxy:BTC\n\ncap=0.5\nwindow=-1:5\nassets = BTC, ETH\n", "t")
            .unwrap();
        assert_eq!(c.model, ModelSpec::MarketProxy("BTC".into()));
        assert_eq!(c.cap, Some(0.5));
        assert_eq!(c.window, EventWindow::new(-1, 5).unwrap());
        assert_eq!(c.assets, ["BTC", "ETH"]);
        assert!(c.apply_text("nonsense", "t").is_err());
        assert!(c.apply_text("colour = red", "t").is_err());
        assert!(c.apply_text("cap = -1", "t").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out = PathBuf::from("/elsewhere");
        b.workers = Some(8);
        assert_eq!(a.hash(), b.hash());
        b.seed = 7;
        assert_ne!(a.hash(), b.hash());
    }
}
