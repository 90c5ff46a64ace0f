use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use bistable_moran::lineage::DiagnosticsConfig;
use bistable_moran::sim::{Boundary, LogFilter, RunOptions, Window};
use bistable_moran::{ModelParams, RawParams};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

/// How sampled individuals are chosen among the type-A slots near the front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Uniform without replacement among the eligible slots.
    #[default]
    Uniform,
    /// The eligible slots closest to the front, ties broken by site and label.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    /// Number of sampled individuals.
    #[serde(default = "default_k0")]
    pub k0: usize,
    /// Half-width of the band around the front from which samples are drawn.
    #[serde(default = "default_band", rename = "K0")]
    pub band: f64,
    #[serde(default)]
    pub sampler: Sampler,
    #[serde(default)]
    pub seed: u64,
    /// Backward horizon; the full log when absent.
    #[serde(default)]
    pub horizon: Option<f64>,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { k0: default_k0(), band: default_band(), sampler: Sampler::Uniform, seed: 0, horizon: None }
    }
}

fn default_k0() -> usize {
    2
}
fn default_band() -> f64 {
    2.0
}
fn default_width() -> f64 {
    40.0
}
fn default_cadence() -> f64 {
    0.1
}
fn default_boundary() -> Boundary {
    Boundary::Pinned
}
fn default_filter() -> LogFilter {
    LogFilter::All
}
fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

/// A complete experiment description, read from one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub params: RawParams,
    #[serde(default = "default_width")]
    pub window_width: f64,
    /// Initial front position; the window is centred on it.
    #[serde(default)]
    pub center: f64,
    pub duration: f64,
    #[serde(default = "default_cadence")]
    pub cadence: f64,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    #[serde(default = "default_filter")]
    pub filter: LogFilter,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sample: SampleSpec,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsConfig>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("malformed config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Checks every field before anything runs.
    pub fn validate(&self) -> Result<ModelParams> {
        if self.version != CONFIG_VERSION {
            bail!("config version {} is not supported (expected {CONFIG_VERSION})", self.version);
        }
        let params = ModelParams::from_raw(self.params)?;
        ensure!(self.window_width > 0.0, "window_width must be positive");
        ensure!(self.center.is_finite(), "center must be finite");
        ensure!(self.duration >= 0.0 && self.duration.is_finite(), "duration must be finite and >= 0");
        ensure!(self.cadence > 0.0 && self.cadence.is_finite(), "cadence must be positive");
        ensure!(!self.seeds.is_empty(), "at least one seed is required");
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        ensure!(seeds.len() == self.seeds.len(), "seeds must be distinct");
        ensure!(self.sample.k0 >= 1, "sample.k0 must be at least 1");
        ensure!(self.sample.band >= 0.0, "sample.K0 must be non-negative");
        if let Some(h) = self.sample.horizon {
            ensure!(h >= 0.0, "sample.horizon must be non-negative");
        }
        if let Some(d) = &self.diagnostics {
            d.validate()?;
        }
        Ok(params)
    }

    pub fn window(&self) -> Window {
        Window::centered(self.params.n, self.center, self.window_width)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions { cadence: self.cadence, boundary: self.boundary, filter: self.filter, ..RunOptions::default() }
    }

    pub fn diagnostics(&self) -> Result<DiagnosticsConfig> {
        let params = self.validate()?;
        Ok(self.diagnostics.unwrap_or_else(|| DiagnosticsConfig::default_for(&params)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "params": {"n": 2, "N": 50, "alpha": 0.5, "s0": 1.0, "m": 2.0},
        "duration": 1.0,
        "seeds": [1, 2]
    }"#;

    #[test]
    fn defaults_fill_optional_fields() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.window_width, 40.0);
        assert_eq!(cfg.cadence, 0.1);
        assert_eq!(cfg.boundary, Boundary::Pinned);
        assert_eq!(cfg.sample, SampleSpec::default());
        assert_eq!(cfg.window().len, 81);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let typo = MINIMAL.replace("\"duration\"", "\"durration\"");
        assert!(RunConfig::from_json(&typo).is_err());
        let nested = MINIMAL.replace("\"m\": 2.0", "\"m\": 2.0, \"mu\": 1");
        assert!(RunConfig::from_json(&nested).is_err());
        let version = MINIMAL.replace("\"version\": 1", "\"version\": 2");
        assert!(RunConfig::from_json(&version).unwrap_err().to_string().contains("version"));
        let alpha = MINIMAL.replace("\"alpha\": 0.5", "\"alpha\": 1.2");
        assert!(RunConfig::from_json(&alpha).is_err());
        let dup = MINIMAL.replace("[1, 2]", "[3, 3]");
        assert!(RunConfig::from_json(&dup).is_err());
    }

    #[test]
    fn boundary_and_sample_parse() {
        let text = MINIMAL.replace(
            "\"seeds\"",
            r#""boundary": {"mode": "follow", "ahead": 40}, "filter": "a_parent_only",
               "sample": {"k0": 4, "K0": 1.5, "sampler": "nearest"}, "seeds""#,
        );
        let cfg = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg.boundary, Boundary::Follow { ahead: 40 });
        assert_eq!(cfg.filter, LogFilter::AParentOnly);
        assert_eq!(cfg.sample.k0, 4);
        assert_eq!(cfg.sample.sampler, Sampler::Nearest);
    }
}
