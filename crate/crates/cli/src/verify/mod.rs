//! Acceptance experiments, grouped into suites that the `verify` subcommand
//! and the acceptance test both run.

mod deterministic;
mod forward;
mod genealogy;
mod tracer;

use std::fmt;
use std::time::Instant;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

pub use deterministic::{analytic_identities, kingman_reference, pde_wave, sde_stationarity};
pub use forward::{forward_pde_agreement, ForwardSettings};
pub use genealogy::{
    coalescent, coalescent_settings, stationary_distribution, CoalescentOutcome, CoalescentSettings, PathChecks,
    StatdistOutcome, StatdistSettings,
};
pub use tracer::{pair_counts, partition_exactness, tracer_exactness, PairCountSettings, PartitionOutcome};

/// What a measured value must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Bound {
    Below { limit: f64 },
    Above { limit: f64 },
    Within { lo: f64, hi: f64 },
    Equal { value: f64 },
}

impl Bound {
    pub fn admits(self, x: f64) -> bool {
        match self {
            Bound::Below { limit } => x < limit,
            Bound::Above { limit } => x > limit,
            Bound::Within { lo, hi } => (lo..=hi).contains(&x),
            Bound::Equal { value } => x == value,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Below { limit } => write!(f, "< {limit}"),
            Bound::Above { limit } => write!(f, "> {limit}"),
            Bound::Within { lo, hi } => write!(f, "in [{lo}, {hi}]"),
            Bound::Equal { value } => write!(f, "== {value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, bound: Bound) -> Self {
        Self { name: name.into(), measured, pass: bound.admits(measured), bound }
    }
    pub fn below(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self::new(name, measured, Bound::Below { limit })
    }
    pub fn above(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self::new(name, measured, Bound::Above { limit })
    }
    pub fn within(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, measured, Bound::Within { lo, hi })
    }
    pub fn equal(name: impl Into<String>, measured: f64, value: f64) -> Self {
        Self::new(name, measured, Bound::Equal { value })
    }
}

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u32,
    pub title: String,
    pub pass: bool,
    pub seconds: f64,
    pub checks: Vec<Check>,
    /// Free-form supporting numbers.
    pub notes: serde_json::Value,
}

impl CriterionReport {
    pub fn new(id: u32, title: &str, seconds: f64, checks: Vec<Check>, notes: serde_json::Value) -> Self {
        let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
        Self { id, title: title.to_string(), pass, seconds, checks, notes }
    }

    /// One line: verdict, id, title and every check.
    pub fn summary_line(&self) -> String {
        let checks: Vec<String> = self
            .checks
            .iter()
            .map(|c| format!("{}{}={} ({})", if c.pass { "" } else { "!" }, c.name, fmt_value(c.measured), c.bound))
            .collect();
        format!(
            "{} criterion {}: {} [{:.1} s] {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            checks.join("; ")
        )
    }
}

fn fmt_value(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.6}")
    }
}

/// Runs `f` and returns its result with the elapsed wall time in seconds.
pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Analytic,
    Pde,
    Sde,
    Forward,
    Statdist,
    Coalescent,
    Kingman,
    Tracer,
}

impl Suite {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "analytic" => Ok(Suite::Analytic),
            "pde" => Ok(Suite::Pde),
            "sde" => Ok(Suite::Sde),
            "forward" => Ok(Suite::Forward),
            "statdist" => Ok(Suite::Statdist),
            "coalescent" => Ok(Suite::Coalescent),
            "kingman" => Ok(Suite::Kingman),
            "tracer" => Ok(Suite::Tracer),
            other => bail!(
                "unknown suite {other:?} (expected analytic, pde, sde, forward, statdist, coalescent, kingman or tracer)"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suite: Suite,
    pub status: Status,
    pub pass: bool,
    pub seed: u64,
    pub seconds: f64,
    pub criteria: Vec<CriterionReport>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Base seed; each experiment derives its own replicate seeds from it.
    pub seed: u64,
    /// Wall-clock budget in seconds. Zero skips the suite; long replicate
    /// loops stop early when their projected runtime exceeds it.
    pub budget: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 1, budget: None }
    }
}

/// Runs one suite on the current rayon pool.
pub fn run_suite(suite: Suite, opts: VerifyOptions) -> Result<Report> {
    if opts.budget == Some(0.0) {
        return Ok(Report { suite, status: Status::Skipped, pass: false, seed: opts.seed, seconds: 0.0, criteria: vec![] });
    }
    let seed = opts.seed;
    let (criteria, seconds) = timed(|| -> Result<Vec<CriterionReport>> {
        Ok(match suite {
            Suite::Analytic => vec![analytic_identities()],
            Suite::Pde => vec![pde_wave()?],
            Suite::Sde => vec![sde_stationarity(seed)],
            Suite::Forward => vec![forward_pde_agreement(&ForwardSettings::default(), seed)?],
            Suite::Statdist => {
                let out = stationary_distribution(&StatdistSettings::default(), seed)?;
                vec![out.report, out.paths.report(7, "type constancy and merge permanence on traced paths")]
            }
            Suite::Coalescent => {
                let settings = coalescent_settings(opts.budget);
                let out = coalescent(&settings, seed)?;
                vec![out.report, out.paths.report(7, "type constancy and merge permanence on traced paths")]
            }
            Suite::Kingman => vec![kingman_reference(seed)],
            Suite::Tracer => {
                vec![tracer_exactness(&partition_exactness(seed)?, &[]), pair_counts(&PairCountSettings::default(), seed)?]
            }
        })
    });
    let criteria = criteria?;
    let pass = criteria.iter().all(|c| c.pass);
    Ok(Report { suite, status: Status::Completed, pass, seed, seconds, criteria })
}
