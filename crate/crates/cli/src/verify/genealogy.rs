use std::time::Instant;

use anyhow::Result;
use bistable_moran::analytic::AnalyticTables;
use bistable_moran::lineage::{trace_checkpointed, CheckpointedGenealogy, Tau, TraceError};
use bistable_moran::rng::{stream_rng, Stream};
use bistable_moran::sim::{build_initial, Boundary, CheckpointedRun, LogFilter, RunOptions, Slot, Window};
use bistable_moran::stats::{chi_square_uniform, coalescent_rescale, exp1_cdf, ks_test};
use bistable_moran::ModelParams;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Check, CriterionReport};
use crate::config::Sampler;
use crate::sampling::sample_type_a;

/// Hard checks on traced genealogies: every ancestor found at a checkpoint
/// is type A there, and merged samples share every older ancestor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathChecks {
    pub paths: usize,
    pub ancestors_checked: usize,
    pub merged_pairs: usize,
    pub type_violations: usize,
    pub permanence_violations: usize,
}

impl PathChecks {
    pub fn absorb(&mut self, other: &PathChecks) {
        self.paths += other.paths;
        self.ancestors_checked += other.ancestors_checked;
        self.merged_pairs += other.merged_pairs;
        self.type_violations += other.type_violations;
        self.permanence_violations += other.permanence_violations;
    }

    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::above("paths_checked", self.paths as f64, 0.0),
            Check::equal("type_constancy_violations", self.type_violations as f64, 0.0),
            Check::equal("merge_permanence_violations", self.permanence_violations as f64, 0.0),
        ]
    }

    pub fn report(&self, id: u32, title: &str) -> CriterionReport {
        CriterionReport::new(id, title, 0.0, self.checks(), serde_json::to_value(self).unwrap_or_default())
    }

    /// Examines `g`, traced from the end of `run`.
    fn inspect(run: &CheckpointedRun, g: &CheckpointedGenealogy) -> Self {
        let mut out = PathChecks { paths: g.tau.size(), ..Default::default() };
        let last = run.maps().len() + run.first_recorded();
        let anchor = g.times[0];
        for (c, row) in g.ancestors.iter().enumerate().skip(1) {
            let state = run.state_at_checkpoint(last - c).expect("checkpoint inside the traced range");
            debug_assert_eq!(state.time(), g.times[c]);
            for slot in row.iter().flatten() {
                out.ancestors_checked += 1;
                if state.type_of(*slot) != Some(1) {
                    out.type_violations += 1;
                }
            }
        }
        for (i, j, tau) in g.tau.upper() {
            let Tau::Finite(t) = tau else { continue };
            out.merged_pairs += 1;
            for (c, row) in g.ancestors.iter().enumerate() {
                if anchor - g.times[c] >= t && row[i] != row[j] {
                    out.permanence_violations += 1;
                }
            }
        }
        for (end, exact) in &g.refined {
            let Some(c) = g.times.iter().position(|t| t == end) else { continue };
            let Some(&start) = g.times.get(c + 1) else { continue };
            for &(back, lead, absorbed) in &exact.merges {
                let (a, b) = (&exact.paths[lead], &exact.paths[absorbed]);
                let merged = end - back;
                for s in [merged - 1e-9 * merged.abs().max(1.0), 0.5 * (start + merged), start] {
                    if s < merged && a.ancestor_at(s) != b.ancestor_at(s) {
                        out.permanence_violations += 1;
                    }
                }
            }
        }
        out
    }
}

/// Follow-the-front window: `behind` and `ahead` in space units around the
/// initial front at 0.
fn front_window(n: u32, behind: f64, ahead: f64) -> (Window, usize) {
    let nf = f64::from(n);
    let first = -(behind * nf).round() as i32;
    let ahead_sites = (ahead * nf).round() as usize;
    (Window::new(first, (-first) as usize + ahead_sites + 1), ahead_sites)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatdistSettings {
    pub n: u32,
    pub deme_size: u32,
    pub alpha: f64,
    pub s0: f64,
    pub m: f64,
    pub t_end: f64,
    pub trace_back: f64,
    pub band: f64,
    pub samples: usize,
    pub runs: usize,
    pub behind: f64,
    pub ahead: f64,
    pub interval: f64,
}

impl Default for StatdistSettings {
    fn default() -> Self {
        Self {
            n: 4,
            deme_size: 2000,
            alpha: 0.5,
            s0: 1.0,
            m: 2.0,
            t_end: 60.0,
            trace_back: 40.0,
            band: 2.0,
            samples: 500,
            runs: 24,
            behind: 20.0,
            ahead: 24.0,
            interval: 1.0,
        }
    }
}

pub struct StatdistOutcome {
    pub report: CriterionReport,
    pub paths: PathChecks,
    /// Pooled relative positions `zeta - mu` of the ancestors.
    pub values: Vec<f64>,
}

struct StatdistRun {
    values: Vec<f64>,
    escaped: usize,
    distinct: usize,
    paths: PathChecks,
}

fn statdist_run(s: &StatdistSettings, params: &ModelParams, seed: u64) -> Result<StatdistRun> {
    let (window, ahead) = front_window(s.n, s.behind, s.ahead);
    let initial = build_initial(params, window, 0.0, &mut stream_rng(seed, Stream::InitialLabels))?;
    let opts = RunOptions { boundary: Boundary::Follow { ahead }, filter: LogFilter::AParentOnly, ..RunOptions::default() };
    let run = CheckpointedRun::run(params, initial, seed, opts, s.t_end, s.interval, s.t_end - s.trace_back)?;
    let samples =
        sample_type_a(run.final_state(), s.samples, s.band, Sampler::Uniform, &mut stream_rng(seed, Stream::Sampling))?;
    let intervals = (s.trace_back / s.interval).round() as usize;
    let g = match trace_checkpointed(&run, &samples, intervals) {
        Ok(g) => g,
        Err(TraceError::TypeConstancy { .. }) => {
            let paths = PathChecks { paths: samples.len(), type_violations: 1, ..Default::default() };
            return Ok(StatdistRun { values: vec![], escaped: 0, distinct: 0, paths });
        }
        Err(e) => return Err(e.into()),
    };
    let start = run.state_at_checkpoint(run.first_recorded()).expect("first recorded checkpoint");
    let mu = start.front_position()?;
    let lost = vec![None; samples.len()];
    let row = g.ancestors.get(intervals).unwrap_or(&lost);
    let values: Vec<f64> = row.iter().flatten().map(|a: &Slot| start.x(a.site) - mu).collect();
    let mut distinct: Vec<Slot> = row.iter().flatten().copied().collect();
    distinct.sort_unstable();
    distinct.dedup();
    Ok(StatdistRun {
        escaped: row.len() - values.len(),
        values,
        distinct: distinct.len(),
        paths: PathChecks::inspect(&run, &g),
    })
}

/// Criterion 5: positions of sampled lineages relative to the front, traced
/// back `trace_back`, against `pi`. Runs are independent and pooled.
pub fn stationary_distribution(s: &StatdistSettings, seed: u64) -> Result<StatdistOutcome> {
    let start = Instant::now();
    let params = ModelParams::new(s.n, s.deme_size, s.alpha, s.s0, s.m)?;
    let tables = AnalyticTables::build(&params);
    let runs: Vec<StatdistRun> = (0..s.runs as u64)
        .into_par_iter()
        .map(|k| statdist_run(s, &params, seed.wrapping_mul(1_000_033).wrapping_add(k)))
        .collect::<Result<_>>()?;
    let mut values = Vec::new();
    let mut paths = PathChecks::default();
    let (mut escaped, mut distinct) = (0, 0);
    for r in &runs {
        values.extend_from_slice(&r.values);
        paths.absorb(&r.paths);
        escaped += r.escaped;
        distinct += r.distinct;
    }
    let secs = start.elapsed().as_secs_f64();
    let ks = ks_test(&values, |x| tables.pi_cdf(x))?;
    let report = CriterionReport::new(
        5,
        "ancestor positions relative to the front follow pi",
        secs,
        vec![Check::below("ks_distance", ks.statistic, 0.05), Check::below("runtime_s", secs, 1800.0)],
        json!({
            "settings": s, "kappa": params.kappa(), "nu": params.nu(), "pooled_samples": values.len(),
            "distinct_ancestors": distinct, "escaped": escaped, "p_value": ks.p_value,
            "mean": values.iter().sum::<f64>() / values.len() as f64,
        }),
    );
    Ok(StatdistOutcome { report, paths, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescentSettings {
    pub n: u32,
    pub deme_size: u32,
    pub alpha: f64,
    pub s0: f64,
    pub m: f64,
    pub replicates: usize,
    pub k0: usize,
    pub band: f64,
    pub burn_in: f64,
    /// Traced horizon in units of `1 / Lambda`.
    pub horizon_scale: f64,
    pub interval: f64,
    pub behind: f64,
    pub ahead: f64,
    /// Wall-clock budget; the loop stops once the projection exceeds it.
    pub budget_s: f64,
    /// Runtime allowed by the criterion.
    pub limit_s: f64,
}

/// Acceptance settings, with `budget` seconds in place of the default two
/// hours when given.
pub fn coalescent_settings(budget: Option<f64>) -> CoalescentSettings {
    CoalescentSettings {
        n: 3,
        deme_size: 1500,
        alpha: 0.9,
        s0: 1.0,
        m: 2.0,
        replicates: 500,
        k0: 4,
        band: 2.0,
        burn_in: 20.0,
        horizon_scale: 3.5,
        interval: 5.0,
        behind: 22.0,
        ahead: 24.0,
        budget_s: budget.unwrap_or(7200.0),
        limit_s: 7200.0,
    }
}

pub struct CoalescentOutcome {
    pub report: CriterionReport,
    pub paths: PathChecks,
    /// Pair (0, 1) coalescence time of every completed replicate.
    pub tau: Vec<Tau>,
}

struct Replicate {
    tau01: Tau,
    /// First merging pair as an index into the `k0 choose 2` pairs.
    first_pair: Option<usize>,
    escaped: usize,
    paths: PathChecks,
    seconds: f64,
}

fn coalescent_replicate(s: &CoalescentSettings, params: &ModelParams, horizon: f64, seed: u64) -> Result<Replicate> {
    let start = Instant::now();
    let (window, ahead) = front_window(s.n, s.behind, s.ahead);
    let initial = build_initial(params, window, 0.0, &mut stream_rng(seed, Stream::InitialLabels))?;
    let opts = RunOptions { boundary: Boundary::Follow { ahead }, filter: LogFilter::AParentOnly, ..RunOptions::default() };
    let run = CheckpointedRun::run(params, initial, seed, opts, s.burn_in + horizon, s.interval, s.burn_in)?;
    let samples =
        sample_type_a(run.final_state(), s.k0, s.band, Sampler::Uniform, &mut stream_rng(seed, Stream::Sampling))?;
    let intervals = (horizon / s.interval).round() as usize;
    let g = match trace_checkpointed(&run, &samples, intervals) {
        Ok(g) => g,
        Err(TraceError::TypeConstancy { .. }) => {
            let paths = PathChecks { paths: s.k0, type_violations: 1, ..Default::default() };
            return Ok(Replicate { tau01: Tau::Censored, first_pair: None, escaped: 0, paths, seconds: 0.0 });
        }
        Err(e) => return Err(e.into()),
    };
    let first_pair = g
        .tau
        .upper()
        .enumerate()
        .filter_map(|(k, (_, _, t))| t.finite().map(|t| (k, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k);
    Ok(Replicate {
        tau01: g.tau.get(0, 1),
        first_pair,
        escaped: g.escaped.iter().filter(|&&e| e).count(),
        paths: PathChecks::inspect(&run, &g),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Criterion 6: rescaled pairwise coalescence times against Exp(1), and the
/// first merging pair among four samples against the uniform law.
pub fn coalescent(s: &CoalescentSettings, seed: u64) -> Result<CoalescentOutcome> {
    let start = Instant::now();
    let params = ModelParams::new(s.n, s.deme_size, s.alpha, s.s0, s.m)?;
    let lambda = AnalyticTables::build(&params).kingman_rate_constant();
    let horizon = ((s.horizon_scale / lambda) / s.interval).ceil() * s.interval;
    let threads = rayon::current_num_threads().max(1);
    let seed_of = |k: usize| seed.wrapping_mul(2_000_029).wrapping_add(k as u64);
    let batch = |range: std::ops::Range<usize>| -> Result<Vec<Replicate>> {
        range.into_par_iter().map(|k| coalescent_replicate(s, &params, horizon, seed_of(k))).collect()
    };
    let pilot = threads.min(s.replicates);
    let mut done = batch(0..pilot)?;
    let pilot_secs = start.elapsed().as_secs_f64();
    let rounds = s.replicates.div_ceil(threads) as f64;
    let projected = pilot_secs * rounds;
    let stopped = projected > s.budget_s;
    if !stopped {
        done.extend(batch(pilot..s.replicates)?);
    }
    let secs = start.elapsed().as_secs_f64();

    let mut paths = PathChecks::default();
    let mut first_pairs = vec![0u64; s.k0 * (s.k0 - 1) / 2];
    for r in &done {
        paths.absorb(&r.paths);
        if let Some(k) = r.first_pair {
            first_pairs[k] += 1;
        }
    }
    let tau: Vec<Tau> = done.iter().map(|r| r.tau01).collect();
    let rescaled = coalescent_rescale(tau.iter().copied(), lambda).ok();
    let ks = rescaled.as_ref().and_then(|r| ks_test(&r.values, exp1_cdf).ok());
    let chi = chi_square_uniform(&first_pairs).ok();
    let runtime = if stopped { projected } else { secs };
    let report = CriterionReport::new(
        6,
        "rescaled coalescence times are Kingman",
        secs,
        vec![
            Check::above("replicates_completed", done.len() as f64, s.replicates as f64 - 0.5),
            Check::above("ks_p_value", ks.map_or(f64::NAN, |k| k.p_value), 0.01),
            Check::below("censored_fraction", rescaled.as_ref().map_or(f64::NAN, |r| r.censored_fraction), 0.05),
            Check::above("first_pair_chi2_p", chi.map_or(f64::NAN, |c| c.p_value), 0.01),
            Check::below(if stopped { "projected_runtime_s" } else { "runtime_s" }, runtime, s.limit_s),
        ],
        json!({
            "settings": s, "lambda": lambda, "horizon": horizon, "threads": threads,
            "stopped_after_pilot": stopped, "pilot_seconds": pilot_secs, "projected_seconds": projected,
            "replicate_seconds": done.iter().map(|r| r.seconds).collect::<Vec<_>>(),
            "ks_statistic": ks.map(|k| k.statistic), "first_pair_counts": first_pairs,
            "escaped_lineages": done.iter().map(|r| r.escaped).sum::<usize>(),
            "rescaled_tau": rescaled.as_ref().map(|r| r.values.clone()),
        }),
    );
    Ok(CoalescentOutcome { report, paths, tau })
}
