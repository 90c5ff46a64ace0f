use anyhow::{ensure, Result};
use bistable_moran::lineage::{ancestor_site_counts, pair_ancestor_counts, DiagnosticsConfig, History};
use bistable_moran::rng::{stream_rng, Stream};
use bistable_moran::sim::{
    build_initial, run, Boundary, EventLog, LogFilter, LogMetadata, NullSink, RunOptions, Simulator, Window,
};
use bistable_moran::ModelParams;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{timed, Check, CriterionReport, PathChecks};

/// Partition check of the ancestor counts over random `(t1, t2, x2)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionOutcome {
    pub triples: usize,
    pub mismatches: usize,
    /// Type-A slots accounted for across all triples.
    pub slots: u64,
    pub seconds: f64,
}

/// Runs a fully logged simulation and checks `sum_x1 q(x1, x2) = p_t2(x2)`
/// in integer counts for 100 random triples.
pub fn partition_exactness(seed: u64) -> Result<PartitionOutcome> {
    let (out, seconds) = timed(|| -> Result<PartitionOutcome> {
        let params = ModelParams::new(4, 50, 0.5, 1.0, 2.0)?;
        let window = Window::from_extent(4, -15.0, 15.0);
        let duration = 3.0;
        let initial = build_initial(&params, window, 0.0, &mut stream_rng(seed, Stream::InitialLabels))?;
        let result = run(&params, initial.clone(), duration, seed, RunOptions::default())?;
        let history = History::new(initial, result.log)?;
        let mut rng = stream_rng(seed, Stream::Custom(7));
        let mut out = PartitionOutcome::default();
        for _ in 0..100 {
            let a: f64 = rng.random_range(0.0..=duration);
            let b: f64 = rng.random_range(0.0..=duration);
            let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
            let x2 = rng.random_range(window.first..=window.last());
            let counts = ancestor_site_counts(&history, t1, t2, x2)?;
            let total: u64 = counts.iter().map(|&(_, c)| u64::from(c)).sum();
            let expected = u64::from(history.state_at(t2)?.count(x2).unwrap_or(0));
            out.triples += 1;
            out.slots += expected;
            if total != expected {
                out.mismatches += 1;
            }
        }
        Ok(out)
    });
    Ok(PartitionOutcome { seconds, ..out? })
}

/// Criterion 7: the partition identity plus the path checks gathered from the
/// genealogy experiments.
pub fn tracer_exactness(partition: &PartitionOutcome, paths: &[PathChecks]) -> CriterionReport {
    let mut checks = vec![
        Check::equal("triples", partition.triples as f64, 100.0),
        Check::equal("partition_mismatches", partition.mismatches as f64, 0.0),
    ];
    let mut total = PathChecks::default();
    for p in paths {
        total.absorb(p);
    }
    if !paths.is_empty() {
        checks.extend(total.checks());
    }
    CriterionReport::new(
        7,
        "tracer exactness",
        partition.seconds,
        checks,
        json!({ "partition": partition, "paths": if paths.is_empty() { None } else { Some(&total) } }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCountSettings {
    pub n: u32,
    pub deme_size: u32,
    pub alpha: f64,
    pub s0: f64,
    pub m: f64,
    /// Independent simulations the windows are spread over.
    pub replicates: u64,
    pub burn_in: f64,
    /// Time between consecutive windows of one simulation; a multiple of the
    /// snapshot cadence so that windows never contain a window shift.
    pub gap: f64,
    pub min_site_windows: usize,
    pub p_range: (f64, f64),
    pub behind: f64,
    pub ahead: f64,
}

impl Default for PairCountSettings {
    fn default() -> Self {
        Self {
            n: 8,
            deme_size: 4000,
            alpha: 0.5,
            s0: 0.5,
            m: 1.0,
            replicates: 4,
            burn_in: 5.0,
            gap: 0.3,
            min_site_windows: 600,
            p_range: (0.2, 0.8),
            behind: 18.0,
            ahead: 14.0,
        }
    }
}

#[derive(Debug, Default)]
struct Ratios {
    same: Vec<f64>,
    neighbour: Vec<f64>,
}

fn pair_ratios(s: &PairCountSettings, params: &ModelParams, seed: u64, site_windows: usize) -> Result<Ratios> {
    let nf = f64::from(s.n);
    let first = -(s.behind * nf).round() as i32;
    let ahead = (s.ahead * nf).round() as usize;
    let window = Window::new(first, (-first) as usize + ahead + 1);
    let initial = build_initial(params, window, 0.0, &mut stream_rng(seed, Stream::InitialLabels))?;
    let opts = RunOptions { boundary: Boundary::Follow { ahead }, filter: LogFilter::Off, ..RunOptions::default() };
    let mut sim = Simulator::new(*params, initial, seed, opts)?;
    let delta = DiagnosticsConfig::default_for(params).delta;
    let nn = f64::from(s.deme_size);
    let scale = nf * nf * nn * delta;
    let mut out = Ratios::default();
    // Window starts sit exactly on snapshot times, so no shift falls inside a window.
    let cadence = opts.cadence;
    let mut k = (s.burn_in / cadence).round() as u64;
    let stride = ((s.gap / cadence).round() as u64).max(1);
    while out.same.len() < site_windows {
        let t = k as f64 * cadence;
        sim.advance(t, &mut NullSink, |_| {})?;
        let start = sim.state().clone();
        sim.set_filter(LogFilter::All);
        let mut log = EventLog::new(LogMetadata {
            seed,
            params: params.raw(),
            window: start.window(),
            filter: LogFilter::All,
            start_time: t,
            end_time: t + delta,
        });
        sim.advance(t + delta, &mut log, |_| {})?;
        sim.set_filter(LogFilter::Off);
        let w = start.window();
        let history = History::new(start, log)?;
        for x in w.first..w.last() {
            let p = history.initial().p(x).unwrap_or(0.0);
            if !(s.p_range.0..=s.p_range.1).contains(&p) {
                continue;
            }
            let q = history.initial().p(x + 1).unwrap_or(0.0);
            let same = pair_ancestor_counts(&history, t, &[x, x], delta)? as f64;
            let next = pair_ancestor_counts(&history, t, &[x, x + 1], delta)? as f64;
            out.same.push(same / (scale * p));
            out.neighbour.push(next / (s.m * scale * 0.5 * (p + q)));
        }
        k += stride;
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Criterion 8: pair-ancestor counts over windows of length
/// `delta = 1 / floor(sqrt(N) n^2)` against `n^2 N delta p` and its
/// neighbour analogue.
pub fn pair_counts(s: &PairCountSettings, seed: u64) -> Result<CriterionReport> {
    ensure!(s.replicates > 0, "pair counts need at least one replicate");
    let params = ModelParams::new(s.n, s.deme_size, s.alpha, s.s0, s.m)?;
    let per = s.min_site_windows.div_ceil(s.replicates as usize);
    let (parts, secs) = timed(|| -> Result<Vec<Ratios>> {
        (0..s.replicates)
            .into_par_iter()
            .map(|k| pair_ratios(s, &params, seed.wrapping_mul(3_000_017).wrapping_add(k), per))
            .collect()
    });
    let mut all = Ratios::default();
    for p in parts? {
        all.same.extend(p.same);
        all.neighbour.extend(p.neighbour);
    }
    let (same, neighbour) = (mean(&all.same), mean(&all.neighbour));
    Ok(CriterionReport::new(
        8,
        "pair-ancestor counts over short windows",
        secs,
        vec![
            Check::above("site_windows", all.same.len() as f64, 499.5),
            Check::within("same_site_mean_ratio", same, 0.9, 1.1),
            Check::within("neighbour_mean_ratio", neighbour, 0.9, 1.1),
            Check::below("runtime_s", secs, 1200.0),
        ],
        json!({
            "settings": s,
            "delta": DiagnosticsConfig::default_for(&params).delta,
            "same_site_se": (all.same.iter().map(|r| (r - same).powi(2)).sum::<f64>()
                / (all.same.len() as f64 - 1.0) / all.same.len() as f64).sqrt(),
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_identity_holds() {
        let out = partition_exactness(5).unwrap();
        assert_eq!(out.triples, 100);
        assert_eq!(out.mismatches, 0);
        assert!(out.slots > 0);
        let r = tracer_exactness(&out, &[]);
        assert!(r.pass, "{}", r.summary_line());
    }

    #[test]
    fn path_violations_fail_the_criterion() {
        let out = PartitionOutcome { triples: 100, ..Default::default() };
        let bad = PathChecks { paths: 3, type_violations: 1, ..Default::default() };
        assert!(!tracer_exactness(&out, &[bad]).pass);
    }
}
