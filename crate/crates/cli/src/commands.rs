use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use bistable_moran::analytic::AnalyticTables;
use bistable_moran::lineage::{trace, Genealogy};
use bistable_moran::reference::{kingman_sample, pde_solve, sde_simulate, stability_bound, Dirichlet, LatticeField};
use bistable_moran::rng::{stream_rng, Stream};
use bistable_moran::sim::{build_initial, run, EventCounters, PopulationState, Slot, Window};
use bistable_moran::RawParams;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SampleSpec};
use crate::io;
use crate::sampling::sample_type_a;

/// Per-seed description stored next to the outputs; two seeds of one config
/// differ only in `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMetadata {
    pub version: u32,
    pub seed: u64,
    pub params: RawParams,
    pub window: Window,
    pub center: f64,
    pub duration: f64,
    pub cadence: f64,
    pub boundary: bistable_moran::sim::Boundary,
    pub filter: bistable_moran::sim::LogFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub counters: EventCounters,
    pub events_logged: usize,
    pub final_front: Option<f64>,
    pub fronts: Vec<(f64, f64)>,
}

pub fn run_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Runs every seed of `cfg` (in parallel) and writes one directory per seed
/// under `out`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let params = cfg.validate()?;
    let window = cfg.window();
    fs::create_dir_all(out)?;
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let dir = run_dir(out, seed);
            fs::create_dir_all(&dir)?;
            let initial = build_initial(&params, window, cfg.center, &mut stream_rng(seed, Stream::InitialLabels))?;
            let result = run(&params, initial.clone(), cfg.duration, seed, cfg.run_options())
                .with_context(|| format!("seed {seed}"))?;
            let meta = RunMetadata {
                version: cfg.version,
                seed,
                params: cfg.params,
                window,
                center: cfg.center,
                duration: cfg.duration,
                cadence: cfg.cadence,
                boundary: cfg.boundary,
                filter: cfg.filter,
            };
            write_json(&dir.join("metadata.json"), &meta)?;
            write_json(&dir.join("initial.json"), &initial)?;
            write_json(&dir.join("final.json"), &result.state)?;
            io::write_snapshots(create(&dir.join("snapshots.csv"))?, &result.snapshots, params.deme_size())?;
            io::write_log(create(&dir.join("events.jsonl"))?, &result.log)?;
            let summary = RunSummary {
                counters: result.counters,
                events_logged: result.log.len(),
                final_front: result.state.front_position().ok(),
                fronts: result.fronts(),
            };
            write_json(&dir.join("summary.json"), &summary)?;
            Ok(dir)
        })
        .collect()
}

/// A run directory read back from disk.
pub struct StoredRun {
    pub meta: RunMetadata,
    pub initial: PopulationState,
    pub final_state: PopulationState,
    pub log: bistable_moran::sim::EventLog,
}

pub fn load_run(dir: &Path) -> Result<StoredRun> {
    let meta: RunMetadata = read_json(&dir.join("metadata.json"))?;
    let initial: PopulationState = read_json(&dir.join("initial.json"))?;
    let final_state: PopulationState = read_json(&dir.join("final.json"))?;
    ensure!(initial.is_coherent() && final_state.is_coherent(), "stored states have inconsistent counts");
    let log = io::read_log(open(&dir.join("events.jsonl"))?, &initial)?;
    Ok(StoredRun { meta, initial, final_state, log })
}

/// Samples from the final state of a stored run, traces the samples back and
/// writes `lineages.csv` and `tau.csv` into `out`.
pub fn trace_run(dir: &Path, spec: &SampleSpec, out: &Path) -> Result<(Vec<Slot>, Genealogy)> {
    let stored = load_run(dir)?;
    let available = stored.final_state.time() - stored.log.meta.start_time;
    let horizon = spec.horizon.unwrap_or(available);
    let samples = sample_type_a(
        &stored.final_state,
        spec.k0,
        spec.band,
        spec.sampler,
        &mut stream_rng(spec.seed, Stream::Sampling),
    )?;
    let g = trace(&stored.log, &stored.final_state, &samples, horizon)?;
    fs::create_dir_all(out)?;
    io::write_lineages(create(&out.join("lineages.csv"))?, &g.paths)?;
    io::write_tau(create(&out.join("tau.csv"))?, &g.tau)?;
    Ok((samples, g))
}

/// Solves the lattice equation from the wave profile over the config window
/// and writes the trajectory in the snapshot schema.
pub fn pde(cfg: &RunConfig, dt: Option<f64>, out: &Path) -> Result<Vec<LatticeField>> {
    let params = cfg.validate()?;
    let window = cfg.window();
    let u0 = LatticeField::wave(&params, window.first, window.len, cfg.center);
    let dt = dt.unwrap_or(0.5 * stability_bound(&params));
    let fields = pde_solve(&params, &u0, cfg.duration, dt, cfg.cadence, Dirichlet::default())?;
    fs::create_dir_all(out)?;
    io::write_fields(create(&out.join("pde.csv"))?, &fields)?;
    Ok(fields)
}

/// One Euler-Maruyama path per seed, written as `seed,t,z`.
pub fn sde(cfg: &RunConfig, dt: f64, z0: f64, out: &Path) -> Result<()> {
    let params = cfg.validate()?;
    ensure!(dt > 0.0, "dt must be positive");
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_writer(create(&out.join("sde.csv"))?);
    w.write_record(["seed", "t", "z"])?;
    for &seed in &cfg.seeds {
        for (t, z) in sde_simulate(&params, z0, cfg.duration, dt, seed, cfg.cadence) {
            w.write_record([seed.to_string(), io::fmt_time(t), io::fmt_time(z)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Draws `count` Kingman coalescents on `k` lineages and writes the merger
/// sequences and pairwise times.
pub fn kingman(k: usize, count: usize, seed: u64, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut mergers = csv::Writer::from_writer(create(&out.join("kingman_mergers.csv"))?);
    mergers.write_record(["replicate", "time", "a", "b"])?;
    let mut taus = csv::Writer::from_writer(create(&out.join("kingman_tau.csv"))?);
    taus.write_record(["replicate", "i", "j", "tau"])?;
    for r in 0..count {
        let s = kingman_sample(k, seed.wrapping_add(r as u64))?;
        for (t, (a, b)) in &s.mergers {
            mergers.write_record([r.to_string(), io::fmt_time(*t), a.to_string(), b.to_string()])?;
        }
        for (i, j, t) in s.tau.upper() {
            let t = t.finite().map(io::fmt_time).unwrap_or_else(|| "inf".into());
            taus.write_record([r.to_string(), i.to_string(), j.to_string(), t])?;
        }
    }
    mergers.flush()?;
    taus.flush()?;
    Ok(())
}

/// Writes the tabulated stationary CDF as `x,cdf`.
pub fn write_pi_table(cfg: &RunConfig, out: &Path) -> Result<()> {
    let params = cfg.validate()?;
    let tables = AnalyticTables::build(&params);
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_writer(create(&out.join("pi_cdf.csv"))?);
    w.write_record(["x", "cdf"])?;
    for (x, c) in tables.cdf_table() {
        w.write_record([io::fmt_time(x), io::fmt_time(c)])?;
    }
    w.flush()?;
    Ok(())
}
