//! Plain-text formats for snapshots, event logs, lineages and coalescence
//! times. Times are written as the shortest decimal string that parses back
//! to the same `f64`, so every file round-trips exactly.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use anyhow::{anyhow, bail, ensure, Context, Result};
use bistable_moran::lineage::{CoalescenceMatrix, Jump, LineagePath, Tau};
use bistable_moran::reference::LatticeField;
use bistable_moran::sim::{
    EventClass, EventLog, EventRecord, LogFilter, LogMetadata, PopulationState, Site, Slot, Snapshot,
};
use serde::{Deserialize, Serialize};

pub fn fmt_time(t: f64) -> String {
    format!("{t}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| anyhow!("bad number {s:?}"))
}

#[derive(Serialize, Deserialize)]
struct ProfileRow {
    time: String,
    site: Site,
    p: String,
}

/// Writes `time,site,p` rows, one per site and snapshot.
pub fn write_snapshots<W: Write>(w: W, snapshots: &[Snapshot], deme_size: u32) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in snapshots {
        for (k, &a) in s.counts.iter().enumerate() {
            out.serialize(ProfileRow {
                time: fmt_time(s.time),
                site: s.first_site + k as Site,
                p: fmt_time(f64::from(a) / f64::from(deme_size)),
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads snapshots written by [`write_snapshots`]; rows of one snapshot must
/// be contiguous with consecutive sites.
pub fn read_snapshots<R: Read>(r: R, deme_size: u32) -> Result<Vec<Snapshot>> {
    let mut out: Vec<Snapshot> = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize::<ProfileRow>() {
        let row = row?;
        let time = parse_f64(&row.time)?;
        let p = parse_f64(&row.p)?;
        ensure!((0.0..=1.0).contains(&p), "proportion {p} out of range");
        let a = (p * f64::from(deme_size)).round() as u32;
        match out.last_mut() {
            Some(s) if s.time == time => {
                ensure!(row.site == s.first_site + s.counts.len() as Site, "non-contiguous site {}", row.site);
                s.counts.push(a);
            }
            _ => out.push(Snapshot { time, first_site: row.site, counts: vec![a] }),
        }
    }
    Ok(out)
}

/// Writes lattice fields in the snapshot schema, with the field value as `p`.
pub fn write_fields<W: Write>(w: W, fields: &[LatticeField]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for f in fields {
        for (k, &u) in f.values.iter().enumerate() {
            out.serialize(ProfileRow { time: fmt_time(f.time), site: f.first_site + k as Site, p: fmt_time(u) })?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_fields<R: Read>(r: R, n: u32) -> Result<Vec<LatticeField>> {
    let mut out: Vec<LatticeField> = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize::<ProfileRow>() {
        let row = row?;
        let time = parse_f64(&row.time)?;
        let u = parse_f64(&row.p)?;
        match out.last_mut() {
            Some(f) if f.time == time => f.values.push(u),
            _ => {
                let mut f = LatticeField::new(n, row.site, vec![u]);
                f.time = time;
                out.push(f);
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaLine {
    meta: LogMetadata,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventLine {
    t: String,
    class: EventClass,
    tx: Site,
    ti: u32,
    px: Site,
    pi: u32,
}

/// Writes a metadata line followed by one JSON object per event.
pub fn write_log<W: Write>(mut w: W, log: &EventLog) -> Result<()> {
    serde_json::to_writer(&mut w, &MetaLine { meta: log.meta.clone() })?;
    writeln!(w)?;
    for e in log.records() {
        let line = EventLine {
            t: fmt_time(e.time),
            class: e.class,
            tx: e.target.site,
            ti: e.target.index,
            px: e.parent.site,
            pi: e.parent.index,
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a log written by [`write_log`]. Parent types are not stored; they
/// are recovered by replaying the events from `initial`, the state at the
/// start of the log. Slots outside everything seen so far are pinned
/// ghosts: type A to the left of the initial window, type a to the right.
pub fn read_log<R: BufRead>(r: R, initial: &PopulationState) -> Result<EventLog> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| anyhow!("empty log file"))??;
    let meta: MetaLine = serde_json::from_str(&first).context("log metadata line")?;
    let meta = meta.meta;
    ensure!(meta.start_time == initial.time(), "log starts at {} but the state is at {}", meta.start_time, initial.time());
    let window = initial.window();
    let mut overlay: HashMap<Slot, u8> = HashMap::new();
    let mut records = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let e: EventLine = serde_json::from_str(&line).with_context(|| format!("event line {}", k + 2))?;
        let target = Slot::new(e.tx, e.ti);
        let parent = Slot::new(e.px, e.pi);
        let parent_type = match meta.filter {
            LogFilter::AParentOnly => 1,
            LogFilter::All => overlay
                .get(&parent)
                .copied()
                .or_else(|| initial.type_of(parent))
                .unwrap_or(u8::from(parent.site < window.first)),
            LogFilter::Off => bail!("a log recorded with filter off cannot contain events"),
        };
        overlay.insert(target, parent_type);
        records.push(EventRecord { time: parse_f64(&e.t)?, target, parent, class: e.class, parent_type });
    }
    Ok(EventLog::from_records(meta, records)?)
}

#[derive(Serialize, Deserialize)]
struct LineageRow {
    sample: usize,
    t_back: String,
    site: Site,
    index: u32,
}

/// Backward trajectories as `sample,t_back,site,index`, starting with each
/// sample's anchor at `t_back = 0`.
pub fn write_lineages<W: Write>(w: W, paths: &[LineagePath]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in paths {
        out.serialize(LineageRow { sample: p.sample, t_back: fmt_time(0.0), site: p.anchor.site, index: p.anchor.index })?;
        for j in &p.jumps {
            out.serialize(LineageRow {
                sample: p.sample,
                t_back: fmt_time(p.anchor_time - j.time),
                site: j.slot.site,
                index: j.slot.index,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads `(sample, [(t_back, slot)])` groups in file order.
pub fn read_lineages<R: Read>(r: R) -> Result<Vec<(usize, Vec<(f64, Slot)>)>> {
    let mut out: Vec<(usize, Vec<(f64, Slot)>)> = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize::<LineageRow>() {
        let row = row?;
        let point = (parse_f64(&row.t_back)?, Slot::new(row.site, row.index));
        match out.last_mut() {
            Some((s, pts)) if *s == row.sample => pts.push(point),
            _ => out.push((row.sample, vec![point])),
        }
    }
    Ok(out)
}

/// Rebuilds a path from rows read back by [`read_lineages`].
pub fn lineage_from_rows(sample: usize, anchor_time: f64, sample_type: u8, rows: &[(f64, Slot)]) -> Result<LineagePath> {
    let (&(t0, anchor), rest) = rows.split_first().ok_or_else(|| anyhow!("sample {sample} has no rows"))?;
    ensure!(t0 == 0.0, "first row of sample {sample} is not the anchor");
    let jumps = rest.iter().map(|&(tb, slot)| Jump { time: anchor_time - tb, slot }).collect();
    Ok(LineagePath { sample, anchor_time, anchor, sample_type, jumps })
}

#[derive(Serialize, Deserialize)]
struct TauRow {
    i: usize,
    j: usize,
    tau: String,
}

/// Upper triangle `i,j,tau`, with `inf` for pairs not merged in the horizon.
pub fn write_tau<W: Write>(w: W, tau: &CoalescenceMatrix) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(["i", "j", "tau"])?;
    for (i, j, t) in tau.upper() {
        let tau = match t {
            Tau::Finite(v) => fmt_time(v),
            Tau::Censored => "inf".to_string(),
        };
        out.serialize(TauRow { i, j, tau })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tau<R: Read>(r: R, size: usize) -> Result<CoalescenceMatrix> {
    let mut m = CoalescenceMatrix::censored(size);
    for row in csv::Reader::from_reader(r).deserialize::<TauRow>() {
        let row = row?;
        ensure!(row.i < row.j && row.j < size, "pair ({}, {}) outside a {size}-sample matrix", row.i, row.j);
        let tau = if row.tau == "inf" { Tau::Censored } else { Tau::Finite(parse_f64(&row.tau)?) };
        m.set(row.i, row.j, tau);
    }
    Ok(m)
}
