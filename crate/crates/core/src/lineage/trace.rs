use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::TraceError;
use crate::sim::{EventLog, LogFilter, PopulationState, Slot};

/// Pairwise coalescence time, or censoring at the traced horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tau {
    Finite(f64),
    Censored,
}

impl Tau {
    pub fn finite(self) -> Option<f64> {
        match self {
            Tau::Finite(t) => Some(t),
            Tau::Censored => None,
        }
    }
}

/// Backward jump: for forward times before `time` the ancestor sits at `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub slot: Slot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineagePath {
    pub sample: usize,
    pub anchor_time: f64,
    pub anchor: Slot,
    /// Sampled individual's type; every ancestor on the path shares it.
    pub sample_type: u8,
    /// Jumps in decreasing forward time.
    pub jumps: Vec<Jump>,
}

impl LineagePath {
    /// Ancestor slot at forward time `t`. Replacements at exactly `t` have
    /// already happened.
    pub fn ancestor_at(&self, t: f64) -> Slot {
        self.jumps.iter().take_while(|j| j.time > t).last().map_or(self.anchor, |j| j.slot)
    }

    /// `(backward time, slot)` pairs starting with the anchor at 0.
    pub fn backward_points(&self) -> impl Iterator<Item = (f64, Slot)> + '_ {
        std::iter::once((0.0, self.anchor)).chain(self.jumps.iter().map(|j| (self.anchor_time - j.time, j.slot)))
    }

    /// Position of the ancestor relative to a front, `zeta - mu`.
    pub fn relative_position(&self, t: f64, n: u32, front: f64) -> f64 {
        f64::from(self.ancestor_at(t).site) / f64::from(n) - front
    }
}

/// Symmetric matrix of pairwise coalescence times with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescenceMatrix {
    size: usize,
    entries: Vec<Tau>,
}

impl CoalescenceMatrix {
    pub fn censored(size: usize) -> Self {
        let mut entries = vec![Tau::Censored; size * size];
        for i in 0..size {
            entries[i * size + i] = Tau::Finite(0.0);
        }
        Self { size, entries }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> Tau {
        self.entries[i * self.size + j]
    }

    pub fn set(&mut self, i: usize, j: usize, tau: Tau) {
        self.entries[i * self.size + j] = tau;
        self.entries[j * self.size + i] = tau;
    }

    /// Upper-triangle entries `(i, j, tau)` with `i < j`.
    pub fn upper(&self) -> impl Iterator<Item = (usize, usize, Tau)> + '_ {
        (0..self.size).flat_map(move |i| ((i + 1)..self.size).map(move |j| (i, j, self.get(i, j))))
    }
}

/// Result of tracing a set of samples backward.
#[derive(Debug, Clone, PartialEq)]
pub struct Genealogy {
    pub paths: Vec<LineagePath>,
    pub tau: CoalescenceMatrix,
    /// `(backward time, surviving sample, absorbed sample)` per merge, in
    /// backward order.
    pub merges: Vec<(f64, usize, usize)>,
    /// Ancestors at the horizon, one per sample.
    pub ancestors: Vec<Slot>,
}

/// Tracing algorithm. Both give identical genealogies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceMethod {
    /// Per-slot event index merged through a priority queue over lineages.
    #[default]
    Indexed,
    /// Reverse scan over every logged event.
    Scan,
}

struct Blocks {
    slot: Vec<Slot>,
    members: Vec<Vec<usize>>,
    alive: Vec<bool>,
    occupancy: HashMap<Slot, usize>,
}

struct Tracer<'a> {
    log: &'a EventLog,
    paths: Vec<LineagePath>,
    tau: CoalescenceMatrix,
    merges: Vec<(f64, usize, usize)>,
    blocks: Blocks,
    anchor_time: f64,
}

impl<'a> Tracer<'a> {
    /// Applies event `pos` to block `b`, whose slot is its target.
    fn jump(&mut self, b: usize, pos: usize) -> Result<Option<usize>, TraceError> {
        let e = &self.log.records()[pos];
        for &s in &self.blocks.members[b] {
            let path = &mut self.paths[s];
            if e.parent_type != path.sample_type {
                return Err(TraceError::TypeConstancy { sample: s, time: e.time });
            }
            path.jumps.push(Jump { time: e.time, slot: e.parent });
        }
        self.blocks.occupancy.remove(&e.target);
        self.blocks.slot[b] = e.parent;
        // Ghost demes outside the window carry no genealogy: the lineage
        // stops there and cannot merge.
        if !self.log.meta.window.contains(e.parent.site) {
            return Ok(None);
        }
        match self.blocks.occupancy.get(&e.parent).copied() {
            Some(other) => {
                let back = self.anchor_time - e.time;
                for &i in &self.blocks.members[other] {
                    for &j in &self.blocks.members[b] {
                        self.tau.set(i, j, Tau::Finite(back));
                    }
                }
                let lead = self.blocks.members[other][0].min(self.blocks.members[b][0]);
                let absorbed = self.blocks.members[other][0].max(self.blocks.members[b][0]);
                self.merges.push((back, lead, absorbed));
                let moved = std::mem::take(&mut self.blocks.members[b]);
                self.blocks.members[other].extend(moved);
                self.blocks.alive[b] = false;
                Ok(None)
            }
            None => {
                self.blocks.occupancy.insert(e.parent, b);
                Ok(Some(b))
            }
        }
    }
}

/// Traces `samples`, individuals alive at `anchor_time`, backward through
/// `log` for `horizon` time units. `types` gives each sample's type at the
/// anchor.
pub fn trace_from(
    log: &EventLog,
    anchor_time: f64,
    samples: &[Slot],
    types: &[u8],
    horizon: f64,
    method: TraceMethod,
) -> Result<Genealogy, TraceError> {
    let meta = &log.meta;
    if !(horizon >= 0.0) || anchor_time > meta.end_time || anchor_time - horizon < meta.start_time - 1e-12 {
        return Err(TraceError::HorizonExceedsLog {
            horizon,
            available: (anchor_time.min(meta.end_time) - meta.start_time).max(0.0),
        });
    }
    if meta.filter == LogFilter::Off {
        return Err(TraceError::NoGenealogy);
    }
    let cutoff = anchor_time - horizon;
    let k = samples.len();
    let mut tr = Tracer {
        log,
        paths: samples
            .iter()
            .zip(types)
            .enumerate()
            .map(|(i, (&s, &ty))| LineagePath { sample: i, anchor_time, anchor: s, sample_type: ty, jumps: Vec::new() })
            .collect(),
        tau: CoalescenceMatrix::censored(k),
        merges: Vec::new(),
        blocks: Blocks { slot: Vec::new(), members: Vec::new(), alive: Vec::new(), occupancy: HashMap::new() },
        anchor_time,
    };
    for (i, &s) in samples.iter().enumerate() {
        if meta.filter == LogFilter::AParentOnly && types[i] != 1 {
            return Err(TraceError::FilteredSample(s));
        }
        match tr.blocks.occupancy.get(&s).copied() {
            Some(b) => {
                // Duplicate sample: already coalesced at backward time 0.
                for &j in &tr.blocks.members[b] {
                    tr.tau.set(i, j, Tau::Finite(0.0));
                }
                tr.blocks.members[b].push(i);
                tr.merges.push((0.0, tr.blocks.members[b][0], i));
            }
            None => {
                tr.blocks.occupancy.insert(s, tr.blocks.slot.len());
                tr.blocks.slot.push(s);
                tr.blocks.members.push(vec![i]);
                tr.blocks.alive.push(true);
            }
        }
    }
    let start = log.position_at(anchor_time);
    let records = log.records();
    match method {
        TraceMethod::Indexed => {
            let mut heap: BinaryHeap<(usize, usize)> = BinaryHeap::new();
            for b in 0..tr.blocks.slot.len() {
                if let Some(p) = log.latest_targeting(tr.blocks.slot[b], start) {
                    heap.push((p, b));
                }
            }
            while let Some((pos, b)) = heap.pop() {
                if records[pos].time <= cutoff {
                    break;
                }
                if !tr.blocks.alive[b] {
                    continue;
                }
                if let Some(b) = tr.jump(b, pos)? {
                    if let Some(p) = log.latest_targeting(tr.blocks.slot[b], pos) {
                        heap.push((p, b));
                    }
                }
            }
        }
        TraceMethod::Scan => {
            for pos in (0..start).rev() {
                let e = &records[pos];
                if e.time <= cutoff {
                    break;
                }
                if let Some(&b) = tr.blocks.occupancy.get(&e.target) {
                    tr.jump(b, pos)?;
                }
            }
        }
    }
    let ancestors = tr.paths.iter().map(|p| p.ancestor_at(cutoff)).collect();
    Ok(Genealogy { paths: tr.paths, tau: tr.tau, merges: tr.merges, ancestors })
}

/// Traces samples from the final state of a run backward through its log.
pub fn trace(
    log: &EventLog,
    state: &PopulationState,
    samples: &[Slot],
    horizon: f64,
) -> Result<Genealogy, TraceError> {
    let types = sample_types(state, samples)?;
    trace_from(log, state.time(), samples, &types, horizon, TraceMethod::Indexed)
}

pub(crate) fn sample_types(state: &PopulationState, samples: &[Slot]) -> Result<Vec<u8>, TraceError> {
    samples.iter().map(|&s| state.type_of(s).ok_or(TraceError::UnknownSample(s))).collect()
}
