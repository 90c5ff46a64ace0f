use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::event::{EventClass, EventLog, EventRecord, EventSink, LogFilter, LogMetadata};
use super::state::{PopulationState, Site, Slot, Window};
use super::SimError;
use crate::params::ModelParams;
use crate::rng::{stream_rng, Stream};

/// How the finite window interacts with the rest of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Boundary {
    /// Fixed window; sites to the left are pinned all-A and sites to the
    /// right all-a.
    Pinned,
    /// Pinned ghosts, and at every snapshot the window moves right so that at
    /// least `ahead` sites remain to the right of the front.
    Follow { ahead: usize },
    /// No migration across the window edges.
    Isolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub cadence: f64,
    pub boundary: Boundary,
    pub filter: LogFilter,
    /// Sites kept clear of the front at each edge before a run aborts.
    pub escape_margin: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { cadence: 0.1, boundary: Boundary::Pinned, filter: LogFilter::All, escape_margin: 5 }
    }
}

/// Candidate and accepted event counts per class (P, S, Q, R).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub candidates: [u64; 4],
    pub accepted: [u64; 4],
}

/// Per-site type-A counts at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub first_site: Site,
    pub counts: Vec<u32>,
}

impl Snapshot {
    pub fn of(state: &PopulationState) -> Self {
        Self { time: state.time(), first_site: state.window().first, counts: state.counts().to_vec() }
    }

    pub fn front_site(&self, deme_size: u32) -> Option<Site> {
        self.counts.iter().rposition(|&a| 2 * a >= deme_size).map(|k| self.first_site + k as Site)
    }

    pub fn p(&self, site: Site, deme_size: u32) -> Option<f64> {
        let k = usize::try_from(site.checked_sub(self.first_site)?).ok()?;
        self.counts.get(k).map(|&a| f64::from(a) / f64::from(deme_size))
    }
}

const INACTIVE: u32 = u32::MAX;

/// Event-driven simulator. Every deme has the same candidate rate, so the
/// superposition over active demes is a single Poisson stream: the next
/// event time comes from the total rate, the deme is uniform among active
/// demes, and the class and participants are drawn by thinning.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: ModelParams,
    state: PopulationState,
    rng: ChaCha8Rng,
    opts: RunOptions,
    site_rate: f64,
    class_cut: [f64; 3],
    active: Vec<u32>,
    active_pos: Vec<u32>,
    pending: Option<f64>,
    snapshot_index: u64,
    counters: EventCounters,
}

impl Simulator {
    pub fn new(params: ModelParams, state: PopulationState, seed: u64, opts: RunOptions) -> Result<Self, SimError> {
        if !(opts.cadence > 0.0 && opts.cadence.is_finite()) {
            return Err(SimError::InvalidOption(format!("snapshot cadence {} must be positive", opts.cadence)));
        }
        if state.deme_size() != params.deme_size() || state.n() != params.n() {
            return Err(SimError::MalformedState("state does not match parameters".into()));
        }
        if !state.is_coherent() {
            return Err(SimError::MalformedState("cached counts disagree with types".into()));
        }
        let [p, s, q, r] = params.class_rates();
        let site_rate = p + s + q + r;
        let snapshot_index = (state.time() / opts.cadence - 1e-9).ceil().max(0.0) as u64;
        let len = state.window().len;
        let mut sim = Self {
            params,
            state,
            rng: stream_rng(seed, Stream::Dynamics),
            opts,
            site_rate,
            class_cut: [p, p + s, p + s + q],
            active: Vec::with_capacity(len),
            active_pos: vec![INACTIVE; len],
            pending: None,
            snapshot_index,
            counters: EventCounters::default(),
        };
        sim.rebuild_active();
        Ok(sim)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn state(&self) -> &PopulationState {
        &self.state
    }
    pub fn into_state(self) -> PopulationState {
        self.state
    }
    pub fn options(&self) -> &RunOptions {
        &self.opts
    }
    pub fn counters(&self) -> EventCounters {
        self.counters
    }
    pub fn time(&self) -> f64 {
        self.state.time
    }
    pub fn active_sites(&self) -> usize {
        self.active.len()
    }

    /// Switches the logging filter. The skipped-deme set changes with it, so
    /// the pending event time is redrawn from the current time.
    pub fn set_filter(&mut self, filter: LogFilter) {
        if filter != self.opts.filter {
            self.opts.filter = filter;
            self.rebuild_active();
            self.pending = None;
        }
    }

    /// Total candidate rate over active demes.
    pub fn total_rate(&self) -> f64 {
        self.site_rate * self.active.len() as f64
    }

    fn ghost_counts(&self) -> (Option<u32>, Option<u32>) {
        match self.opts.boundary {
            Boundary::Pinned | Boundary::Follow { .. } => (Some(self.params.deme_size()), Some(0)),
            Boundary::Isolated => (None, None),
        }
    }

    fn neighbour_counts(&self, rel: usize) -> (Option<u32>, Option<u32>) {
        let (gl, gr) = self.ghost_counts();
        let c = &self.state.counts;
        let left = if rel == 0 { gl } else { Some(c[rel - 1]) };
        let right = if rel + 1 == c.len() { gr } else { Some(c[rel + 1]) };
        (left, right)
    }

    fn is_active(&self, rel: usize) -> bool {
        let nn = self.params.deme_size();
        let own = self.state.counts[rel];
        let (l, r) = self.neighbour_counts(rel);
        let all = |v: u32| own == v && l.is_none_or(|x| x == v) && r.is_none_or(|x| x == v);
        match self.opts.filter {
            LogFilter::All => true,
            LogFilter::AParentOnly => !all(0),
            LogFilter::Off => !(all(0) || all(nn)),
        }
    }

    fn set_active(&mut self, rel: usize, on: bool) {
        let pos = self.active_pos[rel];
        match (on, pos == INACTIVE) {
            (true, true) => {
                self.active_pos[rel] = self.active.len() as u32;
                self.active.push(rel as u32);
            }
            (false, false) => {
                let last = *self.active.last().expect("non-empty active set");
                self.active.swap_remove(pos as usize);
                if last as usize != rel {
                    self.active_pos[last as usize] = pos;
                }
                self.active_pos[rel] = INACTIVE;
            }
            _ => {}
        }
    }

    fn rebuild_active(&mut self) {
        let len = self.state.counts.len();
        self.active.clear();
        self.active_pos.clear();
        self.active_pos.resize(len, INACTIVE);
        for rel in 0..len {
            if self.is_active(rel) {
                self.set_active(rel, true);
            }
        }
    }

    fn refresh_activity(&mut self, rel: usize) {
        let lo = rel.saturating_sub(1);
        let hi = (rel + 1).min(self.state.counts.len() - 1);
        for k in lo..=hi {
            let on = self.is_active(k);
            self.set_active(k, on);
        }
    }

    #[inline]
    fn draw_other(rng: &mut ChaCha8Rng, nn: u32, i: u32) -> u32 {
        let j = rng.random_range(0..nn - 1);
        if j >= i {
            j + 1
        } else {
            j
        }
    }

    /// Draws and applies one candidate event at the pending time.
    #[inline]
    fn fire<S: EventSink>(&mut self, time: f64, sink: &mut S) {
        let nn = self.params.deme_size();
        let nnu = nn as usize;
        let rel = self.active[self.rng.random_range(0..self.active.len())] as usize;
        let site = self.state.first_site + rel as Site;
        let u: f64 = self.rng.random::<f64>() * self.site_rate;
        let base = rel * nnu;
        let types = &self.state.types;

        let (class, target, parent, parent_type, accepted) = if u < self.class_cut[0] {
            let i = self.rng.random_range(0..nn);
            let j = Self::draw_other(&mut self.rng, nn, i);
            let pt = types[base + j as usize];
            (EventClass::P, i, Slot::new(site, j), pt, true)
        } else if u < self.class_cut[1] {
            let i = self.rng.random_range(0..nn);
            let j = Self::draw_other(&mut self.rng, nn, i);
            let pt = types[base + j as usize];
            (EventClass::S, i, Slot::new(site, j), pt, pt == 1)
        } else if u < self.class_cut[2] {
            let i = self.rng.random_range(0..nn);
            let j = Self::draw_other(&mut self.rng, nn, i);
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            let mut k = self.rng.random_range(0..nn - 2);
            if k >= lo {
                k += 1;
            }
            if k >= hi {
                k += 1;
            }
            let pt = types[base + j as usize];
            (EventClass::Q, i, Slot::new(site, j), pt, pt == types[base + k as usize])
        } else {
            let i = self.rng.random_range(0..nn);
            let right = self.rng.random::<bool>();
            let j = self.rng.random_range(0..nn);
            let len = self.state.counts.len();
            let (nsite, pt) = if right {
                if rel + 1 < len {
                    (site + 1, Some(types[base + nnu + j as usize]))
                } else {
                    (site + 1, self.ghost_counts().1.map(|c| u8::from(c > 0)))
                }
            } else if rel > 0 {
                (site - 1, Some(types[base - nnu + j as usize]))
            } else {
                (site - 1, self.ghost_counts().0.map(|c| u8::from(c > 0)))
            };
            match pt {
                Some(pt) => (EventClass::R, i, Slot::new(nsite, j), pt, true),
                None => (EventClass::R, i, Slot::new(nsite, j), 0, false),
            }
        };

        let c = class.ordinal();
        self.counters.candidates[c] += 1;
        if !accepted {
            return;
        }
        self.counters.accepted[c] += 1;
        let idx = base + target as usize;
        let old = self.state.types[idx];
        if old != parent_type {
            self.state.types[idx] = parent_type;
            let before = self.state.counts[rel];
            let after = if parent_type == 1 { before + 1 } else { before - 1 };
            self.state.counts[rel] = after;
            let edge = |a: u32| a == 0 || a == nn;
            if (edge(before) || edge(after)) && self.opts.filter != LogFilter::All {
                self.refresh_activity(rel);
            }
        }
        if self.opts.filter.admits(parent_type) {
            sink.record(&EventRecord { time, target: Slot::new(site, target), parent, class, parent_type });
        }
    }

    fn next_snapshot_time(&self) -> f64 {
        self.snapshot_index as f64 * self.opts.cadence
    }

    fn handle_snapshot<S: EventSink>(&mut self, sink: &mut S) -> Result<(), SimError> {
        if let Boundary::Follow { ahead } = self.opts.boundary {
            let front = self.state.front_site()?;
            let last = self.state.window().last();
            let room = (last - front).max(0) as usize;
            if room < ahead {
                let shift = ahead - room;
                self.state.shift_right(shift)?;
                self.rebuild_active();
                self.pending = None;
                sink.window_shifted(self.state.window(), shift);
            }
        }
        if matches!(self.opts.boundary, Boundary::Pinned | Boundary::Follow { .. }) {
            let w = self.state.window();
            let margin = self.opts.escape_margin as Site;
            let nn = self.params.deme_size();
            let right = self.state.count((w.last() - margin).max(w.first)).unwrap_or(0);
            let left = self.state.count((w.first + margin).min(w.last())).unwrap_or(nn);
            if right > 0 || left < nn {
                return Err(SimError::FrontEscaped { time: self.state.time, right_edge: right > 0 });
            }
        }
        Ok(())
    }

    /// Runs until `t_end`, taking snapshots at multiples of the cadence.
    pub fn advance<S, F>(&mut self, t_end: f64, sink: &mut S, mut on_snapshot: F) -> Result<(), SimError>
    where
        S: EventSink,
        F: FnMut(&PopulationState),
    {
        if t_end < self.state.time {
            return Err(SimError::InvalidOption(format!("cannot run backwards to {t_end}")));
        }
        loop {
            let pending = match self.pending {
                Some(t) => t,
                None => {
                    let rate = self.total_rate();
                    let t = if rate > 0.0 {
                        let e: f64 = self.rng.sample(Exp1);
                        self.state.time + e / rate
                    } else {
                        f64::INFINITY
                    };
                    self.pending = Some(t);
                    t
                }
            };
            let snap = self.next_snapshot_time();
            if snap <= pending && snap <= t_end {
                self.state.time = snap;
                self.snapshot_index += 1;
                self.handle_snapshot(sink)?;
                on_snapshot(&self.state);
                continue;
            }
            if pending <= t_end {
                self.state.time = pending;
                self.pending = None;
                self.fire(pending, sink);
                continue;
            }
            break;
        }
        self.state.time = t_end;
        Ok(())
    }
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: PopulationState,
    pub log: EventLog,
    pub snapshots: Vec<Snapshot>,
    pub counters: EventCounters,
}

impl RunOutput {
    /// `(time, front position)` at every snapshot that has a front.
    pub fn fronts(&self) -> Vec<(f64, f64)> {
        let nn = self.state.deme_size();
        let nf = f64::from(self.state.n());
        self.snapshots
            .iter()
            .filter_map(|s| s.front_site(nn).map(|f| (s.time, f64::from(f) / nf)))
            .collect()
    }
}

/// Simulates `duration` time units from `state`, logging accepted events
/// according to `opts.filter`.
pub fn run(
    params: &ModelParams,
    state: PopulationState,
    duration: f64,
    seed: u64,
    opts: RunOptions,
) -> Result<RunOutput, SimError> {
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(SimError::InvalidOption(format!("duration {duration} must be finite and >= 0")));
    }
    let start = state.time();
    let window = state.window();
    let mut sim = Simulator::new(*params, state, seed, opts)?;
    let mut log = EventLog::new(LogMetadata {
        seed,
        params: params.raw(),
        window,
        filter: opts.filter,
        start_time: start,
        end_time: start + duration,
    });
    let mut snapshots = Vec::new();
    sim.advance(start + duration, &mut log, |s| snapshots.push(Snapshot::of(s)))?;
    let counters = sim.counters();
    Ok(RunOutput { state: sim.into_state(), log, snapshots, counters })
}

/// Convenience: a window of `width` space units centred on `center`.
pub fn centered_window(params: &ModelParams, center: f64, width: f64) -> Window {
    Window::centered(params.n(), center, width)
}
