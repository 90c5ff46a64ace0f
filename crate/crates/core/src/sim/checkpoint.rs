use super::engine::{RunOptions, Simulator, Snapshot};
use super::event::{EventLog, EventRecord, EventSink, LogFilter, LogMetadata, NullSink};
use super::state::{PopulationState, Site, Slot, Window};
use super::SimError;
use crate::params::ModelParams;

/// Ancestor descended from a pinned ghost deme outside the window.
pub const ANCESTOR_GHOST: u32 = u32::MAX;
/// Slot that entered the window after the interval began.
pub const ANCESTOR_UNTRACKED: u32 = u32::MAX - 1;

/// Where an individual at the end of an interval descends from at its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ancestor {
    Slot(Slot),
    Ghost,
    Untracked,
}

/// Ancestor of every slot at `end` among the slots at `start`, following
/// recorded replacements only. Exact for type-A individuals when the run
/// records events with type-A parents.
#[derive(Debug, Clone)]
pub struct AncestryMap {
    pub start: f64,
    pub end: f64,
    pub start_window: Window,
    pub end_window: Window,
    deme_size: u32,
    packed: Vec<u32>,
}

impl AncestryMap {
    pub fn ancestor(&self, slot: Slot) -> Option<Ancestor> {
        if !self.end_window.contains(slot.site) || slot.index >= self.deme_size {
            return None;
        }
        let k = (slot.site - self.end_window.first) as usize * self.deme_size as usize + slot.index as usize;
        Some(match self.packed[k] {
            ANCESTOR_GHOST => Ancestor::Ghost,
            ANCESTOR_UNTRACKED => Ancestor::Untracked,
            v => Ancestor::Slot(Slot::new(
                self.start_window.first + (v / self.deme_size) as Site,
                v % self.deme_size,
            )),
        })
    }
}

struct AncestryRecorder {
    start: f64,
    start_window: Window,
    window: Window,
    deme_size: u32,
    current: Vec<u32>,
}

impl AncestryRecorder {
    fn new(state: &PopulationState) -> Self {
        let w = state.window();
        let total = w.len as u32 * state.deme_size();
        Self {
            start: state.time(),
            start_window: w,
            window: w,
            deme_size: state.deme_size(),
            current: (0..total).collect(),
        }
    }

    fn offset(&self, slot: Slot) -> Option<usize> {
        self.window
            .contains(slot.site)
            .then(|| (slot.site - self.window.first) as usize * self.deme_size as usize + slot.index as usize)
    }

    fn finish(self, end: f64) -> AncestryMap {
        AncestryMap {
            start: self.start,
            end,
            start_window: self.start_window,
            end_window: self.window,
            deme_size: self.deme_size,
            packed: self.current,
        }
    }
}

impl EventSink for AncestryRecorder {
    #[inline]
    fn record(&mut self, e: &EventRecord) {
        let Some(t) = self.offset(e.target) else { return };
        let v = match self.offset(e.parent) {
            Some(p) => self.current[p],
            None => ANCESTOR_GHOST,
        };
        self.current[t] = v;
    }

    fn window_shifted(&mut self, window: Window, shift: usize) {
        let nn = self.deme_size as usize;
        let len = self.current.len();
        self.current.drain(..(shift * nn).min(len));
        self.current.resize(len, ANCESTOR_UNTRACKED);
        self.window = window;
    }
}

/// Log sink for replays. After a window shift, parents in the dropped sites
/// are pinned ghosts; they are rewritten to the ghost site left of the
/// interval's starting window so the log reads like a fixed-window log.
struct ReplaySink {
    log: EventLog,
    ghost: Site,
    first: Site,
}

impl EventSink for ReplaySink {
    #[inline]
    fn record(&mut self, e: &EventRecord) {
        if e.parent.site < self.first {
            let mut e = *e;
            e.parent.site = self.ghost;
            self.log.record(&e);
        } else {
            self.log.record(e);
        }
    }

    fn window_shifted(&mut self, window: Window, _shift: usize) {
        self.first = window.first;
    }
}

/// A long run stored as periodic simulator checkpoints plus, over the
/// recorded stretch, one ancestry map per checkpoint interval. Any interval
/// can be replayed bit-for-bit to recover its full event log.
#[derive(Debug, Clone)]
pub struct CheckpointedRun {
    checkpoints: Vec<Simulator>,
    maps: Vec<AncestryMap>,
    record_from: usize,
    snapshots: Vec<Snapshot>,
    final_state: PopulationState,
    seed: u64,
}

impl CheckpointedRun {
    /// Runs for `duration` with checkpoints every `interval`. Before
    /// `start + record_from` the dynamics run unlogged with every
    /// monomorphic neighbourhood skipped; from there on events with type-A
    /// parents feed the ancestry maps.
    pub fn run(
        params: &ModelParams,
        state: PopulationState,
        seed: u64,
        mut opts: RunOptions,
        duration: f64,
        interval: f64,
        record_from: f64,
    ) -> Result<Self, SimError> {
        if !(interval > 0.0) || !(duration >= 0.0) || !(0.0..=duration).contains(&record_from) {
            return Err(SimError::InvalidOption(format!(
                "checkpointing needs interval > 0 and 0 <= record_from <= duration (got {interval}, {record_from}, {duration})"
            )));
        }
        let start = state.time();
        let steps = (duration / interval).round() as usize;
        if ((steps as f64) * interval - duration).abs() > 1e-9 * duration.max(1.0) {
            return Err(SimError::InvalidOption(format!("duration {duration} is not a multiple of {interval}")));
        }
        let record_step = (record_from / interval).floor() as usize;
        opts.filter = LogFilter::Off;
        let mut sim = Simulator::new(*params, state, seed, opts)?;
        let mut snapshots = Vec::new();
        let mut checkpoints = Vec::with_capacity(steps + 1);
        let mut maps = Vec::new();
        for k in 0..steps {
            if k == record_step {
                sim.set_filter(LogFilter::AParentOnly);
            }
            checkpoints.push(sim.clone());
            let end = start + (k + 1) as f64 * interval;
            if k >= record_step {
                let mut rec = AncestryRecorder::new(sim.state());
                sim.advance(end, &mut rec, |s| snapshots.push(Snapshot::of(s)))?;
                maps.push(rec.finish(end));
            } else {
                sim.advance(end, &mut NullSink, |s| snapshots.push(Snapshot::of(s)))?;
            }
        }
        if steps == 0 || record_step >= steps {
            sim.advance(start + duration, &mut NullSink, |s| snapshots.push(Snapshot::of(s)))?;
        }
        checkpoints.push(sim.clone());
        Ok(Self { checkpoints, maps, record_from: record_step, snapshots, final_state: sim.into_state(), seed })
    }

    pub fn final_state(&self) -> &PopulationState {
        &self.final_state
    }
    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Checkpoint times, first to last.
    pub fn times(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|s| s.time()).collect()
    }

    pub fn state_at_checkpoint(&self, k: usize) -> Option<&PopulationState> {
        self.checkpoints.get(k).map(|s| s.state())
    }

    /// Ancestry maps in forward order; map `j` spans checkpoints
    /// `first_recorded() + j` and `first_recorded() + j + 1`.
    pub fn maps(&self) -> &[AncestryMap] {
        &self.maps
    }
    pub fn first_recorded(&self) -> usize {
        self.record_from
    }

    /// Replays interval `k` (checkpoint `k` to `k + 1`) and returns its full
    /// log under the interval's filter. Descent from demes dropped by a
    /// window shift is reported as descent from a ghost left of the
    /// interval's starting window.
    pub fn replay(&self, k: usize) -> Result<EventLog, SimError> {
        let (Some(from), Some(to)) = (self.checkpoints.get(k), self.checkpoints.get(k + 1)) else {
            return Err(SimError::InvalidOption(format!("no checkpoint interval {k}")));
        };
        let mut sim = from.clone();
        let window = sim.state().window();
        let log = EventLog::new(LogMetadata {
            seed: self.seed,
            params: sim.params().raw(),
            window,
            filter: sim.options().filter,
            start_time: sim.time(),
            end_time: to.time(),
        });
        let mut sink = ReplaySink { log, ghost: window.first - 1, first: window.first };
        sim.advance(to.time(), &mut sink, |_| {})?;
        Ok(sink.log)
    }
}
