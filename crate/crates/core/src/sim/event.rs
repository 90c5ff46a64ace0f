use serde::{Deserialize, Serialize};

use super::state::{Site, Slot, Window};
use crate::params::RawParams;

/// The four Poisson families driving the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventClass {
    /// Neutral reproduction.
    P,
    /// Directional selection.
    S,
    /// Selection against heterozygotes.
    Q,
    /// Migration.
    R,
}

impl EventClass {
    pub const ALL: [EventClass; 4] = [EventClass::P, EventClass::S, EventClass::Q, EventClass::R];

    pub fn as_str(self) -> &'static str {
        match self {
            EventClass::P => "P",
            EventClass::S => "S",
            EventClass::Q => "Q",
            EventClass::R => "R",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "P" => Some(EventClass::P),
            "S" => Some(EventClass::S),
            "Q" => Some(EventClass::Q),
            "R" => Some(EventClass::R),
            _ => None,
        }
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }
}

/// An accepted replacement: `target` is overwritten by offspring of `parent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub target: Slot,
    pub parent: Slot,
    pub class: EventClass,
    /// Type of the parent just before the event (1 = A).
    pub parent_type: u8,
}

/// Which accepted replacements reach the event sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFilter {
    /// Every accepted replacement.
    All,
    /// Only replacements whose parent is type A. Demes that are all-a along
    /// with both neighbours are not simulated.
    AParentOnly,
    /// Nothing is recorded; every monomorphic neighbourhood is skipped.
    Off,
}

impl LogFilter {
    #[inline]
    pub fn admits(self, parent_type: u8) -> bool {
        match self {
            LogFilter::All => true,
            LogFilter::AParentOnly => parent_type == 1,
            LogFilter::Off => false,
        }
    }
}

/// Receiver of accepted replacements during a run.
pub trait EventSink {
    fn record(&mut self, event: &EventRecord);

    /// Called when the simulated window moves `shift` sites to the right.
    fn window_shifted(&mut self, _new_window: Window, _shift: usize) {}
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl EventSink for NullSink {
    fn record(&mut self, _event: &EventRecord) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogMetadata {
    pub seed: u64,
    pub params: RawParams,
    pub window: Window,
    pub filter: LogFilter,
    pub start_time: f64,
    pub end_time: f64,
}

/// Events grouped by target slot, positions increasing within each group.
#[derive(Debug, Clone)]
struct SlotIndex {
    keys: Vec<Slot>,
    offsets: Vec<usize>,
    positions: Vec<u32>,
}

impl SlotIndex {
    fn build(records: &[EventRecord]) -> Self {
        let mut pairs: Vec<(Slot, u32)> =
            records.iter().enumerate().map(|(i, e)| (e.target, i as u32)).collect();
        pairs.sort_unstable();
        let mut keys = Vec::new();
        let mut offsets = Vec::new();
        let mut positions = Vec::with_capacity(pairs.len());
        for (k, (slot, pos)) in pairs.into_iter().enumerate() {
            if keys.last() != Some(&slot) {
                keys.push(slot);
                offsets.push(k);
            }
            positions.push(pos);
        }
        offsets.push(positions.len());
        Self { keys, offsets, positions }
    }

    /// Largest event position `< before` whose target is `slot`.
    fn latest_before(&self, slot: Slot, before: usize) -> Option<usize> {
        let k = self.keys.binary_search(&slot).ok()?;
        let group = &self.positions[self.offsets[k]..self.offsets[k + 1]];
        let cut = group.partition_point(|&p| (p as usize) < before);
        cut.checked_sub(1).map(|i| group[i] as usize)
    }
}

/// Append-only, time-ordered record of accepted replacements.
#[derive(Debug, Clone)]
pub struct EventLog {
    pub meta: LogMetadata,
    records: Vec<EventRecord>,
    index: std::sync::OnceLock<SlotIndex>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LogError {
    #[error("event times must increase strictly (record {0})")]
    NotIncreasing(usize),
    #[error("event {0} falls outside [{1}, {2}]")]
    OutOfRange(usize, f64, f64),
}

impl EventLog {
    pub fn new(meta: LogMetadata) -> Self {
        Self { meta, records: Vec::new(), index: std::sync::OnceLock::new() }
    }

    pub fn from_records(meta: LogMetadata, records: Vec<EventRecord>) -> Result<Self, LogError> {
        for (i, w) in records.windows(2).enumerate() {
            if !(w[1].time > w[0].time) {
                return Err(LogError::NotIncreasing(i + 1));
            }
        }
        if let Some((i, e)) = records
            .iter()
            .enumerate()
            .find(|(_, e)| e.time < meta.start_time || e.time > meta.end_time)
        {
            return Err(LogError::OutOfRange(i, e.time, meta.start_time));
        }
        Ok(Self { meta, records, index: std::sync::OnceLock::new() })
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }
    pub fn len(&self) -> usize {
        self.records.len()
    }
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of records with `time <= t`.
    pub fn position_at(&self, t: f64) -> usize {
        self.records.partition_point(|e| e.time <= t)
    }

    pub fn latest_targeting(&self, slot: Slot, before: usize) -> Option<usize> {
        self.index.get_or_init(|| SlotIndex::build(&self.records)).latest_before(slot, before)
    }

    /// Copy keeping only the records `filter` admits.
    pub fn filtered(&self, filter: LogFilter) -> EventLog {
        let records = self.records.iter().filter(|e| filter.admits(e.parent_type)).copied().collect();
        EventLog { meta: LogMetadata { filter, ..self.meta.clone() }, records, index: Default::default() }
    }

    /// Sites touched by any record (targets and parents).
    pub fn site_span(&self) -> Option<(Site, Site)> {
        self.records.iter().fold(None, |acc, e| {
            let lo = e.target.site.min(e.parent.site);
            let hi = e.target.site.max(e.parent.site);
            Some(match acc {
                None => (lo, hi),
                Some((a, b)) => (a.min(lo), b.max(hi)),
            })
        })
    }
}

impl EventSink for EventLog {
    #[inline]
    fn record(&mut self, event: &EventRecord) {
        if self.index.get().is_some() {
            self.index = std::sync::OnceLock::new();
        }
        self.records.push(*event);
    }
}

impl EventSink for Vec<EventRecord> {
    #[inline]
    fn record(&mut self, event: &EventRecord) {
        self.push(*event);
    }
}
