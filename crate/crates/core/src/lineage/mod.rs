//! Backward ancestral lineages over recorded event histories, coalescence
//! times, and tracer diagnostics.

mod coarse;
mod history;
mod trace;

pub use coarse::{trace_checkpointed, CheckpointedGenealogy};
pub use history::{
    ancestor_site_counts, pair_ancestor_counts, stayed_ahead_fraction, tracer_q, tracer_q_sided, DiagnosticsConfig,
    History, Side,
};
pub use trace::{trace, trace_from, CoalescenceMatrix, Genealogy, Jump, LineagePath, Tau, TraceMethod};

use crate::sim::Slot;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TraceError {
    #[error("sample {0:?} is not an individual of the final state")]
    UnknownSample(Slot),
    #[error("sample {0:?} is type a but the log only records type-A parents")]
    FilteredSample(Slot),
    #[error("horizon {horizon} exceeds the {available} time units covered by the log")]
    HorizonExceedsLog { horizon: f64, available: f64 },
    #[error("log records no events")]
    NoGenealogy,
    #[error("replaying states needs a complete fixed-window log")]
    IncompleteLog,
    #[error("times {t1} and {t2} are outside the history or out of order")]
    TimeRange { t1: f64, t2: f64 },
    #[error("ancestor counts are defined for 2 or 3 sites, not {0}")]
    UnsupportedArity(usize),
    #[error("invalid diagnostics configuration {0:?}")]
    InvalidDiagnostics(DiagnosticsConfig),
    #[error("no front position recorded at time {0}")]
    MissingFront(f64),
    #[error("lineage of sample {sample} changes type at time {time}")]
    TypeConstancy { sample: usize, time: f64 },
    #[error("replay disagrees with the recorded ancestry before time {time}")]
    ReplayMismatch { time: f64 },
    #[error("replay failed: {0}")]
    Replay(String),
}
