//! Exact event-driven simulation of the labelled lattice population.

mod checkpoint;
mod engine;
mod event;
mod state;

pub use checkpoint::{Ancestor, AncestryMap, CheckpointedRun, ANCESTOR_GHOST, ANCESTOR_UNTRACKED};
pub use engine::{centered_window, run, Boundary, EventCounters, RunOptions, RunOutput, Simulator, Snapshot};
pub use event::{EventClass, EventLog, EventRecord, EventSink, LogError, LogFilter, LogMetadata, NullSink};
pub use state::{build_initial, initial_counts, PopulationState, Site, Slot, Window};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("malformed state: {0}")]
    MalformedState(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("no site with p >= 1/2 in the window")]
    NoFront,
    #[error("cannot drop polymorphic site {site} when shifting the window")]
    DropPolymorphic { site: Site },
    #[error("window [{left}, {right}] too narrow for a front centred at {center}")]
    WindowTooNarrow { left: f64, right: f64, center: f64 },
    #[error("front reached the {} window edge at t = {time}", if *right_edge { "right" } else { "left" })]
    FrontEscaped { time: f64, right_edge: bool },
    #[error(transparent)]
    Log(#[from] LogError),
}
