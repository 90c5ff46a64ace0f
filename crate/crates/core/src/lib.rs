//! Exact simulation of a structured Moran model with bistable selection on a
//! one-dimensional lattice of demes, backward lineage tracing, and the
//! deterministic and stochastic reference limits used to check it.

pub mod analytic;
pub mod lineage;
pub mod params;
pub mod reference;
pub mod rng;
pub mod sim;
pub mod stats;

pub use params::{wave_constants, ModelParams, ParamError, RawParams};
