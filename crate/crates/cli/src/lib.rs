//! Command implementations, file formats and acceptance experiments behind
//! the `bistable-moran` binary.

pub mod commands;
pub mod config;
pub mod io;
pub mod sampling;
pub mod verify;
