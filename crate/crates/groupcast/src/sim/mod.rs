//! Simulation harness: configuration, the subframe engine, the replayable
//! event trace, report computation, and multi-run sweeps.

pub mod config;
pub mod engine;
pub mod metrics;
pub mod sweep;
pub mod trace;
