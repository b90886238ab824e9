//! System-level simulator for group dissemination over an LTE downlink.
//!
//! The library models a hexagonal cell deployment, per-UE link quality,
//! subframe-granular resource accounting, stop-and-wait HARQ with chase
//! combining, and four group dissemination methods: per-UE unicast,
//! multicast over MBSFN subframes, single-cell point-to-multipoint, and
//! single-cell point-to-multipoint with XOR-combined (index-coded)
//! retransmissions. The index-coding planner in [`index_coding`] is
//! self-contained and usable outside the simulator.

pub mod error;
pub mod frame;
pub mod geometry;
pub mod harq;
pub mod index_coding;
pub mod link;
pub mod rng;
pub mod sim;
pub mod strategy;

pub use error::{Error, Result};
