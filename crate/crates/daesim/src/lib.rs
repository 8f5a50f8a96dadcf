//! Cycle-level simulator for decoupled access-execute accelerators.
//!
//! Kernels are modeled as sets of hardware processes that exchange values
//! over bounded streams and issue memory traffic over decoupled channels.
//! The engine advances all of them in lock step against pluggable memory
//! timing models, deterministically: the same build and seed always produce
//! the same cycle counts, transcripts, and outputs.

pub mod channel;
pub mod config;
pub mod engine;
pub mod kernel;
pub mod memsys;
pub mod oracle;
pub mod report;
pub mod run;
pub mod workload;
