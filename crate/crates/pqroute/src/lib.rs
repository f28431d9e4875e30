//! Host-side companion to `pqroute-core`: scenario files, batch runs, metric
//! export and the interactive session gateway.

pub mod config;
pub mod formats;
pub mod gateway;
pub mod runner;

pub use pqroute_core as core;
