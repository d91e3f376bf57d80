//! Files, command line and experiment stages around `dropdrive-core`.

pub use dropdrive_core as core;

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod json;
pub mod model;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod trace;
