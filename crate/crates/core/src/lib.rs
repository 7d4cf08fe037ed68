//! Pipelined early-prediction decoding toolkit.
//!
//! - [`analytic`]: closed-form expected latency and compute.
//! - [`stochastic`]: Monte Carlo over independent per-token matches.
//! - [`schedule`]: time-unit schedule of the main and sub-processes.
//! - [`mockmodel`]: a deterministic layered token model that runs the full
//!   decoder end to end.
//! - [`trace`]: match-rate estimation from prediction logs.
//! - [`render`]: SVG output for curves and schedules.

pub mod analytic;
pub mod config;
pub mod error;
pub mod mockmodel;
pub mod render;
pub mod schedule;
pub mod stochastic;
pub mod trace;

pub use config::{DecodingConfig, LatencyComputeReport, MatchSequence, RunDecomposition};
pub use error::{PpdError, Result};
