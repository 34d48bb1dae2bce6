//! Analogues search for directional-drilling accidents.
//!
//! A 2-hour window of MWD telemetry is summarised by aggregated statistics,
//! paired with every lesson (past accident) in a database, and scored by a
//! gradient-boosted classifier trained to recognise pairs that share accident
//! type and drilling operation. High-scoring lessons are analogues; streaming
//! replay turns them into typed alarms.

pub mod clustering;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod gbdt;
pub mod lessons;
pub mod robustness;
pub mod synthgen;
pub mod telemetry;

pub use error::{Error, Result};
