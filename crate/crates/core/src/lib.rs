//! Online power allocation for an energy-harvesting transmitter that only
//! sees the system state after a delay.
//!
//! The crate provides the drift-plus-penalty controller and two baselines,
//! a seeded environment simulator with a finite battery, a sample-average
//! upper-bound oracle, and a Monte Carlo harness that aggregates runs into
//! CSV and SVG output.

pub mod controller;
pub mod environment;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod projection;
pub mod selftest;
pub mod types;
pub mod utility;

pub use controller::{
    DriftPlusPenalty, OutdatedArgmaxBaseline, PowerController, ProjectedGradientBaseline, QueueFeed,
};
pub use environment::{BatteryState, ChannelProcess, EnergyProcess, StateGenerator};
pub use error::{Error, Result};
pub use types::{
    derive_algorithm_params, derive_params, AlgorithmParams, PowerVector, ProblemParams,
    SlotRecord, SystemState, TOL,
};
pub use utility::{LogUtility, Utility};
