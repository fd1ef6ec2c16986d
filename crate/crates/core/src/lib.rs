//! Desk-scale mmWave cellular network simulator.
//!
//! A discrete-event engine drives a slotted downlink with UMa propagation,
//! planar-array beamforming and a selectable small-scale model (Nakagami-m
//! or a cluster/ray channel matrix), carrying UDP or TCP NewReno traffic.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamforming;
pub mod engine;
pub mod error;
pub mod fading;
pub mod geometry;
pub mod link;
pub mod mac;
pub mod network;
pub mod propagation;
pub mod runner;
pub mod scenario;
pub mod transport;

pub use engine::{EventQueue, RandomStream, RngStreams, SimTime};
pub use error::{Error, Result};
pub use fading::{ChannelModel, ChannelSample, WorkCounter};
pub use network::{simulate, RunOptions, RunOutcome};
pub use runner::{compare_models, run_experiment, write_csv, ComparisonReport, MetricsRow};
pub use scenario::{load_config, ScenarioConfig, ScenarioKind};
