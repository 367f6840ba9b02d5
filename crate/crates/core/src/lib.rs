//! Time-stepped simulator for risk-aware data storage and routing in robot
//! swarms, with hop-count and flooding-replication baselines.
//!
//! Robots gossip hop counts toward a base station, rate their own fitness to
//! hold data from that hop count and the radiation they sense, and push
//! least-recently-used items to fitter neighbours. The engine reports
//! reliability, transfer speed and storage use per step.

pub mod engine;
pub mod error;
pub mod geometry;
pub mod network;
pub mod risk;
pub mod routing;
pub mod scenario;
pub mod storage;
pub mod sweep;
pub mod topology;

pub use engine::{run, DeliveryRecord, MetricsSeries, RiskParams, SimConfig, Simulation, StepRow};
pub use error::{ConfigError, Error, InvariantError, Result};
pub use geometry::{Arena, Point};
pub use scenario::{parse_scenario, Scenario};
pub use storage::PolicyKind;
pub use sweep::{run_sweep, SweepSummary};
