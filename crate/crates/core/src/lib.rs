//! Deterministic simulator for gossip-based model sharing in a heterogeneous
//! sensor mesh, with a sweep engine and Pareto analysis of the resulting
//! reliability / energy / latency trade-offs.
//!
//! A run starts from a ground-truth [`region::TemperatureField`] and a
//! connected [`topology::Topology`]. Each node senses the cells around it,
//! then nodes exchange and average their models generation by generation
//! ([`protocol::run_generation`]) until [`metrics::check_convergence`] holds
//! or a constraint is violated.

pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nodemodel;
pub mod pareto;
pub mod protocol;
pub mod region;
pub mod seed;
pub mod topology;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use experiment::{DecisionVars, Scenario, SimResult};
pub use metrics::{ObjectiveTriple, Violation, ViolationKind};
pub use protocol::Strategy;
pub use topology::PlacementKind;
