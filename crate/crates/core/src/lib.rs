//! Deployment optimization of multi-BS / multi-RIS networks for integrated
//! relative energy efficiency (IREE): capacity delivered where the traffic is,
//! per joule.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod capacity;
pub mod error;
pub mod geometry;
pub mod grad;
pub mod io;
pub mod metrics;
pub mod network;
pub mod params;
pub mod propagation;
pub mod scaling;
pub mod solver;
pub mod traffic;

pub use capacity::{CapacityField, CapacityKind, PowerModel};
pub use error::{Error, Result};
pub use geometry::{Point, Point3};
pub use metrics::Metrics;
pub use propagation::{BsConfig, Deployment, PropagationParams, RisConfig};
pub use solver::{Scenario, SolveTrace, SolverConfig};
pub use traffic::{AreaGrid, TrafficField, TrafficProfile};
