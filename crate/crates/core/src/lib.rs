//! Cruise-phase trajectory optimization in wind with elliptical no-fly
//! penalties, solved by costate shooting and checked against a direct
//! transcription.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atmosphere;
pub mod direct;
pub mod error;
pub mod hazards;
pub mod io;
pub mod lsq;
pub mod ocp;
pub mod ode;
pub mod optim;
pub mod performance;
pub mod roots;
pub mod stochastic;
pub mod windfield;

pub use direct::{DirectConfig, DirectSolution};
pub use error::{Error, Result};
pub use hazards::{ClusterResult, EllipseHazard, PenaltyMode};
pub use ocp::scenario::SCHEMA_VERSION;
pub use ocp::{Scenario, Solution, SolverConfig, Status};
pub use performance::AircraftModel;
pub use windfield::{Domain, PrimitiveCounts, WindField, WindPrimitive};
