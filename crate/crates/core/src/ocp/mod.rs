//! Indirect solution of the cruise optimal-control problem: scenario model,
//! pointwise control laws, costate dynamics and single shooting.

pub mod analytic;
pub mod checks;
pub mod control;
pub mod dynamics;
pub mod integrate;
pub mod problem;
pub mod scenario;
pub mod shooting;
pub mod throttle;
pub mod turnpike;

pub use control::Arc;
pub use integrate::{integrate_trajectory, Node, ShootingParams, Trajectory};
pub use problem::Problem;
pub use scenario::{Bounds, Endpoints, Scenario, Weights};
pub use shooting::{solve, Solution, SolverConfig, Status};
