//! Provably force-safe environmental contact for planar soft manipulators.
//!
//! The crate builds the set of tip positions at which a deformable, polygonal
//! environment is pushed with at most a given force ([`env_geometry`]),
//! models a piecewise-constant-curvature robot ([`pcc_model`]), and keeps the
//! tip inside that set by filtering a nominal command through a control
//! barrier function QP ([`cbf_filter`], [`qp_solver`]). [`sim_engine`] runs
//! the closed loop and [`config`] reads run-configuration files.

pub mod cbf_filter;
pub mod config;
pub mod env_geometry;
pub mod pcc_model;
pub mod qp_solver;
pub mod sim_engine;

pub use cbf_filter::{BarrierConfig, BarrierTuning, Gamma, Preset};
pub use env_geometry::{DeformationModel, HalfspacePolytope, SafeSet};
pub use pcc_model::{RobotParams, RobotState};
pub use qp_solver::{QpProblem, QpSolution};
pub use sim_engine::{Integrator, NominalSinusoid, SimConfig, Trajectory};
