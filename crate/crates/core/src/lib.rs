//! Linear-quadratic variable speed limit (VSL) control for the
//! Lighthill-Whitham-Richards traffic model.
//!
//! The controller is designed on the linearised LWR model: a spatial Riccati
//! equation yields a closed-form feedback gain `K0(z)`, the distributed input
//! `db/dz = K0 drho` is integrated along the road into a speed-limit profile,
//! and the profile drives either the linear or the nonlinear plant.

pub mod config;
pub mod error;
pub mod fundamental;
pub mod output;
pub mod params;
pub mod riccati;
pub mod scenario;
pub mod solver;
pub mod svg;
pub mod verify;

pub use error::{Error, Result};
pub use fundamental::VslRate;
pub use params::{make_grid, Grid1D, TrafficParams};
pub use riccati::{ControlField, RiccatiProblem, VslClamp};
pub use scenario::{run_simulation, sweep_q0, Model, Scenario, SimulationHistory};
pub use solver::{DensityField, FieldKind};
