//! Cell-centered arbitrary Lagrangian-Eulerian finite-volume solver for 2-D
//! compressible gas, two-way coupled with a dilute Lagrangian particle
//! phase. Edge fluxes come from a four-region HLLC construction evaluated at
//! per-vertex grid speeds, with a conservative nodal contact-velocity solver
//! driving the mesh motion.

pub mod cases;
pub mod config;
pub mod error;
pub mod geom;
pub mod mesh;
pub mod output;
pub mod particles;
pub mod riemann;
pub mod solver;
pub mod state;
pub mod timestep;
pub mod tracking;
pub mod verify;

pub use error::{SimError, SimResult};
