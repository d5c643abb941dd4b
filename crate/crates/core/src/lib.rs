//! Bearing-based formation maneuver control.
//!
//! Followers run a distributed proportional-integral law on relative positions
//! projected orthogonally to desired bearings; two or more leaders steer the
//! formation's centroid and scale. The crate covers bearing rigidity analysis,
//! the bearing Laplacian, the control law and its closed-loop spectrum, leader
//! maneuver planning, and a deterministic simulator with scenario file I/O.

pub mod controller;
pub mod error;
pub mod formation;
pub mod io;
pub mod laplacian;
pub mod maneuver;
pub mod rigidity;
pub mod sim;

pub use controller::{
    closed_loop_matrix, follower_velocity, stacked_dynamics, verify_hurwitz, ControllerState,
    Gains, HurwitzReport,
};
pub use error::{FormationError, Result};
pub use formation::{
    bearing, bearing_function, orthogonal_projector, BearingSpec, Configuration, FormationGraph,
};
pub use laplacian::{
    bearing_laplacian, check_localizable, target_follower_positions, BearingLaplacian,
    FollowerSolver, Localizability,
};
pub use maneuver::{
    centroid, combined_command, scale, scaling_command, translation_command, validate_command,
    ManeuverCommand,
};
pub use rigidity::{
    bearing_rigidity_matrix, rigidity_report, trivial_motion_basis, RigidityReport,
};
pub use sim::{assemble, exponential_fit, Scenario, Segment, SimContext, SimState, Trajectory};
