//! Decentralized potential-field formation control for rigid bodies.
//!
//! Each agent is a sphere with full 6-DOF second-order dynamics (position plus
//! X-Y-Z Euler angles). A per-agent potential combines a quadratic goal
//! term over the initial formation graph with a product of bump-function
//! barriers for inter-agent collisions, obstacles, the workspace boundary,
//! connectivity loss and the Euler-angle representation singularity. The
//! controller descends the local potential with damping and gravity
//! compensation, and the simulator checks every safety property at each step.
//!
//! ```
//! use swarmsim::scenario_file;
//!
//! let scenario = scenario_file::parse_str(swarmsim::BUNDLED_FORMATION_SCENARIO).unwrap();
//! assert!(swarmsim::model::validate_scenario(&scenario).is_ok());
//! ```

pub mod control;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod model;
pub mod output;
pub mod potential;
pub mod scenario_file;
pub mod selfcheck;
pub mod sim;

pub use error::{Error, Result};

/// Four-agent formation through two spherical obstacles; the canonical
/// regression scenario.
pub const BUNDLED_FORMATION_SCENARIO: &str = include_str!("../../../scenarios/formation4.toml");
