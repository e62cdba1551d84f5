//! Mesoscopic kinematic-wave traffic simulation on link-node networks.
//!
//! Vehicles move in platoons of `Δn` along links following a simplified
//! car-following rule, cross nodes through a priority-weighted node model and
//! pick routes by a duo-style attractiveness table that is periodically
//! refreshed from instantaneous link travel times.
//!
//! ```no_run
//! use mesoflow::{Scenario, SimConfig};
//!
//! let scenario = Scenario::from_dir("data/gridlock").unwrap();
//! let mut world = scenario.build(SimConfig::default()).unwrap();
//! world.run().unwrap();
//! let stats = mesoflow::analyzer::basic_stats(&world);
//! println!("{} trips", stats.completed_trips);
//! ```

pub mod analyzer;
pub mod cli;
pub mod engine;
pub mod error;
pub mod ids;
pub mod kinematics;
pub mod node_transfer;
pub mod plot;
pub mod routing;
pub mod scenario;

pub use engine::World;
pub use error::{Result, SimError};
pub use ids::{LinkId, NodeId, PlatoonId};
pub use scenario::{DemandSpec, LinkSpec, NodeSpec, Scenario, SignalPlan, SimConfig};
