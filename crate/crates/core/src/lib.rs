//! Highway driving simulator and a two-timescale hierarchical actor-critic agent.
//!
//! The high level picks a hybrid guidance action (lane offset, longitudinal
//! endpoint distance) once per segment; the guidance is expanded into quintic
//! path points that the low level tracks with steering/acceleration commands
//! every simulation step. An artificial-potential-field risk model shields both
//! levels and can end a segment early.

pub mod agent;
pub mod config;
pub mod error;
pub mod eval;
pub mod guidance;
pub mod numerics;
pub mod policies;
pub mod rewards;
pub mod safety;
pub mod sim;
pub mod trainer;

pub use config::Config;
pub use error::{Error, Result};
