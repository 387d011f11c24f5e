//! Small dense-network toolkit: forward/backward passes, Adam, Polyak
//! averaging and text checkpoints.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use mlp::{Activation, Dense, Gradients, Mlp, Trace};
