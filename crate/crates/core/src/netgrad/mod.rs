//! ReLU networks and the reverse-mode engine used to differentiate losses built on them.

mod network;
pub mod tape;

pub use network::{
    clamp, clamp_in_place, forward, init_params, ramp_network, read_checkpoint, record_forward, write_checkpoint,
    NetworkSpec, NetworkVars, ParamVector,
};
pub use tape::{Gradients, LinearMap, Tape, Var};
