//! Memristive short-term plasticity synapses embedded in a recurrent m-STPN
//! layer, trained with advantage actor-critic, with energy accounting that
//! compares in-memory inference against a GPU per-flop cost model.

pub mod checkpoint;
pub mod device;
pub mod energy;
pub mod envs;
pub mod error;
pub mod mstpn;
pub mod network;
pub mod seed;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
