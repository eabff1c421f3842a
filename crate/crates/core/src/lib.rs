//! Multi-user MIMO with arbitrary input constellations: constrained capacity, group rate
//! allocation, LDPC transfer-curve matching and OAMP/VAMP-style iterative detection.

pub mod allocation;
pub mod channel;
pub mod ldpc;
pub mod constellation;
pub mod error;
pub mod quad;
pub mod receiver;
pub mod rng;
pub mod se;
pub mod sim;

pub use error::{Error, Result};
