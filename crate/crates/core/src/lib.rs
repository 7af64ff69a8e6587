//! Slotted simulator and capacity analyzer for rack-structured clusters with
//! local, rack-local and remote service.

pub mod capacity;
pub mod cluster;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod policies;
pub mod traffic;

pub use error::{Error, Result};
