//! Simulation of a distributed ISAC network and a passive adversary that localizes the
//! sensing target from leaked precoder structure.

pub mod adversary;
pub mod airlink;
pub mod channel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod precoder;
pub mod rng;
pub mod scenario;
pub mod socp;

pub use error::{Error, Result};
