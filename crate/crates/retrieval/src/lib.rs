//! Fault-tolerant data retrieval: protocols and an adversarial
//! discrete-event simulator.

pub mod adversary;
pub mod dtree;
pub mod error;
pub mod invariants;
pub mod metrics;
pub mod model;
pub mod odc;
pub mod proto;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod trace;
