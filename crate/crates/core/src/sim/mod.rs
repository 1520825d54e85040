//! Seeded simulator of couples' daily life and of the two-watch trigger,
//! recording and self-report protocol.

pub mod config;
pub mod fsm;
pub mod radio;
pub mod synth;
pub mod traces;
pub mod world;

pub use config::SimConfig;
pub use world::{generate_world, replay, simulate_protocol, ProtocolRun, World};
