//! Interaction and navigation stack for a greeter service robot, exercised
//! against a deterministic simulated robot and world.

pub mod endpointer;
pub mod geom;
pub mod asr;
pub mod pgm;
pub mod faces;
pub mod http;
pub mod percept;
pub mod edt;
pub mod localize;
pub mod simworld;
pub mod navigate;
pub mod bridge;
pub mod orchestrator;
