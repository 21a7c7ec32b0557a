//! Overtaking planner built on explicit-state reachability search, together
//! with the continuous two-lane simulator, sensor models and Promela bridge
//! used to exercise it.

pub mod grid;
pub mod harness;
pub mod planner;
pub mod promela;
pub mod sensing;
pub mod sim;
pub mod world;
