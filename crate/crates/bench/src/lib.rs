//! In-process deployment, the scripted demo and the benchmark harness.

pub mod demo;
pub mod deployment;
pub mod kd;
pub mod load;
