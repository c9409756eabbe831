//! Reference checks shared by the test targets.
#![allow(dead_code)]

pub mod integrator;
pub mod sat;
pub mod theory;
