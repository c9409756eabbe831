//! Railway scheduling on top of the SAT-modulo-ODE solver: problem documents,
//! routing, formula encoding, plans and the serial-parallel benchmarks.

pub mod problem;
pub mod routes;
pub mod bench;
pub mod encode;
pub mod plan;
pub mod check;
