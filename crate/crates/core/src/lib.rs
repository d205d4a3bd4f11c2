//! Parameter synthesis, optimisation and repair for parametric Markov decision
//! processes through geometric programming and sequential convex programming.

pub mod expr;
pub mod model;
pub mod analysis;
pub mod linalg;
pub mod encoder;
pub mod gp;
pub mod scp;
pub mod io;
pub mod tasks;
pub mod benchmarks;
