//! Numerical laboratory for the relativistic Euler equations on the periodic
//! 3-torus in a wave-transport-div-curl formulation.

pub mod energy;
pub mod eos;
pub mod fluid;
pub mod geometry;
pub mod grid;
pub mod initial;
pub mod jet;
pub mod jetfield;
pub mod solver;
pub mod structure;
pub mod tensor;
