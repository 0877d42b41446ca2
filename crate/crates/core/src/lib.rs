//! FFT-based crystal plasticity phase-field simulator for microstructural
//! fatigue crack nucleation and short-crack growth.

pub mod crystal;
pub mod gnd;
pub mod grid;
pub mod microstructure;
pub mod phase_field;
pub mod sim;
pub mod solver;
pub mod tensor;
