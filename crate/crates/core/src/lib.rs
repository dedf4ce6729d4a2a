//! Simulation and average-Hamiltonian analysis of PHIP polarisation-transfer sequences
//! on a three-spin system (two hydrogens I1, I2 and a heteronucleus S).

pub mod aht;
pub mod catalog;
pub mod expm;
pub mod hamiltonian;
pub mod propagator;
pub mod robustness;
pub mod sequence;
pub mod spin;
