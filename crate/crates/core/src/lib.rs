//! Simulation toolkit for a flux-pulsed charge qubit coupled to a
//! transmission-line resonator: cat-state field qubits, hybrid gates,
//! second-order Dyson phase extraction and closed-form dissipation curves.

pub mod device;
pub mod dissipation;
pub mod fockspace;
pub mod gates;
pub mod propagator;

pub use num_complex::Complex64 as C64;
