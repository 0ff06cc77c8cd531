//! Simulator for deterministic cryptography with single photons carrying two
//! qubits: scheme construction, intercept-resend analysis, and protocol runs.

pub mod hilbert4;
pub mod rng;
pub mod schemes;
pub mod adversary;
mod nelder_mead;
pub mod protocol;
pub mod experiments;
