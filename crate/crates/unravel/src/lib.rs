//! Stochastic unravelings of the Lindblad master equation.
//!
//! The crate simulates Markovian open quantum systems along two routes that
//! reconstruct the same a priori density matrix:
//!
//! * [`jump`] — photon-counting trajectories: deterministic non-Hermitian
//!   evolution interrupted by quantum jumps, with waiting times located by
//!   monitoring the squared norm of the unnormalized state;
//! * [`diffusion`] — homodyne trajectories: Euler–Maruyama integration of the
//!   diffusive stochastic Schrödinger equation together with the measured
//!   current record.
//!
//! Every stochastic estimate has a dense deterministic counterpart in
//! [`analysis`]: master-equation propagation, steady states, regression-theorem
//! correlations, waiting-time densities, exclusive probability densities and
//! full counting statistics. [`hilbert`] provides the dense complex linear
//! algebra, [`model`] the open-system definitions and a small catalog of
//! concrete systems, and [`cli`] a configuration-file front end.

pub mod analysis;
pub mod cli;
pub mod diffusion;
pub mod error;
pub mod hilbert;
pub mod jump;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::Error;

/// Double-precision complex scalar used throughout.
pub type C64 = num_complex::Complex64;
