//! Homogeneous nonovershooting stabilizers for linear plants on conic safe sets.
//!
//! The crate upgrades a linear state feedback `u = Kx`, which keeps a linear cone
//! `{x : Hx >= 0}` positively invariant, to a generalized-homogeneous feedback of
//! negative degree. The upgraded loop converges in finite time and keeps a
//! dilation-homogeneous cone invariant. Alongside the synthesis pipeline the crate
//! ships sampled verification of invariance, ISS and ISSf conditions and an
//! adaptive simulator for the closed loop.
//!
//! Module map:
//!
//! * [`numerics`]: matrix exponential, eigenvalue real parts, Lyapunov solve, simplex LP.
//! * [`dilation`]: linear dilations, the canonical homogeneous norm and the `Psi` map.
//! * [`cone`]: homogeneous cones, barriers and sampled margin checks.
//! * [`synthesis`]: linear gain, homogenization, LMI weight and the feedback law.
//! * [`simulation`]: Dormand-Prince integration of nominal and perturbed loops.
//! * [`cli`]: configuration, artifacts and the command implementations.

pub mod cli;
pub mod cone;
pub mod dilation;
pub mod error;
pub mod fixtures;
pub mod numerics;
pub mod parallel;
pub mod reproduce;
pub mod simulation;
pub mod synthesis;

pub use error::{Error, Result};
pub use numerics::{Matrix, Vector};
