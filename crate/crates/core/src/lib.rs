//! Charging dynamics of stack-electrode supercapacitors.
//!
//! The crate offers three descriptions of the same cell: a finite-volume
//! Poisson-Nernst-Planck solver ([`pnp`]), the equivalent-circuit ODE system
//! for the zeta potentials of every diffuse layer ([`circuit`]) and the
//! leading-order composite fields rebuilt from it ([`mae`]). [`timescale`]
//! extracts charging times from the linearized circuit and [`analysis`] fits
//! relaxation curves.

pub mod analysis;
pub mod circuit;
pub mod edl;
pub mod error;
pub mod linalg;
pub mod mae;
pub mod ode;
pub mod params;
pub mod pnp;
pub mod timescale;

pub use error::{Error, Result};
pub use params::{DriveSpec, ElectrolyteSpec, PhysicalInputs, Scales, StackGeometry};
