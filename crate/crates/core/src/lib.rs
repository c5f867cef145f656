//! Spectral construction of steady solutions to the low-Mach compressible
//! heat-conductive Navier-Stokes system on the periodic box, with the
//! incompressible/compressible splitting solved by fixed-point iteration.
//!
//! The crate is `no_std` (with `alloc`): all state lives in plain coefficient
//! tables and every solver is a pure function, so the library embeds anywhere
//! and is trivially thread-safe. IO, the CLI, and file formats live in the
//! companion `lowmach-cli` crate.
//!
//! Module map:
//! - [`spectral`]: transforms, derivatives, dealiased products, Sobolev norms
//! - [`fields`]: parameters, state models, residual evaluators
//! - [`incompressible`]: advected Stokes and steady incompressible solves
//! - [`compressible`]: the stiff linearized compressible solve and its
//!   energy-form diagnostics
//! - [`fixed_point`]: the outer splitting iteration
//! - [`sweep`]: Mach-number sweeps and convergence-rate fits
//! - [`probe`], [`check`]: seeded randomized diagnostics and the runtime
//!   invariant suite

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod check;
pub mod compressible;
pub mod fields;
pub mod fixed_point;
pub mod incompressible;
pub mod probe;
pub mod spectral;
pub mod sweep;

pub use num_complex::Complex64;
