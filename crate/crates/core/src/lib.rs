//! Kinetic-fluid simulation laboratory.
//!
//! A cloud of weighted particles exchanges momentum with an incompressible
//! viscous fluid through a Brinkman drag force `F = j - rho * u`; the fluid is
//! advanced pseudo-spectrally on a periodic box and the particles by exact
//! exponential drag pushes along characteristics.  On top of the solver sits a
//! diagnostics layer (energy/dissipation bookkeeping, decay-rate fits,
//! low-frequency splitting probes, Gronwall-type verifiers) aimed at measuring
//! long-time decay of the coupled system.
//!
//! Module layout:
//! - [`spectral`]: periodic grid, Fourier/real fields, transforms, projections.
//! - [`fluid`]: Navier-Stokes time step and heat-flow baseline.
//! - [`kinetic`]: particle ensemble, pushes, deposition, backward flow maps.
//! - [`coupling`]: Brinkman force assembly and the split system step.
//! - [`diagnostics`]: per-sample records, functionals, probes, fits.
//! - [`bootstrap`]: decay-exponent recursion and the Gronwall lemma checker.
//! - [`config`] / [`run`]: run configuration, presets, orchestration, CSV/IO.

// Component math throughout indexes fixed-size axis arrays; iterator
// rewrites of those loops read worse, not better.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod bootstrap;
pub mod config;
pub mod coupling;
pub mod diagnostics;
pub mod fluid;
pub mod kinetic;
pub mod run;
pub mod spectral;
pub mod testkit;

pub use error::{Error, Result};
