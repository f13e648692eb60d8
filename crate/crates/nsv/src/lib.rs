//! Simulator for an incompressible viscous fluid coupled to a dilute particle
//! phase through linear drag.
//!
//! The fluid obeys the incompressible Navier-Stokes equations on a 2-D
//! rectangle and feels the particles through the drag force
//! `F(x) = ∫ (v - u(x)) f(x,v) dv`. The particle distribution f is transported
//! in phase space, each particle relaxing toward the local fluid velocity at
//! unit rate, and reflects specularly off solid walls. Two kinetic backends
//! share this contract: a weighted particle ensemble and a tensor-product
//! phase-space grid advanced semi-Lagrangially.
//!
//! Beyond time stepping, the crate carries the analytical structure of the
//! system as executable checks:
//!
//! * energy: d/dt [ ∫ ½|u|² + ∫∫ f (1+|v|²) ] = -( ∫|∇u|² + ∫∫ f|u-v|² ),
//!   tracked step by step in a ledger of [`coupling::LedgerRow`]s;
//! * an L^p maximum principle for f with growth rate e^{2t} in 2-D;
//! * velocity-moment interpolation bounds and mass conservation;
//! * continuous dependence on initial data (the 2-D uniqueness surrogate);
//! * a spectral (Stokes-eigenmode) discretization with a drag-truncation
//!   parameter λ and a Picard fixed-point loop, mirroring the constructive
//!   existence argument for the coupled system.
//!
//! Determinism: with `threads = 1` and a fixed seed every run is
//! bit-reproducible; parallel stages are pure maps so results do not depend
//! on worker count. All randomness flows from a single seeded ChaCha stream.
//!
//! Fail loudly: constructors validate their inputs, solvers return typed
//! errors instead of clamping, and a NaN anywhere in the state aborts the run
//! with a final snapshot rather than silently continuing.

pub mod config;
pub mod coupling;
pub mod error;
pub mod field;
pub mod fluid;
pub mod galerkin;
pub mod grid;
pub mod io;
pub mod kinetic;
pub mod particles;
pub mod phase;
pub mod verify;

pub mod cli;

pub use error::{Error, Result};
