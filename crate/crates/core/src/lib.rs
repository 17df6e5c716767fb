//! Differentiable discrete-element simulation of confined 2D granular
//! crystals with per-particle stiffness, and the inverse-design machinery
//! built on it.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs; file formats, the CLI and thread-level
//! parallelism live in the `granular` companion crate.
//!
//! Module map:
//!
//! - [`physics`]: Hertzian pair and wall potentials, forces, dissipation, energy.
//! - [`packing`]: hexagonal lattices, FIRE relaxation, the compression protocol.
//! - [`sim`]: velocity Verlet integration with kinematic drives and probes.
//! - [`adjoint`]: checkpointed discrete adjoint of [`sim`] with respect to stiffness.
//! - [`loss`], [`experiment`], [`optim`], [`stats`]: losses, datasets and optimizers.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod adjoint;
mod error;
pub mod experiment;
pub mod loss;
mod math;
pub mod neighbors;
pub mod optim;
pub mod packing;
pub mod physics;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
pub use math::Vec2;
