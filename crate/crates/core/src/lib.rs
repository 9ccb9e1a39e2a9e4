//! Simulation and estimation toolkit for biased random walks among iid
//! random conductances on the lattice `Z^d`.
//!
//! The crate is organized around a lazily evaluated conductance field
//! ([`env::ConductanceField`]), the tilted walk kernel built on top of it
//! ([`kernel::BiasedKernel`]), and a set of analysis layers:
//!
//! * [`coupling`] — shared-uniform couplings across biases/environments,
//!   the auxiliary drift walk and super-regeneration detection,
//! * [`regen`] — hyperplane hitting times, fresh epochs, regenerations and
//!   ladder/dead-end decompositions,
//! * [`traps`] — two-dimensional open-cluster geometry (good points, traps,
//!   dead ends) for the two-point environment,
//! * [`network`] — effective conductances on finite boxes, cut-set bounds
//!   and heat-kernel checks,
//! * [`estimate`] — velocity estimators, the covariance form of the speed
//!   derivative, likelihood-ratio reweighting and drift-sum diagnostics.
//!
//! Everything is deterministic given seeds: randomness comes from
//! counter-based streams ([`rng`]), so results are independent of thread
//! scheduling and reproducible across processes. The crate is `no_std`
//! compatible (`alloc` required); disable the default `std` feature for
//! embedded use.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod coupling;
pub mod env;
pub mod error;
pub mod estimate;
pub mod kernel;
pub mod lattice;
pub mod network;
pub mod regen;
pub mod rng;
pub mod stats;
pub mod traps;

pub use env::{ConductanceField, Conductances, EnvironmentLaw, Marginal, OverlayField};
pub use error::{LawError, NetworkError, RegenError, WalkError};
pub use kernel::{BiasedKernel, StepDistribution, WalkPath};
pub use lattice::{Direction, Edge, LatticePoint};
