//! Height functions on finite regions of `Z^m` perturbed by a random
//! potential on the edges of `Z`.
//!
//! The crate covers the whole pipeline: region geometry ([`lattice`]),
//! height functions and their extension sets ([`heights`]), the random
//! potential ([`potential`]), quenched and annealed Gibbs measures
//! ([`gibbs`]), exact and Glauber sampling ([`sampler`]), and the
//! verification engines for stochastic dominance, martingale differences
//! and concentration ([`analysis`]). Text formats shared with the command
//! line live in [`formats`].

pub mod analysis;
pub mod error;
pub mod formats;
pub mod gibbs;
pub mod heights;
pub mod lattice;
pub mod potential;
pub mod rng;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
pub use heights::{ExtensionSet, HeightFunction, Pinning};
pub use lattice::{Region, Vertex};
pub use potential::{ModelKind, Potential, PotentialModel};
