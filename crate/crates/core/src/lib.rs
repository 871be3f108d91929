//! Numerical laboratory for the geometry of contrastive representation learning.
//!
//! The crate covers InfoNCE losses and their large-batch energy limits, Gibbs
//! equilibria of the intrinsic free energy on spheres, a particle surrogate for
//! those equilibria, and the multimodal gap that appears when two modalities
//! observe misaligned latents. Everything random takes an explicit [`rng::Prng`].

pub mod data;
pub mod diagnostics;
pub mod energies;
mod error;
pub mod experiments;
pub mod grad;
pub mod intrinsic;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod losses;
pub mod manifold;
pub mod particles;
pub mod rng;

pub use error::{Error, Result};
