//! Sparse mean estimation for product distributions on the hypercube under
//! per-user bit budgets, with noninteractive and interactive protocols,
//! one-bit compressed sensing, and exact checks of the lower-bound
//! ingredients.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod error;
pub mod harness;
pub mod interactive;
pub mod model;
pub mod noninteractive;
pub mod rng;
pub mod sensing;
pub mod verify;

pub use error::{Error, Result};
pub use model::{MeanVector, ProductDistribution, ProductSource, SampleSource, Stage};
pub use rng::PublicRandomness;
