//! Adversarial generation of Restricted Boltzmann Machines.
//!
//! The crate implements the full pipeline: CD-1 pre-training of an RBM
//! population, a weight-space GAN trained on the flattened weight matrices,
//! validation-driven generator selection, sampling of artificial RBMs, and
//! evaluation on image reconstruction and majority-voting classification.

pub mod dataio;
pub mod ensemble;
pub mod error;
pub mod gan;
pub mod numerics;
pub mod pipeline;
pub mod rbm;
pub mod stats;

pub use error::{Error, Result};
