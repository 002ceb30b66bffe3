//! Core numerics for generative zero-shot learning with an inductive
//! variational autoencoder.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation: dense kernels with hand-written backward passes, class
//! semantic refinement, referent selection, the IVAE itself, and the
//! classifier/metric harness. File formats, threading and the command line
//! live in the `indzsl` companion crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod error;
pub mod eval;
pub mod ivae;
pub mod nnkernel;
pub mod rng;
pub mod semantics;

pub use error::{Error, Result};

/// Identifier of a class, shared by features, semantics and split files.
pub type ClassId = u32;
