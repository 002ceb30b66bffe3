//! Dense numerical kernel: matrices, fully connected layers with exact
//! backward passes, Adam, and a Jacobi symmetric eigensolver.

mod adam;
mod dense;
mod eigen;
mod matrix;
mod tape;

use alloc::string::String;
use alloc::vec::Vec;

pub use adam::{AdamConfig, AdamState};
pub use dense::{Activation, DenseLayer, LayerRecord};
pub use eigen::{symmetric_eigen, SymmetricEigen, EIGEN_MAX_SWEEPS, EIGEN_TOLERANCE};
pub use matrix::{axpy, dot, norm, Matrix};
pub use tape::{GradTape, Mlp};

/// A bundle of trainable tensors. Gradients are represented by a value of the
/// same type, so `named_params` of a gradient lines up with `params_mut` of the
/// model it was computed for.
pub trait Parameters {
    fn named_params(&self) -> Vec<(String, &[f64])>;

    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    /// All parameters flattened in visiting order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, p) in self.named_params() {
            out.extend_from_slice(p);
        }
        out
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, inner: Vec<(String, &'a [f64])>) -> Vec<(String, &'a [f64])> {
    inner
        .into_iter()
        .map(|(n, p)| (alloc::format!("{prefix}.{n}"), p))
        .collect()
}
