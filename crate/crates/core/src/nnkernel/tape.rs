use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::dense::{Activation, DenseLayer, LayerRecord};
use super::matrix::Matrix;
use super::{prefixed, Parameters};
use crate::error::{Error, Result};

/// A stack of dense layers applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Forward intermediates of one [`Mlp`] pass, enough to compute exact
/// gradients for every layer and for the input.
#[derive(Debug, Clone)]
pub struct GradTape {
    records: Vec<LayerRecord>,
    shapes: Vec<(usize, usize)>,
}

impl GradTape {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape {
                    op: "Mlp::new",
                    expected: format!("layer {} input of width {}", i + 1, pair[0].out_dim()),
                    actual: format!("{}", pair[1].in_dim()),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Layers of the given widths; `hidden` activation on every layer but the
    /// last, which uses `last`.
    pub fn init_uniform<R: rand::Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        last: Activation,
        rng: &mut R,
    ) -> Self {
        let n = widths.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { last } else { hidden };
                DenseLayer::init_uniform(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::out_dim)
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward_tape(&self, input: &Matrix) -> Result<(Matrix, GradTape)> {
        let mut records = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, rec) = layer.forward_recorded(&x)?;
            records.push(rec);
            x = y;
        }
        let shapes = self.layers.iter().map(|l| l.weight.shape()).collect();
        Ok((x, GradTape { records, shapes }))
    }

    /// Reverse pass. `grad_out` is ∂L/∂output; returns gradients shaped like
    /// `self` and ∂L/∂input.
    pub fn backward(&self, tape: &GradTape, grad_out: &Matrix) -> Result<(Mlp, Matrix)> {
        if tape.records.len() != self.layers.len() {
            return Err(Error::TapeMismatch(format!(
                "tape has {} layers, network has {}",
                tape.records.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, shape)) in self.layers.iter().zip(&tape.shapes).enumerate() {
            if layer.weight.shape() != *shape {
                return Err(Error::TapeMismatch(format!(
                    "layer {i} recorded as {}x{}, network has {}x{}",
                    shape.0,
                    shape.1,
                    layer.out_dim(),
                    layer.in_dim()
                )));
            }
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (layer, rec) in self.layers.iter().zip(&tape.records).rev() {
            let (lg, gi) = layer.backward(rec, &g)?;
            grads.push(lg);
            g = gi;
        }
        grads.reverse();
        Ok((Mlp { layers: grads }, g))
    }

    /// Backward pass for the scalar loss `seed · Σ outputs`.
    pub fn backward_seed(&self, tape: &GradTape, seed: f64) -> Result<(Mlp, Matrix)> {
        let rows = tape.records.first().map_or(0, |r| r.pre_activation.rows());
        self.backward(tape, &Matrix::filled(rows, self.out_dim(), seed))
    }
}

impl Parameters for Mlp {
    fn named_params(&self) -> Vec<(String, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("layers.{i}"), l.named_params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;

    #[test]
    fn linear_gradient_is_summed_input() {
        let mut rng = seeded(3);
        let layer = DenseLayer::init_uniform(3, 2, Activation::Identity, &mut rng);
        let net = Mlp::new(vec![layer]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]]).unwrap();
        let (_, tape) = net.forward_tape(&x).unwrap();
        let (grads, gin) = net.backward_seed(&tape, 1.0).unwrap();
        for o in 0..2 {
            assert_eq!(grads.layers[0].weight.row(o), &[0.0, 2.5, 7.0]);
        }
        assert_eq!(grads.layers[0].bias, vec![2.0, 2.0]);
        // ∂Σy/∂x = column sums of W
        for b in 0..2 {
            for i in 0..3 {
                let w = net.layers[0].weight.get(0, i) + net.layers[0].weight.get(1, i);
                assert!((gin.get(b, i) - w).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_seed_gives_zero_gradients() {
        let mut rng = seeded(5);
        let net = Mlp::init_uniform(&[4, 6, 3], Activation::Relu, Activation::Identity, &mut rng);
        let x = Matrix::filled(2, 4, 0.3);
        let (_, tape) = net.forward_tape(&x).unwrap();
        let (grads, gin) = net.backward_seed(&tape, 0.0).unwrap();
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
        assert!(gin.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mismatched_tape_is_rejected() {
        let mut rng = seeded(9);
        let small = Mlp::init_uniform(&[4, 3], Activation::Relu, Activation::Identity, &mut rng);
        let big = Mlp::init_uniform(&[4, 5, 3], Activation::Relu, Activation::Identity, &mut rng);
        let other = Mlp::init_uniform(&[4, 2], Activation::Relu, Activation::Identity, &mut rng);
        let (_, tape) = small.forward_tape(&Matrix::zeros(1, 4)).unwrap();
        assert!(matches!(big.backward_seed(&tape, 1.0), Err(Error::TapeMismatch(_))));
        assert!(matches!(other.backward_seed(&tape, 1.0), Err(Error::TapeMismatch(_))));
    }

    #[test]
    fn mismatched_widths_rejected() {
        let a = DenseLayer::zeros(3, 4, Activation::Relu);
        let b = DenseLayer::zeros(5, 2, Activation::Identity);
        assert!(Mlp::new(vec![a, b]).is_err());
    }
}
