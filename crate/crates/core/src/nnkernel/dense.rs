use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, Matrix};
use super::Parameters;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Fully connected layer `activation(x · Wᵀ + b)` with `W` stored out×in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// What a forward pass through one layer must keep for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerRecord {
    pub(crate) input: Matrix,
    pub(crate) pre_activation: Matrix,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(shape_err(
                "DenseLayer::new",
                format!("bias of length {}", weight.rows()),
                format!("{}", bias.len()),
            ));
        }
        Ok(Self { weight, bias, activation })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Uniform(−1/√fan_in, 1/√fan_in) for weights and bias.
    pub fn init_uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(in_dim.max(1) as f64);
        let weight = Matrix::from_fn(out_dim, in_dim, |_, _| rng.random_range(-bound..bound));
        let bias = (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Self { weight, bias, activation }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn pre_activation(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_dim() {
            return Err(shape_err(
                "dense_forward",
                format!("input with {} columns", self.in_dim()),
                format!("{}x{}", input.rows(), input.cols()),
            ));
        }
        let mut pre = input.matmul_t(&self.weight)?;
        for i in 0..pre.rows() {
            pre.row_mut(i).iter_mut().zip(&self.bias).for_each(|(v, b)| *v += b);
        }
        Ok(pre)
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let act = self.activation;
        Ok(self.pre_activation(input)?.map(|v| act.apply(v)))
    }

    pub fn forward_recorded(&self, input: &Matrix) -> Result<(Matrix, LayerRecord)> {
        let pre = self.pre_activation(input)?;
        let act = self.activation;
        let out = pre.map(|v| act.apply(v));
        Ok((
            out,
            LayerRecord {
                input: input.clone(),
                pre_activation: pre,
            },
        ))
    }

    /// Given ∂L/∂output, returns (parameter gradients shaped like `self`, ∂L/∂input).
    pub fn backward(&self, record: &LayerRecord, grad_out: &Matrix) -> Result<(DenseLayer, Matrix)> {
        grad_out.expect_shape(record.pre_activation.rows(), self.out_dim(), "dense_backward")?;
        let act = self.activation;
        let mut delta = grad_out.clone();
        if act != Activation::Identity {
            delta
                .as_mut_slice()
                .iter_mut()
                .zip(record.pre_activation.as_slice())
                .for_each(|(g, &p)| *g *= act.derivative(p));
        }
        let grad_weight = delta.t_matmul(&record.input)?;
        let mut grad_bias = vec![0.0; self.out_dim()];
        for row in delta.row_iter() {
            axpy(1.0, row, &mut grad_bias);
        }
        let grad_input = delta.matmul(&self.weight)?;
        Ok((
            DenseLayer {
                weight: grad_weight,
                bias: grad_bias,
                activation: act,
            },
            grad_input,
        ))
    }
}

impl Parameters for DenseLayer {
    fn named_params(&self) -> Vec<(String, &[f64])> {
        vec![
            (String::from("weight"), self.weight.as_slice()),
            (String::from("bias"), self.bias.as_slice()),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), self.bias.as_mut_slice()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer::new(Matrix::identity(3), vec![0.0; 3], Activation::Identity).unwrap();
        let x = Matrix::from_rows(&[[1.5, -2.0, 0.25]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn relu_clamps_negative_pre_activations() {
        let layer = DenseLayer::new(Matrix::identity(3), vec![0.0; 3], Activation::Relu).unwrap();
        let x = Matrix::from_rows(&[[-1.0, 0.0, 2.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().row(0), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn forward_matches_hand_rolled_matmul() {
        let mut rng = seeded(11);
        let layer = DenseLayer::init_uniform(4, 3, Activation::Identity, &mut rng);
        let x = Matrix::from_fn(2, 4, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.7);
        let y = layer.forward(&x).unwrap();
        for b in 0..2 {
            for o in 0..3 {
                let mut s = layer.bias[o];
                for i in 0..4 {
                    s += x.get(b, i) * layer.weight.get(o, i);
                }
                assert!((y.get(b, o) - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let layer = DenseLayer::zeros(4, 2, Activation::Relu);
        assert!(layer.forward(&Matrix::zeros(1, 3)).is_err());
        assert!(DenseLayer::new(Matrix::zeros(2, 2), vec![0.0], Activation::Identity).is_err());
    }
}
