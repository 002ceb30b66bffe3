//! The inductive variational autoencoder.
//!
//! The encoder reads a referent sample concatenated with the target class's
//! refined semantic vector and emits a Gaussian latent; the decoder maps the
//! latent plus the same semantic vector to a sample of the *target* class.

mod loss;
mod synth;
mod train;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnkernel::{prefixed, Activation, DenseLayer, GradTape, LayerRecord, Matrix, Mlp, Parameters};
use crate::rng::{seeded, standard_normal};

pub use loss::{
    boost_loss, boost_loss_with_grad, kl_grad, kl_loss, target_recon_loss, target_recon_grad, total_loss,
    LossBreakdown,
};
pub use synth::{synthesize, synthesize_class, SynthesizedClass, SynthesizedSet, SYNTH_CHUNK};
pub use train::{build_candidates, train, EpochLoss, TrainOutput, TrainingBatch};

/// Which semantic vectors form the softmax denominator of the boosting loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostCandidates {
    /// Every seen class (plus the target if it is not seen).
    AllSeen,
    /// Only the classes present in the current batch.
    BatchClasses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Weight of the boosting loss.
    pub lambda: f64,
    /// Softmax temperature of the boosting loss.
    pub tau: f64,
    /// Number of referent classes per target.
    pub top_k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub latent_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub seed: u64,
    pub normalize_features: bool,
    pub boost_candidates: BoostCandidates,
    /// Drop a seen target from its own referent list.
    pub exclude_self: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            tau: 0.07,
            top_k: 2,
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 100,
            latent_dim: 512,
            hidden_dims: vec![1024, 2048],
            seed: 0,
            normalize_features: false,
            boost_candidates: BoostCandidates::AllSeen,
            exclude_self: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return bad(format!("hidden_dims must be non-empty and positive, got {:?}", self.hidden_dims));
        }
        Ok(())
    }
}

/// Encoder trunk, the two latent heads, and the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvaeParameters {
    pub encoder: Mlp,
    pub mu_head: DenseLayer,
    pub log_var_head: DenseLayer,
    pub decoder: Mlp,
    pub feature_dim: usize,
    pub semantic_dim: usize,
    pub latent_dim: usize,
}

/// Posterior parameters and the reparameterized sample, one row per input.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub mu: Matrix,
    pub log_var: Matrix,
    pub noise: Matrix,
    pub sample: Matrix,
}

/// Everything a training step needs to backpropagate through one batch.
#[derive(Debug)]
pub(crate) struct ForwardTrace {
    encoder_tape: GradTape,
    mu_record: LayerRecord,
    log_var_record: LayerRecord,
    decoder_tape: GradTape,
    pub latent: LatentCode,
    pub output: Matrix,
}

impl IvaeParameters {
    /// Encoder: (d + s) → hidden… (ReLU) → two linear heads of width `latent_dim`.
    /// Decoder: (latent + s) → hidden… (ReLU) → d (linear).
    pub fn init<R: Rng + ?Sized>(
        feature_dim: usize,
        semantic_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if feature_dim == 0 || semantic_dim == 0 || latent_dim == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::Config(format!(
                "invalid IVAE shape: d={feature_dim}, s={semantic_dim}, latent={latent_dim}, hidden={hidden:?}"
            )));
        }
        let mut enc_widths = vec![feature_dim + semantic_dim];
        enc_widths.extend_from_slice(hidden);
        let encoder = Mlp::init_uniform(&enc_widths, Activation::Relu, Activation::Relu, rng);
        let last = *hidden.last().expect("non-empty hidden");
        let mu_head = DenseLayer::init_uniform(last, latent_dim, Activation::Identity, rng);
        let log_var_head = DenseLayer::init_uniform(last, latent_dim, Activation::Identity, rng);
        let mut dec_widths = vec![latent_dim + semantic_dim];
        dec_widths.extend_from_slice(hidden);
        dec_widths.push(feature_dim);
        let decoder = Mlp::init_uniform(&dec_widths, Activation::Relu, Activation::Identity, rng);
        Ok(Self {
            encoder,
            mu_head,
            log_var_head,
            decoder,
            feature_dim,
            semantic_dim,
            latent_dim,
        })
    }

    /// Initialization used by [`train`]: seeded from `config.seed`.
    pub fn init_for(feature_dim: usize, semantic_dim: usize, config: &TrainingConfig) -> Result<Self> {
        Self::init(
            feature_dim,
            semantic_dim,
            config.latent_dim,
            &config.hidden_dims,
            &mut seeded(config.seed),
        )
    }

    /// Checks that every layer is consistent with the recorded dimensions.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let hidden_out = self.encoder.out_dim();
        if self.encoder.in_dim() != self.feature_dim + self.semantic_dim {
            return fail(format!("encoder input {} != d + s", self.encoder.in_dim()));
        }
        for (name, head) in [("mu_head", &self.mu_head), ("log_var_head", &self.log_var_head)] {
            if head.in_dim() != hidden_out || head.out_dim() != self.latent_dim {
                return fail(format!("{name} is {}x{}", head.out_dim(), head.in_dim()));
            }
        }
        if self.decoder.in_dim() != self.latent_dim + self.semantic_dim || self.decoder.out_dim() != self.feature_dim {
            return fail(format!(
                "decoder maps {} -> {}",
                self.decoder.in_dim(),
                self.decoder.out_dim()
            ));
        }
        Mlp::new(self.encoder.layers.clone())?;
        Mlp::new(self.decoder.layers.clone())?;
        Ok(())
    }

    fn check_inputs(&self, x: &Matrix, z: &Matrix, what: &'static str) -> Result<()> {
        x.expect_shape(x.rows(), self.feature_dim, what)?;
        z.expect_shape(x.rows(), self.semantic_dim, what)?;
        Ok(())
    }

    /// Posterior parameters for referent rows `x_refer` conditioned on `z_target`.
    pub fn posterior(&self, x_refer: &Matrix, z_target: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check_inputs(x_refer, z_target, "encode")?;
        let h = self.encoder.forward(&Matrix::hstack(&[x_refer, z_target])?)?;
        let mu = self.mu_head.forward(&h)?;
        let log_var = self.log_var_head.forward(&h)?;
        mu.ensure_finite("encoder mean")?;
        log_var.ensure_finite("encoder log-variance")?;
        Ok((mu, log_var))
    }

    /// Encodes with the given standard-normal noise: `o = exp(log_var/2)·ε + μ`.
    pub fn encode_with_noise(&self, x_refer: &Matrix, z_target: &Matrix, noise: &Matrix) -> Result<LatentCode> {
        let (mu, log_var) = self.posterior(x_refer, z_target)?;
        noise.expect_shape(mu.rows(), self.latent_dim, "encode noise")?;
        let sample = reparameterize(&mu, &log_var, noise);
        sample.ensure_finite("latent sample")?;
        Ok(LatentCode {
            mu,
            log_var,
            noise: noise.clone(),
            sample,
        })
    }

    pub fn encode<R: Rng + ?Sized>(&self, x_refer: &Matrix, z_target: &Matrix, rng: &mut R) -> Result<LatentCode> {
        let noise = standard_normal_matrix(x_refer.rows(), self.latent_dim, rng);
        self.encode_with_noise(x_refer, z_target, &noise)
    }

    pub fn decode(&self, latent: &Matrix, z_target: &Matrix) -> Result<Matrix> {
        latent.expect_shape(latent.rows(), self.latent_dim, "decode")?;
        z_target.expect_shape(latent.rows(), self.semantic_dim, "decode")?;
        let out = self.decoder.forward(&Matrix::hstack(&[latent, z_target])?)?;
        out.ensure_finite("decoder output")?;
        Ok(out)
    }

    pub(crate) fn forward_trace(&self, x_refer: &Matrix, z_target: &Matrix, noise: &Matrix) -> Result<ForwardTrace> {
        self.check_inputs(x_refer, z_target, "ivae forward")?;
        noise.expect_shape(x_refer.rows(), self.latent_dim, "ivae forward noise")?;
        let (h, encoder_tape) = self.encoder.forward_tape(&Matrix::hstack(&[x_refer, z_target])?)?;
        let (mu, mu_record) = self.mu_head.forward_recorded(&h)?;
        let (log_var, log_var_record) = self.log_var_head.forward_recorded(&h)?;
        let sample = reparameterize(&mu, &log_var, noise);
        let (output, decoder_tape) = self.decoder.forward_tape(&Matrix::hstack(&[&sample, z_target])?)?;
        Ok(ForwardTrace {
            encoder_tape,
            mu_record,
            log_var_record,
            decoder_tape,
            latent: LatentCode {
                mu,
                log_var,
                noise: noise.clone(),
                sample,
            },
            output,
        })
    }

    /// Backpropagates ∂L/∂output plus direct loss terms on μ and log-variance.
    pub(crate) fn backward_trace(
        &self,
        trace: &ForwardTrace,
        grad_output: &Matrix,
        grad_mu_direct: &Matrix,
        grad_log_var_direct: &Matrix,
    ) -> Result<IvaeParameters> {
        let (decoder, grad_dec_in) = self.decoder.backward(&trace.decoder_tape, grad_output)?;
        let (grad_sample, _) = grad_dec_in.split_cols(self.latent_dim)?;
        let lc = &trace.latent;
        let grad_mu = grad_sample.add(grad_mu_direct)?;
        // ∂o/∂log_var = ε · exp(log_var/2) / 2
        let mut grad_log_var = grad_log_var_direct.clone();
        for ((g, (&gs, &eps)), &lv) in grad_log_var
            .as_mut_slice()
            .iter_mut()
            .zip(grad_sample.as_slice().iter().zip(lc.noise.as_slice()))
            .zip(lc.log_var.as_slice())
        {
            *g += gs * eps * 0.5 * libm::exp(0.5 * lv);
        }
        let (mu_head, gh_mu) = self.mu_head.backward(&trace.mu_record, &grad_mu)?;
        let (log_var_head, gh_lv) = self.log_var_head.backward(&trace.log_var_record, &grad_log_var)?;
        let (encoder, _) = self.encoder.backward(&trace.encoder_tape, &gh_mu.add(&gh_lv)?)?;
        Ok(IvaeParameters {
            encoder,
            mu_head,
            log_var_head,
            decoder,
            feature_dim: self.feature_dim,
            semantic_dim: self.semantic_dim,
            latent_dim: self.latent_dim,
        })
    }
}

impl Parameters for IvaeParameters {
    fn named_params(&self) -> Vec<(String, &[f64])> {
        let mut out = prefixed("encoder", self.encoder.named_params());
        out.extend(prefixed("mu_head", self.mu_head.named_params()));
        out.extend(prefixed("log_var_head", self.log_var_head.named_params()));
        out.extend(prefixed("decoder", self.decoder.named_params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.params_mut();
        out.extend(self.mu_head.params_mut());
        out.extend(self.log_var_head.params_mut());
        out.extend(self.decoder.params_mut());
        out
    }
}

pub fn reparameterize(mu: &Matrix, log_var: &Matrix, noise: &Matrix) -> Matrix {
    let mut o = mu.clone();
    for ((v, &lv), &e) in o.as_mut_slice().iter_mut().zip(log_var.as_slice()).zip(noise.as_slice()) {
        *v += libm::exp(0.5 * lv) * e;
    }
    o
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| standard_normal(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> IvaeParameters {
        IvaeParameters::init(4, 4, 3, &[6, 5], &mut seeded(seed)).unwrap()
    }

    #[test]
    fn zero_noise_sample_is_mean() {
        let p = small(1);
        let x = Matrix::filled(2, 4, 0.3);
        let z = Matrix::filled(2, 4, -0.2);
        let code = p.encode_with_noise(&x, &z, &Matrix::zeros(2, 3)).unwrap();
        assert_eq!(code.sample, code.mu);
    }

    #[test]
    fn zero_weights_give_standard_normal_latent() {
        let mut p = small(2);
        p.params_mut().into_iter().for_each(|s| s.fill(0.0));
        let x = Matrix::filled(1, 4, 1.0);
        let z = Matrix::filled(1, 4, 1.0);
        let eps = Matrix::from_rows(&[[0.5, -1.0, 2.0]]).unwrap();
        let code = p.encode_with_noise(&x, &z, &eps).unwrap();
        assert!(code.mu.as_slice().iter().all(|&v| v == 0.0));
        assert!(code.log_var.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(code.sample, eps);
        let out = p.decode(&code.sample, &z).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decode_is_deterministic() {
        let p = small(3);
        let o = Matrix::filled(2, 3, 0.4);
        let z = Matrix::filled(2, 4, 0.1);
        assert_eq!(p.decode(&o, &z).unwrap(), p.decode(&o, &z).unwrap());
    }

    #[test]
    fn shape_checks() {
        let p = small(4);
        p.validate().unwrap();
        assert!(p.decode(&Matrix::zeros(1, 2), &Matrix::zeros(1, 4)).is_err());
        assert!(p.posterior(&Matrix::zeros(1, 4), &Matrix::zeros(2, 4)).is_err());
        let mut broken = p.clone();
        broken.latent_dim = 5;
        assert!(broken.validate().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        let bad = [
            TrainingConfig { lambda: -1.0, ..Default::default() },
            TrainingConfig { tau: 0.0, ..Default::default() },
            TrainingConfig { batch_size: 0, ..Default::default() },
            TrainingConfig { hidden_dims: vec![], ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }
}
