use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{boost_loss_with_grad, kl_grad, kl_loss, target_recon_grad, target_recon_loss, LossBreakdown};
use super::{standard_normal_matrix, BoostCandidates, IvaeParameters, TrainingConfig};
use crate::dataset::{ClassPools, DatasetSplits};
use crate::error::{shape_err, Error, Result};
use crate::nnkernel::{AdamConfig, AdamState, Matrix};
use crate::rng::derived;
use crate::semantics::{mixup_referents, ClassSemanticMatrix, ReferentIndex};
use crate::ClassId;

/// Stream used for batching, mixup and noise; class ids (u32) never reach it.
const TRAIN_STREAM: u64 = u64::MAX - 1;

/// One minibatch: referent inputs, the real target-class samples they should
/// be mapped to, the target semantics, and the boosting candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub x_refer: Matrix,
    pub x_target: Matrix,
    pub z_target: Matrix,
    /// Row of `candidates` holding each target's semantic vector.
    pub target_index: Vec<usize>,
    pub candidates: Matrix,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.x_refer.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self) -> Result<()> {
        let b = self.x_refer.rows();
        self.x_target.expect_shape(b, self.x_refer.cols(), "training batch target")?;
        self.z_target.expect_shape(b, self.candidates.cols(), "training batch semantics")?;
        if self.target_index.len() != b {
            return Err(shape_err(
                "training batch",
                format!("{b} target indices"),
                format!("{}", self.target_index.len()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Batch-mean losses over the epoch.
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub params: IvaeParameters,
    /// Loss of the untrained model on the first batch.
    pub initial: LossBreakdown,
    pub history: Vec<EpochLoss>,
    pub steps: u64,
}

impl IvaeParameters {
    pub fn loss(&self, batch: &TrainingBatch, noise: &Matrix, lambda: f64, tau: f64) -> Result<LossBreakdown> {
        batch.check()?;
        let code = self.encode_with_noise(&batch.x_refer, &batch.z_target, noise)?;
        let out = self.decode(&code.sample, &batch.z_target)?;
        let kl = kl_loss(&code.mu, &code.log_var)?;
        let recon = target_recon_loss(&out, &batch.x_target)?;
        let boost = super::loss::boost_loss(&out, &batch.target_index, &batch.candidates, tau)?;
        Ok(LossBreakdown::new(kl, recon, boost, lambda))
    }

    /// Loss and the gradient of its `total` with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        batch: &TrainingBatch,
        noise: &Matrix,
        lambda: f64,
        tau: f64,
    ) -> Result<(LossBreakdown, IvaeParameters)> {
        batch.check()?;
        let trace = self.forward_trace(&batch.x_refer, &batch.z_target, noise)?;
        let code = &trace.latent;
        let kl = kl_loss(&code.mu, &code.log_var)?;
        let recon = target_recon_loss(&trace.output, &batch.x_target)?;
        let (boost, g_boost) = boost_loss_with_grad(&trace.output, &batch.target_index, &batch.candidates, tau)?;
        let breakdown = LossBreakdown::new(kl, recon, boost, lambda);
        if !breakdown.is_finite() {
            return Err(Error::NonFinite(format!("loss {breakdown:?}")));
        }
        let g_out = target_recon_grad(&trace.output, &batch.x_target)?.add(&g_boost.scale(lambda))?;
        let (g_mu, g_lv) = kl_grad(&code.mu, &code.log_var)?;
        let grads = self.backward_trace(&trace, &g_out, &g_mu, &g_lv)?;
        Ok((breakdown, grads))
    }
}

/// Semantic rows forming the boosting softmax, and the row of each label.
pub fn build_candidates(
    semantics: &ClassSemanticMatrix,
    seen: &[ClassId],
    labels: &[ClassId],
    mode: BoostCandidates,
) -> Result<(Matrix, Vec<usize>)> {
    let ids: Vec<ClassId> = match mode {
        BoostCandidates::AllSeen => {
            let mut set: BTreeSet<ClassId> = seen.iter().copied().collect();
            set.extend(labels.iter().copied());
            set.into_iter().collect()
        }
        BoostCandidates::BatchClasses => labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect(),
    };
    let rows = semantics.active_rows(&ids)?;
    let index = labels
        .iter()
        .map(|l| ids.binary_search(l).expect("label is a candidate"))
        .collect();
    Ok((rows, index))
}

/// Trains the generator on seen-class data only.
///
/// Each training sample acts as a target: its class's referents supply the
/// mixup input and the sample itself is the reconstruction target. The
/// parameters are initialized from `config.seed`; a separate stream of the
/// same seed drives shuffling, mixup, and the reparameterization noise.
pub fn train(
    splits: &DatasetSplits,
    semantics: &ClassSemanticMatrix,
    index: &ReferentIndex,
    config: &TrainingConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    let data = &splits.seen_train;
    if data.is_empty() {
        return Err(Error::Data("no seen training samples".into()));
    }
    for &c in &splits.seen_classes {
        if index.referents(c).is_none() {
            return Err(Error::Parameter(format!("seen class {c} is missing from the referent index")));
        }
    }
    if semantics.dim() != splits.feature_dim {
        return Err(Error::Config(format!(
            "the boosting loss compares features with semantics, but d = {} and s = {}",
            splits.feature_dim,
            semantics.dim()
        )));
    }
    let pools = ClassPools::from_partition(data)?;
    let mut params = IvaeParameters::init_for(splits.feature_dim, semantics.dim(), config)?;
    let mut rng = derived(config.seed, TRAIN_STREAM);
    let mut adam = AdamState::new(&params, AdamConfig::with_lr(config.learning_rate));

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut initial = None;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = assemble(
                chunk,
                &data.labels,
                &data.features,
                semantics,
                &splits.seen_classes,
                index,
                &pools,
                config,
                &mut rng,
            )?;
            let noise = standard_normal_matrix(batch.len(), config.latent_dim, &mut rng);
            let (loss, grads) = match params.loss_and_grad(&batch, &noise, config.lambda, config.tau) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, batch: bi }),
                Err(e) => return Err(e),
            };
            initial.get_or_insert(loss);
            match adam.step(&mut params, &grads) {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, batch: bi }),
                Err(e) => return Err(e),
            }
            sums[0] += loss.kl;
            sums[1] += loss.target_recon;
            sums[2] += loss.boost;
            sums[3] += loss.total;
            batches += 1;
        }
        let n = batches as f64;
        history.push(EpochLoss {
            epoch,
            loss: LossBreakdown {
                kl: sums[0] / n,
                target_recon: sums[1] / n,
                boost: sums[2] / n,
                total: sums[3] / n,
            },
        });
    }
    let initial = match initial {
        Some(l) => l,
        None => {
            let chunk: Vec<usize> = order.iter().copied().take(config.batch_size).collect();
            let batch = assemble(
                &chunk,
                &data.labels,
                &data.features,
                semantics,
                &splits.seen_classes,
                index,
                &pools,
                config,
                &mut rng,
            )?;
            let noise = standard_normal_matrix(batch.len(), config.latent_dim, &mut rng);
            params.loss(&batch, &noise, config.lambda, config.tau)?
        }
    };
    Ok(TrainOutput {
        params,
        initial,
        history,
        steps: adam.step_count(),
    })
}

#[allow(clippy::too_many_arguments)]
fn assemble<R: Rng + ?Sized>(
    rows: &[usize],
    labels: &[ClassId],
    features: &Matrix,
    semantics: &ClassSemanticMatrix,
    seen: &[ClassId],
    index: &ReferentIndex,
    pools: &ClassPools<'_>,
    config: &TrainingConfig,
    rng: &mut R,
) -> Result<TrainingBatch> {
    let batch_labels: Vec<ClassId> = rows.iter().map(|&i| labels[i]).collect();
    let mut refer = Vec::with_capacity(rows.len() * features.cols());
    for &c in &batch_labels {
        refer.extend(mixup_referents(index, pools, c, rng)?);
    }
    let x_refer = Matrix::from_vec(rows.len(), features.cols(), refer)?;
    let x_target = features.select_rows(rows);
    let z_target = semantics.active_rows(&batch_labels)?;
    let (candidates, target_index) = build_candidates(semantics, seen, &batch_labels, config.boost_candidates)?;
    Ok(TrainingBatch {
        x_refer,
        x_target,
        z_target,
        target_index,
        candidates,
    })
}
