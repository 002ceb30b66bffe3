use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Mode;
use crate::dataset::Partition;
use crate::error::{Error, Result};
use crate::nnkernel::{Activation, AdamConfig, AdamState, DenseLayer, Matrix};
use crate::rng::{derived, seeded};
use crate::ClassId;

const SHUFFLE_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight each sample by `N / (C · n_class)` so every class contributes equally.
    pub balance_classes: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 128,
            seed: 0,
            balance_classes: false,
        }
    }
}

/// Linear softmax classifier over an ordered set of class ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub layer: DenseLayer,
    pub class_ids: Vec<ClassId>,
    pub mode: Mode,
}

impl Classifier {
    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        self.layer.forward(features)
    }

    /// Arg-max class per row; ties go to the earlier class id.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<ClassId>> {
        let logits = self.logits(features)?;
        Ok(logits
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                self.class_ids[best]
            })
            .collect())
    }
}

/// Multinomial logistic regression trained with Adam on cross-entropy.
///
/// `classes` fixes the output order; every class must have at least one
/// training sample and every label must be one of `classes`.
pub fn train_classifier(
    data: &Partition,
    classes: &[ClassId],
    mode: Mode,
    config: &ClassifierConfig,
) -> Result<Classifier> {
    if config.batch_size == 0 {
        return Err(Error::Config("classifier batch_size must be at least 1".into()));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Config(format!("classifier learning_rate {} is invalid", config.learning_rate)));
    }
    let mut class_ids = classes.to_vec();
    class_ids.sort_unstable();
    class_ids.dedup();
    if class_ids.len() != classes.len() || class_ids.is_empty() {
        return Err(Error::Data(format!("classifier classes must be distinct and non-empty, got {classes:?}")));
    }
    let position: BTreeMap<ClassId, usize> = class_ids.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut counts = vec![0usize; class_ids.len()];
    let mut targets = Vec::with_capacity(data.len());
    for &l in &data.labels {
        let &p = position
            .get(&l)
            .ok_or_else(|| Error::Data(format!("training label {l} is not a classifier class")))?;
        counts[p] += 1;
        targets.push(p);
    }
    if let Some(i) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Data(format!("class {} has no training samples", class_ids[i])));
    }
    data.features.ensure_finite("classifier training features")?;

    let d = data.features.cols();
    let c = class_ids.len();
    let layer = DenseLayer::init_uniform(d, c, Activation::Identity, &mut seeded(config.seed));
    let mut clf = Classifier { layer, class_ids, mode };
    let weights: Vec<f64> = if config.balance_classes {
        let n = data.len() as f64;
        counts.iter().map(|&k| n / (c as f64 * k as f64)).collect()
    } else {
        vec![1.0; c]
    };

    let mut adam = AdamState::new(&clf.layer, AdamConfig::with_lr(config.learning_rate));
    let mut rng = derived(config.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let x = data.features.select_rows(chunk);
            let (logits, record) = clf.layer.forward_recorded(&x)?;
            let mut grad = Matrix::zeros(chunk.len(), c);
            let scale = 1.0 / chunk.len() as f64;
            for (r, &i) in chunk.iter().enumerate() {
                let t = targets[i];
                let row = logits.row(r);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|&v| libm::exp(v - max)).collect();
                let z: f64 = exps.iter().sum();
                let w = weights[t] * scale;
                for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
                    let onehot = if j == t { 1.0 } else { 0.0 };
                    *g = w * (exps[j] / z - onehot);
                }
            }
            let (grads, _) = clf.layer.backward(&record, &grad)?;
            adam.step(&mut clf.layer, &grads)?;
        }
    }
    Ok(clf)
}
