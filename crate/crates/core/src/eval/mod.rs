//! Softmax classifier over real and synthesized features, and the CZSL/GZSL
//! metrics.

mod classifier;
mod metrics;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSplits, Partition};
use crate::error::{Error, Result};
use crate::ivae::SynthesizedSet;

pub use classifier::{train_classifier, Classifier, ClassifierConfig};
pub use metrics::{harmonic_mean, per_class_accuracy, ClassAccuracy, PerClassAccuracy};

/// Conventional ZSL (unseen label space only) or generalized ZSL (seen ∪ unseen).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Czsl,
    Gzsl,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Czsl => "czsl",
            Mode::Gzsl => "gzsl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SampleCounts {
    pub train_real: usize,
    pub train_synthesized: usize,
    pub test_seen: usize,
    pub test_unseen: usize,
}

/// Accuracies are fractions in [0, 1]. `acc` is set in CZSL mode; `unseen`,
/// `seen` and `harmonic` in GZSL mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub acc: Option<f64>,
    pub unseen: Option<f64>,
    pub seen: Option<f64>,
    pub harmonic: Option<f64>,
    pub per_class: Vec<ClassAccuracy>,
    pub counts: SampleCounts,
}

impl EvalReport {
    /// The headline number: acc in CZSL, H in GZSL.
    pub fn headline(&self) -> f64 {
        match self.mode {
            Mode::Czsl => self.acc.unwrap_or(0.0),
            Mode::Gzsl => self.harmonic.unwrap_or(0.0),
        }
    }
}

/// Per-class top-1 accuracy of `classifier` on a labelled feature set.
pub fn per_class_top1(classifier: &Classifier, data: &Partition) -> Result<PerClassAccuracy> {
    let predicted = classifier.predict(&data.features)?;
    per_class_accuracy(&predicted, &data.labels, &classifier.class_ids)
}

/// Classifier training data: synthesized unseen features, plus real seen
/// training features in GZSL.
pub fn build_training_set(splits: &DatasetSplits, synthesized: &SynthesizedSet, mode: Mode) -> Result<Partition> {
    let synth = synthesized.to_partition(splits.feature_dim)?;
    match mode {
        Mode::Czsl => Ok(synth),
        Mode::Gzsl => splits.seen_train.concat(&synth),
    }
}

/// Label space of the classifier for `mode`.
pub fn mode_classes(splits: &DatasetSplits, mode: Mode) -> Vec<crate::ClassId> {
    match mode {
        Mode::Czsl => splits.unseen_classes.clone(),
        Mode::Gzsl => splits.all_classes(),
    }
}

/// Scores `classifier` on the test partitions of `splits`.
pub fn evaluate(
    classifier: &Classifier,
    splits: &DatasetSplits,
    synthesized: &SynthesizedSet,
    mode: Mode,
) -> Result<EvalReport> {
    let mut expected = mode_classes(splits, mode);
    expected.sort_unstable();
    if classifier.mode != mode || classifier.class_ids != expected {
        return Err(Error::Config(format!(
            "classifier trained for {} over {} classes cannot be evaluated in {} mode over {}",
            classifier.mode.as_str(),
            classifier.num_classes(),
            mode.as_str(),
            expected.len()
        )));
    }
    let counts = SampleCounts {
        train_real: if mode == Mode::Gzsl { splits.seen_train.len() } else { 0 },
        train_synthesized: synthesized.total(),
        test_seen: if mode == Mode::Gzsl { splits.seen_test.len() } else { 0 },
        test_unseen: splits.unseen_test.len(),
    };
    let u = per_class_top1(classifier, &splits.unseen_test)?;
    Ok(match mode {
        Mode::Czsl => EvalReport {
            mode,
            acc: Some(u.mean),
            unseen: None,
            seen: None,
            harmonic: None,
            per_class: u.per_class,
            counts,
        },
        Mode::Gzsl => {
            let s = per_class_top1(classifier, &splits.seen_test)?;
            let mut per_class = s.per_class;
            per_class.extend(u.per_class);
            per_class.sort_by_key(|c| c.class_id);
            EvalReport {
                mode,
                acc: None,
                unseen: Some(u.mean),
                seen: Some(s.mean),
                harmonic: Some(harmonic_mean(u.mean, s.mean)),
                per_class,
                counts,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkernel::{Activation, DenseLayer, Matrix};
    use alloc::vec;

    /// Two seen (0, 1) and two unseen (2, 3) classes on the coordinate axes.
    fn axis_splits() -> DatasetSplits {
        let part = |classes: &[u32]| {
            let rows: Vec<[f64; 4]> = classes
                .iter()
                .map(|&c| {
                    let mut r = [0.0; 4];
                    r[c as usize] = 1.0;
                    r
                })
                .collect();
            Partition::new(Matrix::from_rows(&rows).unwrap(), classes.to_vec()).unwrap()
        };
        DatasetSplits {
            feature_dim: 4,
            seen_classes: vec![0, 1],
            unseen_classes: vec![2, 3],
            seen_train: part(&[0, 1]),
            seen_test: part(&[0, 0, 1]),
            unseen_test: part(&[2, 3, 3]),
            unseen_heldout: Partition::empty(4),
        }
    }

    fn identity_classifier(classes: &[u32], mode: Mode) -> Classifier {
        let weight = Matrix::from_fn(classes.len(), 4, |i, j| if classes[i] as usize == j { 1.0 } else { 0.0 });
        Classifier {
            layer: DenseLayer::new(weight, vec![0.0; classes.len()], Activation::Identity).unwrap(),
            class_ids: classes.to_vec(),
            mode,
        }
    }

    fn empty_synth() -> SynthesizedSet {
        SynthesizedSet { classes: vec![] }
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let s = axis_splits();
        let r = evaluate(&identity_classifier(&[2, 3], Mode::Czsl), &s, &empty_synth(), Mode::Czsl).unwrap();
        assert_eq!(r.acc, Some(1.0));
        let r = evaluate(&identity_classifier(&[0, 1, 2, 3], Mode::Gzsl), &s, &empty_synth(), Mode::Gzsl).unwrap();
        assert_eq!((r.unseen, r.seen, r.harmonic), (Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn constant_seen_prediction_gives_zero_h() {
        let s = axis_splits();
        let mut clf = identity_classifier(&[0, 1, 2, 3], Mode::Gzsl);
        clf.layer.bias = vec![10.0, 0.0, 0.0, 0.0];
        let r = evaluate(&clf, &s, &empty_synth(), Mode::Gzsl).unwrap();
        assert_eq!(r.unseen, Some(0.0));
        assert_eq!(r.harmonic, Some(0.0));
    }

    #[test]
    fn mode_mismatch_is_config_error() {
        let s = axis_splits();
        let clf = identity_classifier(&[2, 3], Mode::Czsl);
        assert!(matches!(evaluate(&clf, &s, &empty_synth(), Mode::Gzsl), Err(Error::Config(_))));
    }

    #[test]
    fn report_round_trips_through_json() {
        let s = axis_splits();
        let r = evaluate(&identity_classifier(&[0, 1, 2, 3], Mode::Gzsl), &s, &empty_synth(), Mode::Gzsl).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&text).unwrap(), r);
    }
}
