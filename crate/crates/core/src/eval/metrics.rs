use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ClassId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class_id: ClassId,
    pub accuracy: f64,
    pub samples: usize,
}

/// Accuracy of each class present in the labels, and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassAccuracy {
    pub per_class: Vec<ClassAccuracy>,
    pub mean: f64,
}

/// Per-class top-1 accuracy from predicted and true labels.
///
/// Every label must belong to `classes`. Classes without test samples do not
/// enter the mean.
pub fn per_class_accuracy(predicted: &[ClassId], labels: &[ClassId], classes: &[ClassId]) -> Result<PerClassAccuracy> {
    if predicted.len() != labels.len() {
        return Err(Error::Evaluation(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let mut tally: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    for (&p, &l) in predicted.iter().zip(labels) {
        if !classes.contains(&l) {
            return Err(Error::Evaluation(format!("label {l} is outside the classifier's classes")));
        }
        let e = tally.entry(l).or_default();
        e.1 += 1;
        if p == l {
            e.0 += 1;
        }
    }
    if tally.is_empty() {
        return Err(Error::Evaluation("no samples to score".into()));
    }
    let per_class: Vec<ClassAccuracy> = tally
        .into_iter()
        .map(|(class_id, (hit, n))| ClassAccuracy {
            class_id,
            accuracy: hit as f64 / n as f64,
            samples: n,
        })
        .collect();
    let mean = per_class.iter().map(|c| c.accuracy).sum::<f64>() / per_class.len() as f64;
    Ok(PerClassAccuracy { per_class, mean })
}

/// `2SU / (S + U)`, zero when both are zero.
pub fn harmonic_mean(unseen: f64, seen: f64) -> f64 {
    if unseen + seen <= 0.0 {
        return 0.0;
    }
    2.0 * seen * unseen / (seen + unseen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn harmonic_examples() {
        assert!((harmonic_mean(86.1, 88.7) - 87.4).abs() < 0.05);
        assert_eq!(harmonic_mean(0.3, 0.3), 0.3);
        assert_eq!(harmonic_mean(0.0, 0.9), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
    }

    #[test]
    fn harmonic_between_min_and_arithmetic_mean() {
        for (u, s) in [(0.1, 0.9), (0.5, 0.6), (0.99, 0.01), (0.4, 0.4)] {
            let h = harmonic_mean(u, s);
            assert!(h >= u.min(s) - 1e-15);
            assert!(h <= 0.5 * (u + s) + 1e-15);
            assert!(h <= 2.0 * u.min(s) + 1e-15);
        }
    }

    #[test]
    fn averages_over_classes_not_samples() {
        let labels = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
        let predicted = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        let r = per_class_accuracy(&predicted, &labels, &[0, 1]).unwrap();
        assert_eq!(r.mean, 0.5);
        assert_eq!(r.per_class[0].samples, 9);
    }

    #[test]
    fn unknown_label_is_an_error() {
        assert!(matches!(
            per_class_accuracy(&[0], &[5], &[0, 1]),
            Err(Error::Evaluation(_))
        ));
    }
}
