//! Seen/unseen splits, per-class sample pools, and a synthetic generator that
//! exercises the whole pipeline without external data.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nnkernel::{dot, norm, Matrix};
use crate::rng::{seeded, standard_normal};
use crate::semantics::ClassSemanticMatrix;
use crate::ClassId;

/// Features with one label per row.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Partition {
    pub features: Matrix,
    pub labels: Vec<ClassId>,
}

impl Partition {
    pub fn new(features: Matrix, labels: Vec<ClassId>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(shape_err(
                "Partition::new",
                format!("{} labels", features.rows()),
                format!("{}", labels.len()),
            ));
        }
        Ok(Self { features, labels })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            features: Matrix::zeros(0, dim),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn concat(&self, other: &Partition) -> Result<Partition> {
        let features = self.features.vstack(&other.features)?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Partition::new(features, labels)
    }
}

/// Seen/unseen partition of a dataset.
///
/// `unseen_heldout` holds real unseen-class samples that are never used for
/// training the generator or the classifier; it only feeds ceiling audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub feature_dim: usize,
    pub seen_classes: Vec<ClassId>,
    pub unseen_classes: Vec<ClassId>,
    pub seen_train: Partition,
    pub seen_test: Partition,
    pub unseen_test: Partition,
    pub unseen_heldout: Partition,
}

impl DatasetSplits {
    pub fn validate(&self) -> Result<()> {
        let seen: BTreeSet<ClassId> = self.seen_classes.iter().copied().collect();
        let unseen: BTreeSet<ClassId> = self.unseen_classes.iter().copied().collect();
        if seen.len() != self.seen_classes.len() || unseen.len() != self.unseen_classes.len() {
            return Err(Error::Data("duplicate class id in split lists".into()));
        }
        if let Some(c) = seen.intersection(&unseen).next() {
            return Err(Error::Data(format!("class {c} is both seen and unseen")));
        }
        let parts: [(&str, &Partition, &BTreeSet<ClassId>); 4] = [
            ("seen_train", &self.seen_train, &seen),
            ("seen_test", &self.seen_test, &seen),
            ("unseen_test", &self.unseen_test, &unseen),
            ("unseen_heldout", &self.unseen_heldout, &unseen),
        ];
        for (name, part, allowed) in parts {
            if part.features.rows() != part.labels.len() {
                return Err(Error::Data(format!("{name}: feature/label count mismatch")));
            }
            if part.features.rows() > 0 && part.features.cols() != self.feature_dim {
                return Err(Error::Data(format!(
                    "{name}: feature dimension {} differs from {}",
                    part.features.cols(),
                    self.feature_dim
                )));
            }
            if let Some(bad) = part.labels.iter().find(|l| !allowed.contains(l)) {
                return Err(Error::Data(format!("{name}: label {bad} is not in the expected class set")));
            }
            part.features.ensure_finite(name)?;
        }
        Ok(())
    }

    /// Checks that every class has exactly one semantic row of matching dimension.
    pub fn validate_semantics(&self, semantics: &ClassSemanticMatrix) -> Result<()> {
        if semantics.dim() != self.feature_dim {
            return Err(Error::Data(format!(
                "semantic dimension {} differs from feature dimension {}",
                semantics.dim(),
                self.feature_dim
            )));
        }
        for c in self.seen_classes.iter().chain(&self.unseen_classes) {
            if semantics.index_of(*c).is_none() {
                return Err(Error::Data(format!("class {c} has no semantic vector")));
            }
        }
        Ok(())
    }

    pub fn all_classes(&self) -> Vec<ClassId> {
        let mut all: Vec<ClassId> = self.seen_classes.iter().chain(&self.unseen_classes).copied().collect();
        all.sort_unstable();
        all
    }

    /// L2-normalizes every feature row in every partition.
    pub fn normalize_features(&mut self) {
        for part in [
            &mut self.seen_train,
            &mut self.seen_test,
            &mut self.unseen_test,
            &mut self.unseen_heldout,
        ] {
            part.features.normalize_rows(1e-12);
        }
    }
}

/// Row indices of a feature matrix grouped by class.
#[derive(Debug, Clone)]
pub struct ClassPools<'a> {
    features: &'a Matrix,
    by_class: BTreeMap<ClassId, Vec<usize>>,
}

impl<'a> ClassPools<'a> {
    pub fn new(features: &'a Matrix, labels: &[ClassId]) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(shape_err(
                "ClassPools::new",
                format!("{} labels", features.rows()),
                format!("{}", labels.len()),
            ));
        }
        let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            by_class.entry(l).or_default().push(i);
        }
        Ok(Self { features, by_class })
    }

    pub fn from_partition(part: &'a Partition) -> Result<Self> {
        Self::new(&part.features, &part.labels)
    }

    pub fn class_len(&self, class: ClassId) -> usize {
        self.by_class.get(&class).map_or(0, Vec::len)
    }

    pub fn sample(&self, class: ClassId, i: usize) -> &'a [f64] {
        self.features.row(self.by_class[&class][i])
    }

    pub fn indices(&self, class: ClassId) -> &[usize] {
        self.by_class.get(&class).map_or(&[], Vec::as_slice)
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.by_class.keys().copied()
    }

    pub fn features(&self) -> &'a Matrix {
        self.features
    }
}

/// Parameters of the synthetic Gaussian-cluster dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_seen: usize,
    pub num_unseen: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    /// Per-coordinate standard deviation of samples around their class mean.
    pub cluster_spread: f64,
    /// Norm scale of the Gaussian noise added to each semantic vector.
    pub semantic_noise: f64,
    /// Weight of the direction shared by all semantic vectors.
    pub shared_strength: f64,
    /// When set, class means lie on the unit sphere of a random subspace of
    /// this dimension, so unseen means are expressible through seen ones.
    pub latent_rank: Option<usize>,
    /// Minimum pairwise distance between class means; sets are redrawn until it holds.
    pub min_mean_separation: f64,
    /// Fraction of each class's samples placed in the test partition.
    pub test_fraction: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// The desk-scale fixture: 10 classes (6 seen, 4 unseen), d = 32,
    /// 100 samples per class, σ = 0.1.
    pub fn toy(seed: u64) -> Self {
        Self {
            num_seen: 6,
            num_unseen: 4,
            feature_dim: 32,
            samples_per_class: 100,
            cluster_spread: 0.1,
            semantic_noise: 0.05,
            shared_strength: 0.5,
            latent_rank: Some(3),
            min_mean_separation: 0.7,
            test_fraction: 0.2,
            seed,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_seen + self.num_unseen
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(format!("synthetic spec: {m}")));
        if self.num_seen == 0 || self.num_unseen == 0 {
            return bad("need at least one seen and one unseen class");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if self.samples_per_class < 2 {
            return bad("samples_per_class must be at least 2");
        }
        if !(self.cluster_spread >= 0.0 && self.cluster_spread.is_finite()) {
            return bad("cluster_spread must be finite and non-negative");
        }
        if !(self.semantic_noise >= 0.0 && self.semantic_noise.is_finite()) {
            return bad("semantic_noise must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.shared_strength) {
            return bad("shared_strength must lie in [0, 1]");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)");
        }
        if let Some(r) = self.latent_rank {
            if r == 0 || r > self.feature_dim {
                return bad("latent_rank must lie in [1, feature_dim]");
            }
        }
        if !(self.min_mean_separation >= 0.0 && self.min_mean_separation < 2.0) {
            return bad("min_mean_separation must lie in [0, 2)");
        }
        Ok(())
    }
}

/// Ground truth kept by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    /// True class means, row i belongs to class id i.
    pub class_means: Matrix,
    pub shared_direction: Vec<f64>,
    /// Per-class top-1 accuracy of nearest-mean classification of
    /// `unseen_test` among the unseen means.
    pub nearest_mean_unseen_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub splits: DatasetSplits,
    pub semantics: ClassSemanticMatrix,
    pub oracle: OracleRecord,
}

const MAX_MEAN_DRAWS: usize = 10_000;

/// Class ids are `0..num_seen` for seen classes followed by the unseen ones.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let d = spec.feature_dim;
    let c = spec.num_classes();

    let shared = random_unit(d, &mut rng);
    let basis = spec.latent_rank.map(|r| orthonormal_basis(d, r, &mut rng));
    let mut means = None;
    for _ in 0..MAX_MEAN_DRAWS {
        let candidate = Matrix::from_rows(
            &(0..c)
                .map(|_| match &basis {
                    Some(b) => {
                        let coeffs = random_unit(b.rows(), &mut rng);
                        let mut v = b.t_matmul(&Matrix::from_vec(b.rows(), 1, coeffs)?)?.into_vec();
                        let n = norm(&v);
                        v.iter_mut().for_each(|x| *x /= n);
                        Ok(v)
                    }
                    None => Ok(random_unit(d, &mut rng)),
                })
                .collect::<Result<Vec<_>>>()?,
        )?;
        if min_pairwise_distance(&candidate) >= spec.min_mean_separation {
            means = Some(candidate);
            break;
        }
    }
    let means = means.ok_or_else(|| {
        Error::Parameter(format!(
            "could not place {c} class means with separation {} in {MAX_MEAN_DRAWS} draws",
            spec.min_mean_separation
        ))
    })?;

    let noise_scale = spec.semantic_noise / libm::sqrt(d as f64);
    let semantic_rows = (0..c)
        .map(|i| {
            (0..d)
                .map(|j| {
                    spec.shared_strength * shared[j]
                        + (1.0 - spec.shared_strength) * means.get(i, j)
                        + noise_scale * standard_normal(&mut rng)
                })
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>();
    let semantics = ClassSemanticMatrix::new((0..c as ClassId).collect(), Matrix::from_rows(&semantic_rows)?)?;

    let n_test = ((spec.samples_per_class as f64 * spec.test_fraction) as usize).clamp(1, spec.samples_per_class - 1);
    let mut parts: [(Vec<f64>, Vec<ClassId>); 4] = Default::default();
    for class in 0..c {
        let seen = class < spec.num_seen;
        for s in 0..spec.samples_per_class {
            let is_test = s < n_test;
            let slot = match (seen, is_test) {
                (true, false) => 0,
                (true, true) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            let (f, l) = &mut parts[slot];
            for j in 0..d {
                f.push(means.get(class, j) + spec.cluster_spread * standard_normal(&mut rng));
            }
            l.push(class as ClassId);
        }
    }
    let [p0, p1, p2, p3] = parts.map(|(f, l)| {
        let rows = l.len();
        Partition::new(Matrix::from_vec(rows, d, f).expect("generated block"), l).expect("generated labels")
    });
    let splits = DatasetSplits {
        feature_dim: d,
        seen_classes: (0..spec.num_seen as ClassId).collect(),
        unseen_classes: (spec.num_seen as ClassId..c as ClassId).collect(),
        seen_train: p0,
        seen_test: p1,
        unseen_test: p2,
        unseen_heldout: p3,
    };
    splits.validate()?;

    let nearest_mean_unseen_accuracy = nearest_mean_accuracy(&means, &splits.unseen_classes, &splits.unseen_test);
    Ok(SyntheticDataset {
        splits,
        semantics,
        oracle: OracleRecord {
            class_means: means,
            shared_direction: shared,
            nearest_mean_unseen_accuracy,
        },
    })
}

fn random_unit<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `r` orthonormal rows spanning a random subspace of R^d (Gram-Schmidt).
fn orthonormal_basis<R: rand::Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> Matrix {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(r);
    while rows.len() < r {
        let mut v = random_unit(d, rng);
        for b in &rows {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&v);
        if n > 1e-6 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Matrix::from_rows(&rows).expect("equal-length basis rows")
}

fn min_pairwise_distance(m: &Matrix) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..m.rows() {
        for j in (i + 1)..m.rows() {
            let d2: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(libm::sqrt(d2));
        }
    }
    best
}

/// Per-class accuracy of assigning each sample to the closest class mean
/// among `classes` (mean rows indexed by class id).
pub fn nearest_mean_accuracy(means: &Matrix, classes: &[ClassId], part: &Partition) -> f64 {
    let mut hits: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    for (row, &label) in part.features.row_iter().zip(&part.labels) {
        let mut best = (f64::INFINITY, classes[0]);
        for &c in classes {
            let m = means.row(c as usize);
            let d2: f64 = row.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.0 {
                best = (d2, c);
            }
        }
        let e = hits.entry(label).or_insert((0, 0));
        e.1 += 1;
        if best.1 == label {
            e.0 += 1;
        }
    }
    if hits.is_empty() {
        return 0.0;
    }
    hits.values().map(|&(h, n)| h as f64 / n as f64).sum::<f64>() / hits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spread_reproduces_means() {
        let mut spec = SyntheticSpec::toy(1);
        spec.cluster_spread = 0.0;
        let ds = generate_synthetic(&spec).unwrap();
        for (row, &l) in ds.splits.seen_train.features.row_iter().zip(&ds.splits.seen_train.labels) {
            assert_eq!(row, ds.oracle.class_means.row(l as usize));
        }
    }

    #[test]
    fn full_strength_semantics_are_identical_before_noise() {
        let mut spec = SyntheticSpec::toy(2);
        spec.shared_strength = 1.0;
        spec.semantic_noise = 0.0;
        let ds = generate_synthetic(&spec).unwrap();
        let first = ds.semantics.raw().row(0).to_vec();
        for row in ds.semantics.raw().row_iter() {
            assert_eq!(row, first.as_slice());
        }
    }

    #[test]
    fn toy_counts_and_invariants() {
        let ds = generate_synthetic(&SyntheticSpec::toy(7)).unwrap();
        let s = &ds.splits;
        s.validate().unwrap();
        s.validate_semantics(&ds.semantics).unwrap();
        assert_eq!(s.seen_train.len(), 6 * 80);
        assert_eq!(s.seen_test.len(), 6 * 20);
        assert_eq!(s.unseen_test.len(), 4 * 20);
        assert_eq!(s.unseen_heldout.len(), 4 * 80);
        assert!(ds.oracle.nearest_mean_unseen_accuracy >= 0.99);
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_synthetic(&SyntheticSpec::toy(3)).unwrap();
        let b = generate_synthetic(&SyntheticSpec::toy(3)).unwrap();
        assert_eq!(a.splits, b.splits);
        assert_eq!(a.semantics, b.semantics);
        let c = generate_synthetic(&SyntheticSpec::toy(4)).unwrap();
        assert_ne!(a.splits.seen_train, c.splits.seen_train);
    }

    #[test]
    fn overlapping_labels_fail_validation() {
        let mut ds = generate_synthetic(&SyntheticSpec::toy(5)).unwrap().splits;
        ds.unseen_classes.push(0);
        assert!(ds.validate().is_err());
        let mut ds2 = generate_synthetic(&SyntheticSpec::toy(5)).unwrap().splits;
        ds2.unseen_test.labels[0] = 0;
        assert!(ds2.validate().is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = SyntheticSpec::toy(0);
        s.num_unseen = 0;
        assert!(generate_synthetic(&s).is_err());
        let mut s = SyntheticSpec::toy(0);
        s.shared_strength = 1.5;
        assert!(s.validate().is_err());
        let mut s = SyntheticSpec::toy(0);
        s.latent_rank = Some(64);
        assert!(s.validate().is_err());
    }
}
