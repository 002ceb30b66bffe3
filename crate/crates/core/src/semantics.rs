//! Class semantic vectors: diversity promotion by removing the dominant
//! left singular direction, cosine similarity, top-k referent selection and
//! referent mixup.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassPools;
use crate::error::{shape_err, Error, Result};
use crate::nnkernel::{dot, norm, symmetric_eigen, Matrix};
use crate::rng::uniform_index;
use crate::ClassId;

/// Weight of the top-1 referent sample in a mixup; the other referent gets the rest.
pub const MIXUP_PRIMARY_WEIGHT: f64 = 0.8;

/// Rows whose norm falls below this after projection are treated as collapsed.
pub const COLLAPSE_NORM: f64 = 1e-12;

/// Relative eigenvalue cutoff used to decide the rank of the semantic span.
const RANK_TOLERANCE: f64 = 1e-10;

/// Per-class semantic vectors, one row per class, rows unit-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSemanticMatrix {
    class_ids: Vec<ClassId>,
    vectors: Matrix,
    refined: Option<Matrix>,
    lookup: BTreeMap<ClassId, usize>,
}

impl ClassSemanticMatrix {
    /// Validates ids and L2-normalizes every row.
    pub fn new(class_ids: Vec<ClassId>, mut vectors: Matrix) -> Result<Self> {
        if class_ids.len() != vectors.rows() {
            return Err(shape_err(
                "ClassSemanticMatrix::new",
                format!("{} rows", class_ids.len()),
                format!("{}", vectors.rows()),
            ));
        }
        vectors.ensure_finite("class semantic vectors")?;
        let lookup = build_lookup(&class_ids)?;
        for (i, row) in vectors.row_iter().enumerate() {
            if norm(row) < COLLAPSE_NORM {
                return Err(Error::Data(format!("semantic vector of class {} is zero", class_ids[i])));
            }
        }
        vectors.normalize_rows(0.0);
        Ok(Self {
            class_ids,
            vectors,
            refined: None,
            lookup,
        })
    }

    /// Rebuilds from stored raw and refined matrices without renormalizing.
    pub fn from_parts(class_ids: Vec<ClassId>, vectors: Matrix, refined: Option<Matrix>) -> Result<Self> {
        let mut m = Self::new(class_ids, vectors)?;
        if let Some(r) = refined {
            r.expect_shape(m.vectors.rows(), m.vectors.cols(), "ClassSemanticMatrix::from_parts")?;
            m.refined = Some(r);
        }
        Ok(m)
    }

    pub fn class_ids(&self) -> &[ClassId] {
        &self.class_ids
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn raw(&self) -> &Matrix {
        &self.vectors
    }

    pub fn refined(&self) -> Option<&Matrix> {
        self.refined.as_ref()
    }

    /// Refined vectors when available, raw otherwise.
    pub fn active(&self) -> &Matrix {
        self.refined.as_ref().unwrap_or(&self.vectors)
    }

    pub fn index_of(&self, class: ClassId) -> Option<usize> {
        self.lookup.get(&class).copied()
    }

    pub fn active_vector(&self, class: ClassId) -> Result<&[f64]> {
        let i = self
            .index_of(class)
            .ok_or_else(|| Error::Parameter(format!("class {class} has no semantic vector")))?;
        Ok(self.active().row(i))
    }

    /// Active vectors of `classes`, one row each, in the given order.
    pub fn active_rows(&self, classes: &[ClassId]) -> Result<Matrix> {
        let idx = classes
            .iter()
            .map(|&c| {
                self.index_of(c)
                    .ok_or_else(|| Error::Parameter(format!("class {c} has no semantic vector")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.active().select_rows(&idx))
    }

    /// Runs diversity promotion and stores the refined matrix.
    pub fn refine(&mut self, options: &CdpOptions) -> Result<CdpProjector> {
        let (projector, refined) = cdp_refine(self, options)?;
        self.refined = Some(refined);
        Ok(projector)
    }
}

fn build_lookup(class_ids: &[ClassId]) -> Result<BTreeMap<ClassId, usize>> {
    let mut lookup = BTreeMap::new();
    for (i, &c) in class_ids.iter().enumerate() {
        if lookup.insert(c, i).is_some() {
            return Err(Error::Data(format!("duplicate class id {c} in semantic matrix")));
        }
    }
    Ok(lookup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdpOptions {
    /// How many leading singular directions to remove.
    pub removed_components: usize,
    /// Rescale refined rows to unit length (collapsed rows are left as they are).
    pub renormalize: bool,
}

impl Default for CdpOptions {
    fn default() -> Self {
        Self {
            removed_components: 1,
            renormalize: true,
        }
    }
}

/// Projector onto the semantic span with the dominant direction(s) removed.
#[derive(Debug, Clone, PartialEq)]
pub struct CdpProjector {
    /// Removed unit directions, one per row, dominant first.
    pub removed: Matrix,
    /// `P = U′U′ᵀ`, d×d.
    pub projection: Matrix,
    pub retained_rank: usize,
    /// Singular values of the semantic matrix, descending.
    pub singular_values: Vec<f64>,
}

impl CdpProjector {
    /// The dominant direction e¹.
    pub fn removed_component(&self) -> &[f64] {
        self.removed.row(0)
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.projection.row_iter().map(|p| dot(p, z)).collect()
    }
}

/// Removes the leading left singular direction(s) of the d×C matrix whose
/// columns are the class vectors, and projects every class onto what remains.
///
/// The left singular vectors come from the eigendecomposition of `Σ_c z_c z_cᵀ`.
pub fn cdp_refine(z: &ClassSemanticMatrix, options: &CdpOptions) -> Result<(CdpProjector, Matrix)> {
    let vectors = z.raw();
    let (c, d) = vectors.shape();
    if c < 2 {
        return Err(Error::Parameter(format!("diversity promotion needs at least 2 classes, got {c}")));
    }
    if options.removed_components == 0 {
        return Err(Error::Parameter("removed_components must be at least 1".into()));
    }
    let gram = vectors.t_matmul(vectors)?;
    let eig = symmetric_eigen(&gram)?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let rank = eig.values.iter().filter(|&&l| l > top * RANK_TOLERANCE && l > 0.0).count();
    if rank <= options.removed_components {
        return Err(Error::DegenerateSpan {
            rank,
            removed: options.removed_components,
        });
    }
    let removed_count = options.removed_components;
    let removed = Matrix::from_fn(removed_count, d, |i, r| eig.vectors.get(r, i));
    let kept = Matrix::from_fn(rank - removed_count, d, |i, r| eig.vectors.get(r, i + removed_count));
    let projection = kept.t_matmul(&kept)?;
    let mut refined = vectors.matmul_t(&projection)?;
    if options.renormalize {
        refined.normalize_rows(COLLAPSE_NORM);
    }
    let singular_values = eig.values.iter().map(|&l| libm::sqrt(l.max(0.0))).collect();
    Ok((
        CdpProjector {
            removed,
            projection,
            retained_rank: rank - removed_count,
            singular_values,
        },
        refined,
    ))
}

/// `a·b / (‖a‖‖b‖)`, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape_err("cosine_similarity", format!("length {}", a.len()), format!("{}", b.len())));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Referent {
    pub class_id: ClassId,
    pub similarity: f64,
}

/// For each target class, its k most similar seen classes, best first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferentIndex {
    pub k: usize,
    entries: BTreeMap<ClassId, Vec<Referent>>,
}

impl ReferentIndex {
    pub fn referents(&self, target: ClassId) -> Option<&[Referent]> {
        self.entries.get(&target).map(Vec::as_slice)
    }

    pub fn targets(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ranks seen classes by cosine similarity of the active (refined, if
/// present) semantic vectors. Ties go to the smaller class id.
pub fn build_referent_index(
    semantics: &ClassSemanticMatrix,
    targets: &[ClassId],
    seen: &[ClassId],
    k: usize,
    exclude_self: bool,
) -> Result<ReferentIndex> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let seen_set: BTreeSet<ClassId> = seen.iter().copied().collect();
    let mut entries = BTreeMap::new();
    for &target in targets {
        let tv = semantics.active_vector(target)?;
        let mut scored = Vec::with_capacity(seen_set.len());
        for &s in &seen_set {
            if exclude_self && s == target {
                continue;
            }
            scored.push(Referent {
                class_id: s,
                similarity: cosine_similarity(tv, semantics.active_vector(s)?)?,
            });
        }
        if k > scored.len() {
            return Err(Error::Parameter(format!(
                "k = {k} exceeds the {} eligible seen classes for target {target}",
                scored.len()
            )));
        }
        // seen_set iterates in ascending id order; the stable sort keeps that among ties
        scored.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
        scored.truncate(k);
        entries.insert(target, scored);
    }
    Ok(ReferentIndex { k, entries })
}

/// Builds the induction input for `target`: 0.8 × a random top-1 referent
/// sample + 0.2 × a random sample from one other referent class chosen
/// uniformly. With a single referent the top-1 sample is returned as is.
pub fn mixup_referents<R: Rng + ?Sized>(
    index: &ReferentIndex,
    pools: &ClassPools<'_>,
    target: ClassId,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let refs = index
        .referents(target)
        .ok_or_else(|| Error::Parameter(format!("class {target} is not in the referent index")))?;
    let top = refs
        .first()
        .ok_or_else(|| Error::Parameter(format!("class {target} has no referents")))?;
    let primary = draw(pools, top.class_id, rng)?;
    if refs.len() == 1 {
        return Ok(primary.to_vec());
    }
    let other = refs[1 + uniform_index(rng, refs.len() - 1)].class_id;
    let secondary = draw(pools, other, rng)?;
    Ok(primary
        .iter()
        .zip(secondary)
        .map(|(a, b)| MIXUP_PRIMARY_WEIGHT * a + (1.0 - MIXUP_PRIMARY_WEIGHT) * b)
        .collect())
}

fn draw<'a, R: Rng + ?Sized>(pools: &'a ClassPools<'_>, class: ClassId, rng: &mut R) -> Result<&'a [f64]> {
    let n = pools.class_len(class);
    if n == 0 {
        return Err(Error::Data(format!("referent class {class} has no samples")));
    }
    Ok(pools.sample(class, uniform_index(rng, n)))
}

/// Full cosine matrix plus the mean absolute off-diagonal similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub cosine: Matrix,
    pub mean_offdiag_abs: f64,
}

pub fn similarity_report(vectors: &Matrix) -> Result<SimilarityReport> {
    let c = vectors.rows();
    if c < 2 {
        return Err(Error::Parameter(format!("similarity report needs at least 2 rows, got {c}")));
    }
    let mut cosine = Matrix::zeros(c, c);
    let mut total = 0.0;
    for i in 0..c {
        for j in 0..c {
            let s = cosine_similarity(vectors.row(i), vectors.row(j))?;
            cosine.set(i, j, s);
            if i != j {
                total += libm::fabs(s);
            }
        }
    }
    Ok(SimilarityReport {
        cosine,
        mean_offdiag_abs: total / (c * (c - 1)) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;

    fn semantics(rows: &[&[f64]]) -> ClassSemanticMatrix {
        let ids = (0..rows.len() as ClassId).collect();
        ClassSemanticMatrix::new(ids, Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[0.3, -2.0], &[0.3, -2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((s - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn rows_are_normalized_and_ids_unique() {
        let m = semantics(&[&[3.0, 4.0], &[0.0, 2.0]]);
        assert_eq!(m.raw().row(0), &[0.6, 0.8]);
        let dup = ClassSemanticMatrix::new(vec![1, 1], Matrix::identity(2));
        assert!(matches!(dup, Err(Error::Data(_))));
    }

    #[test]
    fn rank_one_is_degenerate() {
        let m = semantics(&[&[1.0, 2.0, 2.0], &[1.0, 2.0, 2.0], &[1.0, 2.0, 2.0]]);
        let err = cdp_refine(&m, &CdpOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpan { rank: 1, removed: 1 }));
    }

    #[test]
    fn projector_is_idempotent_and_kills_e1() {
        let m = semantics(&[&[1.0, 0.2, 0.1, 0.0], &[0.9, -0.3, 0.2, 0.1], &[1.0, 0.1, -0.4, 0.3]]);
        let (p, refined) = cdp_refine(&m, &CdpOptions::default()).unwrap();
        let pp = p.projection.matmul(&p.projection).unwrap();
        assert!(pp.max_abs_diff(&p.projection).unwrap() < 1e-9);
        assert!(norm(&p.apply(p.removed_component())) < 1e-9);
        for row in refined.row_iter() {
            assert!(dot(row, p.removed_component()).abs() < 1e-9);
            assert!((norm(row) - 1.0).abs() < 1e-9);
        }
        assert_eq!(p.retained_rank, 2);
    }

    #[test]
    fn referent_identical_vector_ranks_first() {
        let m = semantics(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.6, 0.8, 0.0], &[0.0, 1.0, 0.0]]);
        let idx = build_referent_index(&m, &[3], &[0, 1, 2], 2, false).unwrap();
        let r = idx.referents(3).unwrap();
        assert_eq!(r[0].class_id, 1);
        assert_eq!(r[0].similarity, 1.0);
        assert_eq!(r[1].class_id, 2);
    }

    #[test]
    fn referent_exhaustive_excludes_self() {
        let m = semantics(&[&[1.0, 0.0], &[0.8, 0.6], &[0.0, 1.0], &[-1.0, 0.1]]);
        let idx = build_referent_index(&m, &[0, 1, 2, 3], &[0, 1, 2, 3], 3, true).unwrap();
        for t in 0..4 {
            let r = idx.referents(t).unwrap();
            assert_eq!(r.len(), 3);
            assert!(r.iter().all(|x| x.class_id != t));
            assert!(r.windows(2).all(|w| w[0].similarity >= w[1].similarity));
        }
        assert!(build_referent_index(&m, &[0], &[0, 1, 2, 3], 4, true).is_err());
        assert!(build_referent_index(&m, &[0], &[0, 1], 0, true).is_err());
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let m = semantics(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0], &[0.0, 1.0]]);
        let idx = build_referent_index(&m, &[0], &[3, 2, 1], 3, true).unwrap();
        let ids: Vec<ClassId> = idx.referents(0).unwrap().iter().map(|r| r.class_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
    }

    fn pools_fixture<'a>(features: &'a Matrix, labels: &[ClassId]) -> ClassPools<'a> {
        ClassPools::new(features, labels).unwrap()
    }

    fn index_of(entries: &[(ClassId, &[ClassId])]) -> ReferentIndex {
        let mut map = BTreeMap::new();
        for (t, refs) in entries {
            map.insert(
                *t,
                refs.iter()
                    .map(|&c| Referent {
                        class_id: c,
                        similarity: 0.0,
                    })
                    .collect(),
            );
        }
        ReferentIndex {
            k: entries[0].1.len(),
            entries: map,
        }
    }

    #[test]
    fn mixup_weights_top1_by_point_eight() {
        let features = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let labels = [10, 20];
        let pools = pools_fixture(&features, &labels);
        let idx = index_of(&[(99, &[10, 20])]);
        let x = mixup_referents(&idx, &pools, 99, &mut seeded(1)).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn mixup_identical_samples_and_single_referent() {
        let features = Matrix::from_rows(&[[0.5, -1.5], [0.5, -1.5]]).unwrap();
        let labels = [1, 2];
        let pools = pools_fixture(&features, &labels);
        let x = mixup_referents(&index_of(&[(7, &[1, 2])]), &pools, 7, &mut seeded(2)).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] + 1.5).abs() < 1e-15);
        let single = mixup_referents(&index_of(&[(7, &[2])]), &pools, 7, &mut seeded(2)).unwrap();
        assert_eq!(single, vec![0.5, -1.5]);
    }

    #[test]
    fn mixup_empty_pool_names_class() {
        let features = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let labels = [1];
        let pools = pools_fixture(&features, &labels);
        let err = mixup_referents(&index_of(&[(7, &[1, 5])]), &pools, 7, &mut seeded(3)).unwrap_err();
        assert_eq!(err, Error::Data("referent class 5 has no samples".into()));
    }

    #[test]
    fn similarity_report_extremes() {
        let ortho = similarity_report(&Matrix::identity(3)).unwrap();
        assert_eq!(ortho.mean_offdiag_abs, 0.0);
        let same = similarity_report(&Matrix::filled(3, 2, 0.7)).unwrap();
        assert!((same.mean_offdiag_abs - 1.0).abs() < 1e-15);
        for i in 0..3 {
            assert!((same.cosine.get(i, i) - 1.0).abs() < 1e-9);
        }
    }
}
