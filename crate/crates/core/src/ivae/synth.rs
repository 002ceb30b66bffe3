use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{standard_normal_matrix, IvaeParameters};
use crate::dataset::{ClassPools, Partition};
use crate::error::Result;
use crate::nnkernel::Matrix;
use crate::rng::derived;
use crate::semantics::{mixup_referents, ClassSemanticMatrix, Referent, ReferentIndex};
use crate::ClassId;

/// Rows decoded per forward pass during synthesis.
pub const SYNTH_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedClass {
    pub class_id: ClassId,
    pub features: Matrix,
    pub referents: Vec<Referent>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedSet {
    pub classes: Vec<SynthesizedClass>,
}

impl SynthesizedSet {
    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.features.rows()).sum()
    }

    /// All samples as one labelled partition, in class order.
    pub fn to_partition(&self, dim: usize) -> Result<Partition> {
        let mut data = Vec::with_capacity(self.total() * dim);
        let mut labels = Vec::with_capacity(self.total());
        for c in &self.classes {
            c.features.expect_shape(c.features.rows(), dim, "synthesized class")?;
            data.extend_from_slice(c.features.as_slice());
            labels.extend(core::iter::repeat_n(c.class_id, c.features.rows()));
        }
        Partition::new(Matrix::from_vec(labels.len(), dim, data)?, labels)
    }
}

/// Generates `n` samples of `class` from its referents' real samples.
///
/// Draws come from the stream `derived(seed, class)`, so the result does not
/// depend on which other classes are synthesized or in what order.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_class(
    params: &IvaeParameters,
    index: &ReferentIndex,
    pools: &ClassPools<'_>,
    semantics: &ClassSemanticMatrix,
    class: ClassId,
    n: usize,
    seed: u64,
    normalize: bool,
) -> Result<SynthesizedClass> {
    let referents = index
        .referents(class)
        .ok_or_else(|| crate::Error::Parameter(alloc::format!("class {class} is not in the referent index")))?
        .to_vec();
    let z = semantics.active_vector(class)?.to_vec();
    let d = params.feature_dim;
    let mut rng = derived(seed, u64::from(class));
    let mut out = Vec::with_capacity(n * d);
    let mut done = 0;
    while done < n {
        let m = SYNTH_CHUNK.min(n - done);
        let mut refer = Vec::with_capacity(m * d);
        for _ in 0..m {
            refer.extend(mixup_referents(index, pools, class, &mut rng)?);
        }
        let x_refer = Matrix::from_vec(m, d, refer)?;
        let z_rows = Matrix::from_vec(m, z.len(), z.repeat(m))?;
        let noise = standard_normal_matrix(m, params.latent_dim, &mut rng);
        let code = params.encode_with_noise(&x_refer, &z_rows, &noise)?;
        let decoded = params.decode(&code.sample, &z_rows)?;
        out.extend_from_slice(decoded.as_slice());
        done += m;
    }
    let mut features = Matrix::from_vec(n, d, out)?;
    if normalize {
        features.normalize_rows(1e-12);
    }
    Ok(SynthesizedClass {
        class_id: class,
        features,
        referents,
        seed,
    })
}

/// Sequential synthesis of every class in `classes`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize(
    params: &IvaeParameters,
    index: &ReferentIndex,
    pools: &ClassPools<'_>,
    semantics: &ClassSemanticMatrix,
    classes: &[ClassId],
    n: usize,
    seed: u64,
    normalize: bool,
) -> Result<SynthesizedSet> {
    let mut out = vec![];
    for &c in classes {
        out.push(synthesize_class(params, index, pools, semantics, c, n, seed, normalize)?);
    }
    Ok(SynthesizedSet { classes: out })
}
