//! On-disk formats. All binary files are little-endian and start with an
//! 8-byte magic followed by a `u32` version.

mod checkpoint;
mod features;
mod import;
mod semantics;
mod splits;
mod tables;

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{FormatError, FormatResult};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use features::{decode_features, encode_features, read_features, write_features, FeatureFile, FEATURE_MAGIC, FEATURE_VERSION};
pub use import::import_csv;
pub use semantics::{decode_semantics, encode_semantics, read_semantics, write_semantics, SEMANTICS_MAGIC, SEMANTICS_VERSION};
pub use splits::{read_splits, write_splits, SplitRole};
pub use tables::{write_losses_csv, write_similarity_csv};

use indzsl_core::dataset::{DatasetSplits, Partition};
use indzsl_core::nnkernel::Matrix;
use indzsl_core::semantics::ClassSemanticMatrix;
use indzsl_core::ClassId;

/// Reads `features`, `semantics` and `splits` and assembles validated splits.
///
/// Seen samples flagged for training form `seen_train`, the rest `seen_test`;
/// unseen samples flagged for testing form `unseen_test` and the others are
/// kept aside in `unseen_heldout`. Semantic vectors are restricted to the
/// classes named in the split file.
pub fn load_dataset(
    features: &Path,
    semantics: &Path,
    splits: &Path,
) -> FormatResult<(DatasetSplits, ClassSemanticMatrix)> {
    let file = read_features(features)?;
    let roles = read_splits(splits)?;
    let sem = read_semantics(semantics)?;
    let invalid = |path: &Path, message: String| FormatError::Invalid {
        path: path.to_path_buf(),
        offset: 0,
        message,
    };

    for &c in roles.keys() {
        if !file.class_ids.contains(&c) {
            return Err(invalid(splits, format!("class {c} does not appear in {}", features.display())));
        }
        if sem.index_of(c).is_none() {
            return Err(invalid(splits, format!("class {c} has no vector in {}", semantics.display())));
        }
    }
    for &c in &file.class_ids {
        if !roles.contains_key(&c) {
            return Err(invalid(features, format!("class {c} is missing from {}", splits.display())));
        }
    }
    if sem.dim() != file.dim {
        return Err(invalid(
            semantics,
            format!("semantic dimension {} differs from feature dimension {}", sem.dim(), file.dim),
        ));
    }

    let seen: Vec<ClassId> = roles.iter().filter(|(_, r)| **r == SplitRole::Seen).map(|(c, _)| *c).collect();
    let unseen: Vec<ClassId> = roles.iter().filter(|(_, r)| **r == SplitRole::Unseen).map(|(c, _)| *c).collect();
    let mut buckets: [(Vec<usize>, Vec<ClassId>); 4] = Default::default();
    for (i, (&label, &test)) in file.labels.iter().zip(&file.test_flags).enumerate() {
        let slot = match (roles[&label], test) {
            (SplitRole::Seen, false) => 0,
            (SplitRole::Seen, true) => 1,
            (SplitRole::Unseen, true) => 2,
            (SplitRole::Unseen, false) => 3,
        };
        buckets[slot].0.push(i);
        buckets[slot].1.push(label);
    }
    let part = |(rows, labels): &(Vec<usize>, Vec<ClassId>)| -> FormatResult<Partition> {
        Ok(Partition::new(file.features.select_rows(rows), labels.clone())?)
    };
    let splits_out = DatasetSplits {
        feature_dim: file.dim,
        seen_classes: seen,
        unseen_classes: unseen,
        seen_train: part(&buckets[0])?,
        seen_test: part(&buckets[1])?,
        unseen_test: part(&buckets[2])?,
        unseen_heldout: part(&buckets[3])?,
    };
    splits_out.validate()?;

    let ids: Vec<ClassId> = roles.keys().copied().collect();
    let rows = sem.active_rows(&ids)?;
    let sem = ClassSemanticMatrix::new(ids, rows)?;
    Ok((splits_out, sem))
}

/// Writes `splits` and `semantics` as a feature file, a semantics file and a split file.
pub fn save_dataset(
    splits: &DatasetSplits,
    semantics: &ClassSemanticMatrix,
    features: &Path,
    semantics_path: &Path,
    split_path: &Path,
) -> FormatResult<()> {
    let d = splits.feature_dim;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut flags = Vec::new();
    for (part, test) in [
        (&splits.seen_train, false),
        (&splits.seen_test, true),
        (&splits.unseen_test, true),
        (&splits.unseen_heldout, false),
    ] {
        data.extend_from_slice(part.features.as_slice());
        labels.extend_from_slice(&part.labels);
        flags.extend(std::iter::repeat_n(test, part.len()));
    }
    let file = FeatureFile {
        dim: d,
        class_ids: splits.all_classes(),
        features: Matrix::from_vec(labels.len(), d, data)?,
        labels,
        test_flags: flags,
    };
    write_features(features, &file)?;
    write_semantics(semantics_path, semantics.class_ids(), semantics.raw())?;
    let mut roles: Vec<(ClassId, SplitRole)> = splits.seen_classes.iter().map(|&c| (c, SplitRole::Seen)).collect();
    roles.extend(splits.unseen_classes.iter().map(|&c| (c, SplitRole::Unseen)));
    write_splits(split_path, &roles)
}

/// Cursor over a whole file that reports failures with the file name and offset.
pub(crate) struct ByteReader<'a> {
    path: &'a Path,
    cursor: Cursor<&'a [u8]>,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Self {
            path,
            cursor: Cursor::new(bytes),
        }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.cursor.position()
    }

    fn truncated(&self, what: &'static str) -> FormatError {
        FormatError::Truncated {
            path: self.path.to_path_buf(),
            offset: self.offset(),
            what,
        }
    }

    pub(crate) fn invalid(&self, message: impl Into<String>) -> FormatError {
        FormatError::Invalid {
            path: self.path.to_path_buf(),
            offset: self.offset(),
            message: message.into(),
        }
    }

    pub(crate) fn header(&mut self, magic: &[u8; 8], kind: &'static str, version: u32) -> FormatResult<()> {
        let mut found = [0u8; 8];
        self.cursor.read_exact(&mut found).map_err(|_| self.truncated("magic"))?;
        if &found != magic {
            return Err(FormatError::BadMagic {
                path: self.path.to_path_buf(),
                expected: kind,
            });
        }
        let v = self.u32("version")?;
        if v != version {
            return Err(FormatError::Version {
                path: self.path.to_path_buf(),
                found: v,
                expected: version,
            });
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self, what: &'static str) -> FormatResult<u8> {
        let start = self.offset();
        self.cursor.read_u8().map_err(|_| self.truncated_at(start, what))
    }

    pub(crate) fn u32(&mut self, what: &'static str) -> FormatResult<u32> {
        let start = self.offset();
        self.cursor.read_u32::<LittleEndian>().map_err(|_| self.truncated_at(start, what))
    }

    pub(crate) fn u64(&mut self, what: &'static str) -> FormatResult<u64> {
        let start = self.offset();
        self.cursor.read_u64::<LittleEndian>().map_err(|_| self.truncated_at(start, what))
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &'static str) -> FormatResult<Vec<f32>> {
        let start = self.offset();
        self.ensure(n.checked_mul(4), what)?;
        let mut out = vec![0f32; n];
        self.cursor
            .read_f32_into::<LittleEndian>(&mut out)
            .map_err(|_| self.truncated_at(start, what))?;
        Ok(out)
    }

    pub(crate) fn f64s(&mut self, n: usize, what: &'static str) -> FormatResult<Vec<f64>> {
        let start = self.offset();
        self.ensure(n.checked_mul(8), what)?;
        let mut out = vec![0f64; n];
        self.cursor
            .read_f64_into::<LittleEndian>(&mut out)
            .map_err(|_| self.truncated_at(start, what))?;
        Ok(out)
    }

    pub(crate) fn bytes(&mut self, n: usize, what: &'static str) -> FormatResult<Vec<u8>> {
        let start = self.offset();
        self.ensure(Some(n), what)?;
        let mut out = vec![0u8; n];
        self.cursor.read_exact(&mut out).map_err(|_| self.truncated_at(start, what))?;
        Ok(out)
    }

    /// Fails before allocating when a declared length exceeds what is left.
    fn ensure(&self, len: Option<usize>, what: &'static str) -> FormatResult<()> {
        let remaining = self.cursor.get_ref().len() as u64 - self.offset().min(self.cursor.get_ref().len() as u64);
        match len {
            Some(n) if n as u64 <= remaining => Ok(()),
            _ => Err(self.truncated(what)),
        }
    }

    fn truncated_at(&self, offset: u64, what: &'static str) -> FormatError {
        FormatError::Truncated {
            path: self.path.to_path_buf(),
            offset,
            what,
        }
    }

    pub(crate) fn finish(&self) -> FormatResult<()> {
        if self.offset() as usize != self.cursor.get_ref().len() {
            return Err(self.invalid("trailing bytes after the last block"));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> FormatResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> FormatResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| FormatError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}

pub(crate) fn put_header(buf: &mut Vec<u8>, magic: &[u8; 8], version: u32) {
    buf.extend_from_slice(magic);
    buf.write_u32::<LittleEndian>(version).expect("write to Vec");
}

pub(crate) fn usize_from(value: u64, reader: &ByteReader<'_>, what: &str) -> FormatResult<usize> {
    usize::try_from(value).map_err(|_| reader.invalid(format!("{what} {value} does not fit in memory")))
}
