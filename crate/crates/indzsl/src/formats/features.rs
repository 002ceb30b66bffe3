//! Feature file layout (all integers little-endian):
//!
//! | bytes        | content                                  |
//! |--------------|------------------------------------------|
//! | 8            | magic `INDZFEAT`                         |
//! | 4            | version (`u32`, currently 1)             |
//! | 4            | feature dimension `d` (`u32`)            |
//! | 8            | sample count `N` (`u64`)                 |
//! | 4            | class count `C` (`u32`)                  |
//! | 4·C          | class-id table (`u32` each, ascending)   |
//! | 4·N·d        | features, row-major `f32`                |
//! | 5·N          | per sample: class id `u32`, flag `u8`    |
//!
//! The flag is 1 for test samples and 0 for training samples.

use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use indzsl_core::nnkernel::Matrix;
use indzsl_core::ClassId;

use super::{put_header, read_file, usize_from, write_file, ByteReader};
use crate::error::{FormatError, FormatResult};

pub const FEATURE_MAGIC: &[u8; 8] = b"INDZFEAT";
pub const FEATURE_VERSION: u32 = 1;

/// Features are stored as `f32` and widened on load, so values read back are
/// exactly the `f32` roundings of what was written.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub dim: usize,
    pub class_ids: Vec<ClassId>,
    pub features: Matrix,
    pub labels: Vec<ClassId>,
    pub test_flags: Vec<bool>,
}

impl FeatureFile {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn encode_features(file: &FeatureFile) -> FormatResult<Vec<u8>> {
    let n = file.labels.len();
    file.features.expect_shape(n, file.dim, "feature file")?;
    if file.test_flags.len() != n {
        return Err(indzsl_core::Error::Data(format!("{} test flags for {n} samples", file.test_flags.len())).into());
    }
    let mut ids = file.class_ids.clone();
    ids.sort_unstable();
    ids.dedup();
    let mut buf = Vec::with_capacity(32 + 4 * ids.len() + 4 * n * file.dim + 5 * n);
    put_header(&mut buf, FEATURE_MAGIC, FEATURE_VERSION);
    let dim = u32::try_from(file.dim).map_err(|_| indzsl_core::Error::Data("dimension exceeds u32".into()))?;
    let classes = u32::try_from(ids.len()).map_err(|_| indzsl_core::Error::Data("class count exceeds u32".into()))?;
    buf.write_u32::<LittleEndian>(dim).expect("write to Vec");
    buf.write_u64::<LittleEndian>(n as u64).expect("write to Vec");
    buf.write_u32::<LittleEndian>(classes).expect("write to Vec");
    for &c in &ids {
        buf.write_u32::<LittleEndian>(c).expect("write to Vec");
    }
    for &v in file.features.as_slice() {
        buf.write_f32::<LittleEndian>(v as f32).expect("write to Vec");
    }
    for (&l, &t) in file.labels.iter().zip(&file.test_flags) {
        if ids.binary_search(&l).is_err() {
            return Err(indzsl_core::Error::Data(format!("label {l} is not in the class table")).into());
        }
        buf.write_u32::<LittleEndian>(l).expect("write to Vec");
        buf.write_u8(u8::from(t)).expect("write to Vec");
    }
    Ok(buf)
}

pub fn write_features(path: &Path, file: &FeatureFile) -> FormatResult<()> {
    write_file(path, &encode_features(file)?)
}

pub fn decode_features(path: &Path, bytes: &[u8]) -> FormatResult<FeatureFile> {
    let mut r = ByteReader::new(path, bytes);
    r.header(FEATURE_MAGIC, "feature", FEATURE_VERSION)?;
    let dim = r.u32("feature dimension")? as usize;
    let n_raw = r.u64("sample count")?;
    let n = usize_from(n_raw, &r, "sample count")?;
    let classes = r.u32("class count")? as usize;
    let mut class_ids = Vec::with_capacity(classes.min(bytes.len() / 4));
    for _ in 0..classes {
        let c = r.u32("class-id table")?;
        if class_ids.last().is_some_and(|&prev| prev >= c) {
            return Err(r.invalid("class-id table is not strictly ascending"));
        }
        class_ids.push(c);
    }
    let count = n
        .checked_mul(dim)
        .ok_or_else(|| r.invalid(format!("{n} x {dim} features overflow")))?;
    let raw = r.f32s(count, "feature block")?;
    let data: Vec<f64> = raw.into_iter().map(f64::from).collect();
    let mut labels = Vec::with_capacity(n);
    let mut test_flags = Vec::with_capacity(n);
    for _ in 0..n {
        let l = r.u32("label block")?;
        if class_ids.binary_search(&l).is_err() {
            return Err(r.invalid(format!("label {l} is not in the class-id table")));
        }
        let flag = r.u8("label block")?;
        if flag > 1 {
            return Err(r.invalid(format!("train/test flag must be 0 or 1, got {flag}")));
        }
        labels.push(l);
        test_flags.push(flag == 1);
    }
    r.finish()?;
    let features = Matrix::from_vec(n, dim, data).map_err(FormatError::from)?;
    Ok(FeatureFile {
        dim,
        class_ids,
        features,
        labels,
        test_flags,
    })
}

pub fn read_features(path: &Path) -> FormatResult<FeatureFile> {
    decode_features(path, &read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureFile {
        FeatureFile {
            dim: 2,
            class_ids: vec![3, 9],
            features: Matrix::from_rows(&[[0.5, -1.25], [3.0, 0.1], [1e-3, 7.0]]).unwrap(),
            labels: vec![9, 3, 3],
            test_flags: vec![false, true, false],
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_features(&sample()).unwrap();
        assert_eq!(&bytes[..8], b"INDZFEAT");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 28 + 8 + 24 + 15);
    }

    #[test]
    fn truncation_names_file_and_offset() {
        let bytes = encode_features(&sample()).unwrap();
        let err = decode_features(Path::new("x.bin"), &bytes[..50]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x.bin") && msg.contains("byte 36"), "{msg}");
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_features(&sample()).unwrap();
        bytes[8] = 2;
        assert!(matches!(decode_features(Path::new("f"), &bytes), Err(FormatError::Version { found: 2, .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_features(Path::new("f"), &bytes), Err(FormatError::BadMagic { .. })));
    }
}
