//! Semantics file layout: magic `INDZSEMV`, version `u32`, class count `C`
//! (`u32`), dimension `s` (`u32`), `C` class ids (`u32`), then the `C × s`
//! vectors as row-major `f64`.

use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use indzsl_core::nnkernel::Matrix;
use indzsl_core::semantics::ClassSemanticMatrix;
use indzsl_core::ClassId;

use super::{put_header, read_file, write_file, ByteReader};
use crate::error::FormatResult;

pub const SEMANTICS_MAGIC: &[u8; 8] = b"INDZSEMV";
pub const SEMANTICS_VERSION: u32 = 1;

pub fn encode_semantics(class_ids: &[ClassId], vectors: &Matrix) -> FormatResult<Vec<u8>> {
    vectors.expect_shape(class_ids.len(), vectors.cols(), "semantics file")?;
    let mut buf = Vec::with_capacity(24 + 4 * class_ids.len() + 8 * vectors.as_slice().len());
    put_header(&mut buf, SEMANTICS_MAGIC, SEMANTICS_VERSION);
    buf.write_u32::<LittleEndian>(class_ids.len() as u32).expect("write to Vec");
    buf.write_u32::<LittleEndian>(vectors.cols() as u32).expect("write to Vec");
    for &c in class_ids {
        buf.write_u32::<LittleEndian>(c).expect("write to Vec");
    }
    for &v in vectors.as_slice() {
        buf.write_f64::<LittleEndian>(v).expect("write to Vec");
    }
    Ok(buf)
}

/// Writes raw (unnormalized or normalized) vectors; loading normalizes them.
pub fn write_semantics(path: &Path, class_ids: &[ClassId], vectors: &Matrix) -> FormatResult<()> {
    write_file(path, &encode_semantics(class_ids, vectors)?)
}

pub fn decode_semantics(path: &Path, bytes: &[u8]) -> FormatResult<(Vec<ClassId>, Matrix)> {
    let mut r = ByteReader::new(path, bytes);
    r.header(SEMANTICS_MAGIC, "semantics", SEMANTICS_VERSION)?;
    let c = r.u32("class count")? as usize;
    let s = r.u32("semantic dimension")? as usize;
    let mut ids = Vec::with_capacity(c.min(bytes.len() / 4));
    for _ in 0..c {
        ids.push(r.u32("class-id table")?);
    }
    let count = c.checked_mul(s).ok_or_else(|| r.invalid("vector block size overflows"))?;
    let data = r.f64s(count, "vector block")?;
    r.finish()?;
    Ok((ids, Matrix::from_vec(c, s, data)?))
}

/// Loads and validates (distinct ids, non-zero rows) a semantic matrix.
pub fn read_semantics(path: &Path) -> FormatResult<ClassSemanticMatrix> {
    let (ids, vectors) = decode_semantics(path, &read_file(path)?)?;
    ClassSemanticMatrix::new(ids, vectors).map_err(|e| crate::error::FormatError::Invalid {
        path: path.to_path_buf(),
        offset: 0,
        message: e.to_string(),
    })
}
