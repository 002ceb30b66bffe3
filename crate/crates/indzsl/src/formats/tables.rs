use std::path::Path;

use indzsl_core::ivae::EpochLoss;
use indzsl_core::nnkernel::Matrix;
use indzsl_core::ClassId;

use super::write_file;
use crate::error::{FormatError, FormatResult};

fn finish(path: &Path, writer: csv::Writer<Vec<u8>>) -> FormatResult<()> {
    let bytes = writer.into_inner().map_err(|e| FormatError::io(path, e.into_error()))?;
    write_file(path, &bytes)
}

fn csv_io(path: &Path, e: csv::Error) -> FormatError {
    FormatError::io(path, std::io::Error::other(e))
}

/// `epoch,kl,recon,boost,total`, one row per epoch.
pub fn write_losses_csv(path: &Path, history: &[EpochLoss]) -> FormatResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "kl", "recon", "boost", "total"])
        .map_err(|e| csv_io(path, e))?;
    for h in history {
        let l = &h.loss;
        w.write_record([
            h.epoch.to_string(),
            l.kl.to_string(),
            l.target_recon.to_string(),
            l.boost.to_string(),
            l.total.to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    finish(path, w)
}

/// C×C matrix with a header row of class ids; each row starts with its id.
pub fn write_similarity_csv(path: &Path, class_ids: &[ClassId], cosine: &Matrix) -> FormatResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["class_id".to_string()];
    header.extend(class_ids.iter().map(ToString::to_string));
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for (c, row) in class_ids.iter().zip(cosine.row_iter()) {
        let mut rec = vec![c.to_string()];
        rec.extend(row.iter().map(ToString::to_string));
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    finish(path, w)
}
