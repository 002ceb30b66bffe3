use std::path::Path;

use indzsl_core::nnkernel::Matrix;
use indzsl_core::ClassId;

use super::features::{write_features, FeatureFile};
use crate::error::{FormatError, FormatResult};

/// Converts a CSV with header `label,split,f0,f1,…` (split is `train` or
/// `test`) into a feature file. Returns the number of samples written.
pub fn import_csv(input: &Path, output: &Path) -> FormatResult<FeatureFile> {
    let mut reader = csv::Reader::from_path(input).map_err(|e| csv_err(input, e))?;
    let header = reader.headers().map_err(|e| csv_err(input, e))?.clone();
    if header.len() < 3 || &header[0] != "label" || &header[1] != "split" {
        return Err(FormatError::Line {
            path: input.to_path_buf(),
            line: 1,
            message: "header must start with `label,split` followed by feature columns".into(),
        });
    }
    let dim = header.len() - 2;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut flags = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_err(input, e))?;
        let fail = |message: String| FormatError::Line {
            path: input.to_path_buf(),
            line,
            message,
        };
        let label: ClassId = record[0].trim().parse().map_err(|_| fail(format!("invalid label `{}`", &record[0])))?;
        let test = match record[1].trim() {
            "train" => false,
            "test" => true,
            other => return Err(fail(format!("split must be `train` or `test`, got `{other}`"))),
        };
        for field in record.iter().skip(2) {
            let v: f64 = field.trim().parse().map_err(|_| fail(format!("invalid number `{field}`")))?;
            if !v.is_finite() {
                return Err(fail(format!("non-finite feature `{field}`")));
            }
            data.push(v);
        }
        labels.push(label);
        flags.push(test);
    }
    let mut class_ids = labels.clone();
    class_ids.sort_unstable();
    class_ids.dedup();
    let file = FeatureFile {
        dim,
        class_ids,
        features: Matrix::from_vec(labels.len(), dim, data)?,
        labels,
        test_flags: flags,
    };
    write_features(output, &file)?;
    Ok(file)
}

fn csv_err(path: &Path, e: csv::Error) -> FormatError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FormatError::io(path, io),
        kind => FormatError::Line {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}
