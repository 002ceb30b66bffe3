use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use indzsl_core::ClassId;

use super::{read_file, write_file};
use crate::error::{FormatError, FormatResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Seen,
    Unseen,
}

/// Parses `class_id<TAB>seen|unseen` lines. Blank lines and lines starting
/// with `#` are skipped.
pub fn parse_splits(path: &Path, text: &str) -> FormatResult<BTreeMap<ClassId, SplitRole>> {
    let mut out = BTreeMap::new();
    let fail = |line: usize, message: String| FormatError::Line {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (id, role) = trimmed
            .split_once('\t')
            .ok_or_else(|| fail(line_no, "expected `class_id<TAB>seen|unseen`".into()))?;
        let id: ClassId = id
            .trim()
            .parse()
            .map_err(|_| fail(line_no, format!("invalid class id `{}`", id.trim())))?;
        let role = match role.trim() {
            "seen" => SplitRole::Seen,
            "unseen" => SplitRole::Unseen,
            other => return Err(fail(line_no, format!("unknown role `{other}`"))),
        };
        if out.insert(id, role).is_some() {
            return Err(fail(line_no, format!("class {id} listed twice")));
        }
    }
    Ok(out)
}

pub fn read_splits(path: &Path) -> FormatResult<BTreeMap<ClassId, SplitRole>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| FormatError::Invalid {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to() as u64,
        message: "split file is not UTF-8".into(),
    })?;
    parse_splits(path, &text)
}

pub fn write_splits(path: &Path, roles: &[(ClassId, SplitRole)]) -> FormatResult<()> {
    let mut text = String::new();
    for (c, r) in roles {
        let role = match r {
            SplitRole::Seen => "seen",
            SplitRole::Unseen => "unseen",
        };
        writeln!(text, "{c}\t{role}").expect("write to String");
    }
    write_file(path, text.as_bytes())
}
