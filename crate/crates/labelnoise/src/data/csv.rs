//! Plain-text dataset interchange.
//!
//! Files are comma-separated UTF-8 with a header row. One column holds the
//! (noisy) label, optional columns hold clean labels and group tags, and every
//! other column is a numeric feature, taken in header order. Labels may be
//! written either as class ids `0..k` or, for binary data, as signs `−1/+1`;
//! the sign form is detected on load and mapped to ids.

use super::LabeledDataset;
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Names the special columns of a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    /// Noisy-label column.
    pub label: String,
    /// Clean-label column, if the file has one.
    pub clean: Option<String>,
    /// Group-tag column, if the file has one.
    pub group: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            label: "label".into(),
            clean: Some("clean".into()),
            group: Some("group".into()),
        }
    }
}

impl CsvSchema {
    /// Only a label column named `label`; no clean labels or groups.
    pub fn label_only() -> Self {
        CsvSchema {
            label: "label".into(),
            clean: None,
            group: None,
        }
    }
}

/// How labels were written in a loaded file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelEncoding {
    /// Class ids `0..k`.
    ZeroBased,
    /// Binary signs `−1/+1`, mapped to ids `0/1` internally.
    Signed,
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    }
}

/// Load a dataset from `path` using `schema` to identify the label, clean,
/// and group columns; every other column is a feature. Returns the dataset
/// together with the label encoding found in the file.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<(LabeledDataset, LabelEncoding)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file, expected a header row".into()))?;
    let header: Vec<&str> = header_line.split(',').map(str::trim).collect();

    let find = |name: &str| header.iter().position(|h| *h == name);
    let label_col = find(&schema.label).ok_or_else(|| {
        parse_err(path, 1, format!("label column `{}` not in header", schema.label))
    })?;
    let clean_col = match &schema.clean {
        Some(name) => Some(
            find(name)
                .ok_or_else(|| parse_err(path, 1, format!("clean column `{name}` not in header")))?,
        ),
        None => None,
    };
    let group_col = match &schema.group {
        Some(name) => Some(
            find(name)
                .ok_or_else(|| parse_err(path, 1, format!("group column `{name}` not in header")))?,
        ),
        None => None,
    };
    let special = |c: usize| c == label_col || Some(c) == clean_col || Some(c) == group_col;
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| !special(c)).collect();
    if feature_cols.is_empty() {
        return Err(parse_err(path, 1, "no feature columns in header".into()));
    }
    let dim = feature_cols.len();

    let mut features: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<i64> = Vec::new();
    let mut raw_clean: Vec<i64> = Vec::new();
    let mut groups: Vec<u32> = Vec::new();
    for (row, line) in lines.enumerate() {
        let line_no = row + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(parse_err(
                path,
                line_no,
                format!("{} fields, header has {}", fields.len(), header.len()),
            ));
        }
        for &c in &feature_cols {
            let v: f64 = fields[c].parse().map_err(|_| {
                parse_err(
                    path,
                    line_no,
                    format!("column `{}`: `{}` is not numeric", header[c], fields[c]),
                )
            })?;
            features.push(v);
        }
        let int_at = |c: usize| -> Result<i64> {
            fields[c].parse().map_err(|_| {
                parse_err(
                    path,
                    line_no,
                    format!("column `{}`: `{}` is not an integer", header[c], fields[c]),
                )
            })
        };
        raw_labels.push(int_at(label_col)?);
        if let Some(c) = clean_col {
            raw_clean.push(int_at(c)?);
        }
        if let Some(c) = group_col {
            let g = int_at(c)?;
            if !(0..=u32::MAX as i64).contains(&g) {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("column `{}`: group tag {g} out of range", header[c]),
                ));
            }
            groups.push(g as u32);
        }
    }

    // Decide the label encoding from the values actually present.
    let all_label_values = raw_labels.iter().chain(&raw_clean);
    let encoding = if all_label_values.clone().any(|&v| v < 0) {
        if let Some(&bad) = all_label_values.clone().find(|&&v| v != -1 && v != 1) {
            return Err(parse_err(
                path,
                0,
                format!("labels mix negatives with {bad}; signed labels must be −1/+1"),
            ));
        }
        LabelEncoding::Signed
    } else {
        LabelEncoding::ZeroBased
    };
    let map = |v: i64| -> u32 {
        match encoding {
            LabelEncoding::Signed => u32::from(v == 1),
            LabelEncoding::ZeroBased => v as u32,
        }
    };
    let noisy: Vec<u32> = raw_labels.iter().map(|&v| map(v)).collect();
    let clean: Vec<u32> = raw_clean.iter().map(|&v| map(v)).collect();
    let class_count = noisy
        .iter()
        .chain(&clean)
        .map(|&v| v as usize + 1)
        .max()
        .unwrap_or(2)
        .max(2);

    let mut ds = LabeledDataset::new(features, dim, noisy, class_count)?;
    if clean_col.is_some() {
        ds = ds.with_clean(clean)?;
    }
    if group_col.is_some() {
        let group_count = groups.iter().map(|&g| g as usize + 1).max().unwrap_or(1);
        ds = ds.with_groups(groups, group_count)?;
    }
    Ok((ds, encoding))
}

/// Write `ds` to `path` in the canonical layout: features as `f0..f{d−1}`,
/// then `label`, then `clean` and `group` when present, with zero-based
/// labels. Floats are written in shortest round-trip form, so save → load
/// reproduces the dataset exactly.
pub fn save_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for d in 0..ds.dim() {
        let _ = write!(out, "f{d},");
    }
    out.push_str("label");
    if ds.clean_labels().is_some() {
        out.push_str(",clean");
    }
    if ds.groups().is_some() {
        out.push_str(",group");
    }
    out.push('\n');
    for i in 0..ds.len() {
        for v in ds.feature_row(i) {
            let _ = write!(out, "{v},");
        }
        let _ = write!(out, "{}", ds.noisy_labels()[i]);
        if let Some(clean) = ds.clean_labels() {
            let _ = write!(out, ",{}", clean[i]);
        }
        if let Some(groups) = ds.groups() {
            let _ = write!(out, ",{}", groups[i]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
