//! LibSVM text format: `label idx:val idx:val ...`, one row per line, 1-based
//! strictly increasing indices, `#` starting a comment.

use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::DataError;

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    /// `+1` or `-1`.
    pub label: f64,
    /// `(1-based index, value)`, indices strictly increasing.
    pub features: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RawDataset {
    pub rows: Vec<Row>,
    pub max_index: usize,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The first `k` rows (all rows when `k` exceeds the length).
    pub fn head(&self, k: usize) -> RawDataset {
        let rows: Vec<Row> = self.rows.iter().take(k).cloned().collect();
        let max_index = rows
            .iter()
            .filter_map(|r| r.features.last().map(|f| f.0))
            .max()
            .unwrap_or(0);
        RawDataset { rows, max_index }
    }
}

/// Positive raw labels map to `+1`, everything else to `-1`.
pub fn normalize_label(raw: f64) -> f64 {
    if raw > 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_line(line_no: usize, text: &str) -> Result<Option<Row>, DataError> {
    let body = match text.find('#') {
        Some(p) => &text[..p],
        None => text,
    };
    let mut tokens = body.split_whitespace();
    let Some(label_tok) = tokens.next() else {
        return Ok(None);
    };
    let raw: f64 = label_tok
        .parse()
        .map_err(|_| parse_err(line_no, format!("label {label_tok:?} is not a number")))?;
    if !raw.is_finite() {
        return Err(parse_err(line_no, format!("label {label_tok:?} is not finite")));
    }
    let mut features = Vec::new();
    let mut last = 0usize;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(line_no, format!("token {tok:?} is not index:value")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| parse_err(line_no, format!("index {idx:?} is not a positive integer")))?;
        if idx == 0 {
            return Err(parse_err(line_no, "indices are 1-based, found 0"));
        }
        if idx <= last {
            return Err(parse_err(
                line_no,
                format!("index {idx} after {last}: indices must be strictly increasing"),
            ));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| parse_err(line_no, format!("value {val:?} is not a number")))?;
        if !val.is_finite() {
            return Err(parse_err(line_no, format!("value at index {idx} is not finite")));
        }
        features.push((idx, val));
        last = idx;
    }
    Ok(Some(Row {
        label: normalize_label(raw),
        features,
    }))
}

pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<RawDataset, DataError> {
    let mut ds = RawDataset::default();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::Io {
            path: "<stream>".into(),
            message: e.to_string(),
        })?;
        if let Some(row) = parse_line(k + 1, &line)? {
            if let Some(&(idx, _)) = row.features.last() {
                ds.max_index = ds.max_index.max(idx);
            }
            ds.rows.push(row);
        }
    }
    if ds.rows.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(ds)
}

pub fn parse_libsvm_str(text: &str) -> Result<RawDataset, DataError> {
    parse_libsvm(text.as_bytes())
}

pub fn read_libsvm(path: &std::path::Path) -> Result<RawDataset, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    parse_libsvm(std::io::BufReader::new(file))
}

/// Writes rows so that [`parse_libsvm`] recovers every value bit-exactly.
pub fn serialize_libsvm(ds: &RawDataset) -> String {
    let mut out = String::new();
    for row in &ds.rows {
        out.push_str(if row.label > 0.0 { "+1" } else { "-1" });
        for &(i, v) in &row.features {
            write!(out, " {i}:{v:?}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows() {
        let ds = parse_libsvm_str("+1 1:0.5 3:2\n-1 2:1").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.max_index, 3);
        assert_eq!(ds.rows[0].features, vec![(1, 0.5), (3, 2.0)]);
        assert_eq!(ds.rows[1].label, -1.0);
    }

    #[test]
    fn zero_one_labels() {
        let ds = parse_libsvm_str("0 1:1\n1 1:1\n2 1:1\n").unwrap();
        let labels: Vec<f64> = ds.rows.iter().map(|r| r.label).collect();
        assert_eq!(labels, vec![-1.0, 1.0, 1.0]);
    }

    #[test]
    fn decreasing_index_reports_line() {
        let err = parse_libsvm_str("1 1:1\n1 2:1.0 1:1.0").unwrap_err();
        match err {
            DataError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("strictly increasing"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let ds = parse_libsvm_str("# header\n\n+1 4:1 # trailing\n").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.max_index, 4);
    }

    #[test]
    fn label_only_row_has_no_features() {
        let ds = parse_libsvm_str("-1\n").unwrap();
        assert!(ds.rows[0].features.is_empty());
        assert_eq!(ds.max_index, 0);
    }
}
