//! LIBSVM text format: `label idx:val idx:val ...` with 1-based, increasing
//! feature indices. Rows are densified to the largest index seen.

use std::io::BufRead;

use thiserror::Error;
use twoway_core::Dataset;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("reading input: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Data(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    /// Labels used as real responses.
    Regression,
    /// Exactly two distinct labels; the smaller maps to −1, the larger to +1.
    Binary,
}

fn malformed(line: usize, reason: impl Into<String>) -> ParseError {
    ParseError::Malformed {
        line,
        reason: reason.into(),
    }
}

/// One parsed line: label and 0-based sparse features.
pub fn parse_line(text: &str, line: usize) -> Result<(f64, Vec<(usize, f64)>), ParseError> {
    let mut tokens = text.split_whitespace();
    let label_tok = tokens.next().ok_or_else(|| malformed(line, "missing label"))?;
    let label: f64 = label_tok
        .parse()
        .map_err(|_| malformed(line, format!("label {label_tok:?} is not a number")))?;
    if !label.is_finite() {
        return Err(malformed(line, "label is not finite"));
    }
    let mut feats = Vec::new();
    let mut last = 0usize;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| malformed(line, format!("token {tok:?} is not idx:val")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| malformed(line, format!("index {idx:?} is not a positive integer")))?;
        if idx == 0 {
            return Err(malformed(line, "feature indices are 1-based"));
        }
        if idx <= last {
            return Err(malformed(line, format!("index {idx} does not increase")));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| malformed(line, format!("value {val:?} is not a number")))?;
        if !val.is_finite() {
            return Err(malformed(line, "feature value is not finite"));
        }
        last = idx;
        feats.push((idx - 1, val));
    }
    Ok((label, feats))
}

/// Reads a whole stream. `dim` fixes the width (features beyond it are an
/// error); otherwise the width is the largest index present. Blank lines and
/// `#` comments are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R, mode: LabelMode, dim: Option<usize>) -> Result<Dataset, ParseError> {
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut width = 0usize;
    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        let body = text.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (label, feats) = parse_line(body, i + 1)?;
        if let Some((last, _)) = feats.last() {
            if let Some(d) = dim {
                if *last >= d {
                    return Err(malformed(i + 1, format!("index {} exceeds dimension {d}", last + 1)));
                }
            }
            width = width.max(last + 1);
        }
        labels.push(label);
        rows.push(feats);
    }
    let d = dim.unwrap_or(width);
    if rows.is_empty() || d == 0 {
        return Err(ParseError::Data("no samples or no features".into()));
    }

    if mode == LabelMode::Binary {
        let mut distinct: Vec<f64> = labels.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() != 2 {
            return Err(ParseError::Data(format!(
                "binary labels need exactly two distinct values, found {}",
                distinct.len()
            )));
        }
        for y in &mut labels {
            *y = if *y == distinct[0] { -1.0 } else { 1.0 };
        }
    }

    let mut dense = vec![0.0; rows.len() * d];
    for (r, feats) in rows.iter().enumerate() {
        for &(j, v) in feats {
            dense[r * d + j] = v;
        }
    }
    Dataset::new(d, dense, labels).map_err(|e| ParseError::Data(e.to_string()))
}

pub fn read_libsvm_file(path: &std::path::Path, mode: LabelMode, dim: Option<usize>) -> Result<Dataset, ParseError> {
    let file = std::fs::File::open(path)?;
    parse_libsvm(std::io::BufReader::new(file), mode, dim)
}
