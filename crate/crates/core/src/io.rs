//! Plain columnar text: the exchange format for curves, traces and exports.
//!
//! Lines are whitespace- or comma-separated numbers; `#` starts a comment.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Parses rows of at least `min_cols` numeric columns. Extra columns are kept.
pub fn parse_columns(text: &str, min_cols: usize, origin: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() < min_cols {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                msg: format!("expected {min_cols} columns, found {}", fields.len()),
            });
        }
        let mut row = Vec::with_capacity(fields.len());
        for f in fields {
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(Error::Parse {
                        path: origin.to_path_buf(),
                        line: idx + 1,
                        msg: format!("not a finite number: {f:?}"),
                    })
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a two-column `(x, y)` file.
pub fn read_xy(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_columns(&text, 2, path)?;
    Ok(rows.into_iter().map(|r| (r[0], r[1])).unzip())
}

/// Renders a `#` header line followed by one line per row.
pub fn render_table<R>(
    header: &[&str],
    rows: impl IntoIterator<Item = R>,
    mut fmt_row: impl FnMut(&mut String, R),
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", header.join("\t"));
    for row in rows {
        fmt_row(&mut out, row);
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Two-column export used for drift traces, PSDs and filter curves.
pub fn xy_to_text(header: [&str; 2], xs: &[f64], ys: &[f64]) -> String {
    render_table(&header, xs.iter().zip(ys), |out, (x, y)| {
        let _ = write!(out, "{x:.9e}\t{y:.9e}");
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_separators() {
        let text = "# header\n1.0 2.0\n\n3,4 # trailing\n  5\t6\t7\n";
        let rows = parse_columns(text, 2, Path::new("x")).unwrap();
        assert_eq!(
            rows,
            vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0, 7.0]]
        );
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_columns("1 2\n3 nan\n", 2, Path::new("t.txt")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_columns("1\n", 2, Path::new("t.txt")).unwrap_err();
        assert!(err.to_string().contains("t.txt:1"));
    }
}
