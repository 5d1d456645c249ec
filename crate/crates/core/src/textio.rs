//! Plain-text matrix I/O shared by embeddings and persisted projections.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Significant digits used when writing embeddings.
pub const EMBEDDING_DIGITS: usize = 6;
/// Significant digits used when writing projection matrices (round-trips f64 exactly).
pub const MATRIX_DIGITS: usize = 17;

/// Formats `x` like C's `%.{digits}g`: `digits` significant digits, trailing zeros trimmed,
/// exponent notation only for very large or very small magnitudes.
pub fn format_float(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("LowerExp always has an exponent");
    let exp: i32 = exp.parse().expect("LowerExp exponent is an integer");
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes `contents` to `path` through a sibling temp file renamed on success,
/// so a failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let result = (|| {
        let file = fs::File::create(&tmp)?;
        let mut out = BufWriter::new(file);
        write(&mut out)?;
        out.flush()?;
        drop(out);
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Writes a headerless matrix, one row per line, single-space separated.
pub fn save_matrix(matrix: &Array2<f64>, path: &Path) -> Result<()> {
    write_atomic(path, |out| {
        for row in matrix.rows() {
            let line: Vec<String> = row.iter().map(|&v| format_float(v, MATRIX_DIGITS)).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    })
}

/// Reads a headerless whitespace-separated matrix written by [`save_matrix`].
pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for field in line.split_whitespace() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(&name, idx + 1, format!("bad float {field:?}")))?;
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(Error::parse(&name, idx + 1, format!("expected {c} columns, found {count}")))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Empty(format!("matrix file {name}")))?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
}
