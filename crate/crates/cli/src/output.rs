//! CSV and JSON emission. Files are written to a temporary file in the
//! output directory and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// 17 significant digits: parses back to the same `f64`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub struct Out {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Out {
    pub fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Out { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write_atomic(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let dest = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        tmp.write_all(bytes).map_err(|e| CliError::io(&dest, e))?;
        tmp.persist(&dest).map_err(|e| CliError::io(&dest, e.error))?;
        self.written.push(dest);
        Ok(())
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.write_atomic(name, s.as_bytes())
    }

    /// Square matrix with header `s0,...,sN`.
    pub fn matrix(&mut self, name: &str, m: &DMatrix<f64>) -> CliResult<()> {
        let header: Vec<String> = (0..m.ncols()).map(|j| format!("s{j}")).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = m.row_iter().map(|r| r.iter().map(|&v| num(v)).collect()).collect();
        self.table(name, &header, &rows)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).expect("serializable report");
        s.push('\n');
        self.write_atomic(name, s.as_bytes())
    }
}

/// Read a matrix written by [`Out::matrix`].
pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |message: String| CliError::Csv { path: path.to_path_buf(), message };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| bad(format!("line {}: {e}", i + 1))))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(bad(format!("expected a square matrix, got {n} rows")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}
