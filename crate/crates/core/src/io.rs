//! Small CSV dump helpers (full 17-significant-digit precision).

use std::io::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::linalg::Matrix;

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols())
            .map(|j| format!("{:.16e}", m[(i, j)]))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_vector_csv(path: &Path, v: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for x in v {
        writeln!(out, "{:.16e}", x)?;
    }
    Ok(())
}
