//! Row-major (de)serialization of dense matrices.

use nalgebra::DMatrix;

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `cols` is needed for matrices with no rows.
pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>, String> {
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(format!("row {bad} has {} entries, expected {cols}", rows[bad].len()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}
