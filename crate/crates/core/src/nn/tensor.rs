//! Minimal dense 2-D tensor: rows are time steps, columns are channels.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid model spec: {0}")]
    BadSpec(String),
    #[error("weight file i/o: {0}")]
    Io(String),
    #[error("weight file has wrong magic bytes")]
    BadMagic,
    #[error("weight file version {0} is not supported")]
    BadVersion(u32),
    #[error("checksum mismatch in parameter block {0}")]
    ChecksumMismatch(String),
    #[error("weight file spec does not match: {0}")]
    SpecMismatch(String),
}

impl From<std::io::Error> for NnError {
    fn from(e: std::io::Error) -> Self {
        NnError::Io(e.to_string())
    }
}

/// Row-major `rows x cols` matrix of f64; rows index time, columns channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds from row slices; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(NnError::ShapeMismatch {
                    expected: format!("row of {c}"),
                    got: format!("row {i} of {}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// New tensor with row 0 dropped and `new_row` appended at the bottom:
    /// the sliding-window advance used by autoregressive rollouts.
    pub fn advanced(&self, new_row: &[f64]) -> Result<Self, NnError> {
        if new_row.len() != self.cols {
            return Err(NnError::ShapeMismatch {
                expected: format!("{} columns", self.cols),
                got: format!("{}", new_row.len()),
            });
        }
        let mut data = Vec::with_capacity(self.data.len());
        data.extend_from_slice(&self.data[self.cols..]);
        data.extend_from_slice(new_row);
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_rows_checks_widths() {
        let t = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!((t.rows(), t.cols()), (2, 2));
        assert_eq!(t.get(1, 0), 3.0);
        assert!(Tensor2::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn advance_slides_the_window() {
        let t = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let t2 = t.advanced(&[5.0, 6.0]).unwrap();
        assert_eq!(t2.row(0), &[3.0, 4.0]);
        assert_eq!(t2.row(1), &[5.0, 6.0]);
        assert!(t.advanced(&[1.0]).is_err());
    }
}
