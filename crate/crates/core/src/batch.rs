use crate::error::{Error, Result};

/// B samples × M real symbol dimensions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBatch {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    pub meta: String,
}

impl SymbolBatch {
    pub fn new(values: Vec<f64>, rows: usize, cols: usize, meta: impl Into<String>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidBatch(format!("shape {rows}x{cols} is empty")));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidBatch(format!(
                "{} values do not fill a {rows}x{cols} batch",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidBatch(format!(
                "non-finite entry at row {}, dim {}",
                i / cols,
                i % cols
            )));
        }
        Ok(Self { values, rows, cols, meta: meta.into() })
    }

    /// A single row of `n` scalars.
    pub fn from_scalars(values: Vec<f64>, meta: impl Into<String>) -> Result<Self> {
        let n = values.len();
        Self::new(values, 1, n, meta)
    }

    /// One dimension, `n` samples.
    pub fn column(values: Vec<f64>, meta: impl Into<String>) -> Result<Self> {
        let n = values.len();
        Self::new(values, n, 1, meta)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.values[b * self.cols..(b + 1) * self.cols]
    }

    pub fn get(&self, b: usize, i: usize) -> f64 {
        self.values[b * self.cols + i]
    }

    /// Values of dimension `i` across all samples.
    pub fn dim(&self, i: usize) -> Vec<f64> {
        (0..self.rows).map(|b| self.get(b, i)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect(), self.rows, self.cols, self.meta.clone())
    }
}

/// Population (1/n) mean and variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}
