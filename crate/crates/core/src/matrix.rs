use serde::{Deserialize, Serialize};

use crate::error::{check_finite, PpmError, Result};

/// Measured mutation frequencies: one row per genome position (tree node),
/// one column per sample. Stored column-major since every solver works on
/// one sample column at a time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FrequencyMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let cols = columns.len();
        if cols == 0 {
            return Err(PpmError::InvalidInput("matrix has no columns".into()));
        }
        let rows = columns[0].len();
        if rows == 0 {
            return Err(PpmError::InvalidInput("matrix has no rows".into()));
        }
        if let Some(c) = columns.iter().position(|c| c.len() != rows) {
            return Err(PpmError::InvalidInput(format!(
                "column {} has {} rows, expected {rows}",
                c + 1,
                columns[c].len()
            )));
        }
        let data: Vec<f64> = columns.into_iter().flatten().collect();
        check_finite(&data, "matrix")?;
        Ok(FrequencyMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let q = rows.len();
        if q == 0 {
            return Err(PpmError::InvalidInput("matrix has no rows".into()));
        }
        let p = rows[0].len();
        if let Some(r) = rows.iter().position(|r| r.len() != p) {
            return Err(PpmError::InvalidInput(format!(
                "row {} has {} entries, expected {p}",
                r + 1,
                rows[r].len()
            )));
        }
        let columns = (0..p).map(|s| rows.iter().map(|r| r[s]).collect()).collect();
        Self::from_columns(columns)
    }

    pub fn column_vector(values: Vec<f64>) -> Result<Self> {
        Self::from_columns(vec![values])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, s: usize) -> &[f64] {
        &self.data[s * self.rows..(s + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.rows)
    }

    pub fn get(&self, v: usize, s: usize) -> f64 {
        self.data[s * self.rows + v]
    }

    pub fn row(&self, v: usize) -> Vec<f64> {
        (0..self.cols).map(|s| self.get(v, s)).collect()
    }

    /// Samples in which node 1 does not carry the largest frequency. Every
    /// mutant carries the null mutation, so clean data never triggers this.
    pub fn columns_with_nonmaximal_root(&self) -> Vec<usize> {
        self.columns()
            .enumerate()
            .filter(|(_, c)| c.iter().skip(1).any(|&x| x > c[0]))
            .map(|(s, _)| s)
            .collect()
    }

    pub fn has_values_outside_unit_interval(&self) -> bool {
        self.data.iter().any(|&x| !(0.0..=1.0).contains(&x))
    }
}
