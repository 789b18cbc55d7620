//! Paired multivariate samples `(X_i, Y_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N` i.i.d. pairs with `X ∈ ℝ^q` and `Y ∈ ℝ^l`, stored row-major and
/// immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDataset {
    x: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    dim_x: usize,
    dim_y: usize,
    x_names: Vec<String>,
    y_names: Vec<String>,
}

impl PairedDataset {
    /// Build from flat row-major blocks: `x` has `n * dim_x` entries, `y` has
    /// `n * dim_y`. Requires `n >= 2`, `dim_x, dim_y >= 1` and finite entries.
    pub fn from_flat(x: Vec<f64>, y: Vec<f64>, n: usize, dim_x: usize, dim_y: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 pairs, got {n}")));
        }
        if dim_x == 0 || dim_y == 0 {
            return Err(Error::invalid("dim_x and dim_y must be >= 1"));
        }
        if x.len() != n * dim_x || y.len() != n * dim_y {
            return Err(Error::invalid(format!(
                "block sizes do not match n: |x| = {} (expected {}), |y| = {} (expected {})",
                x.len(),
                n * dim_x,
                y.len(),
                n * dim_y
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("all entries must be finite"));
        }
        let x_names = (1..=dim_x).map(|j| format!("x{j}")).collect();
        let y_names = (1..=dim_y).map(|j| format!("y{j}")).collect();
        Ok(PairedDataset {
            x,
            y,
            n,
            dim_x,
            dim_y,
            x_names,
            y_names,
        })
    }

    /// Build from per-row vectors.
    pub fn from_rows(x_rows: &[Vec<f64>], y_rows: &[Vec<f64>]) -> Result<Self> {
        if x_rows.len() != y_rows.len() {
            return Err(Error::invalid(format!(
                "x and y must have the same number of rows ({} vs {})",
                x_rows.len(),
                y_rows.len()
            )));
        }
        let n = x_rows.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 pairs, got {n}")));
        }
        let dim_x = x_rows[0].len();
        let dim_y = y_rows[0].len();
        if x_rows.iter().any(|r| r.len() != dim_x) || y_rows.iter().any(|r| r.len() != dim_y) {
            return Err(Error::invalid("ragged rows"));
        }
        let x: Vec<f64> = x_rows.iter().flatten().copied().collect();
        let y: Vec<f64> = y_rows.iter().flatten().copied().collect();
        Self::from_flat(x, y, n, dim_x, dim_y)
    }

    pub fn with_names(mut self, x_names: Vec<String>, y_names: Vec<String>) -> Result<Self> {
        if x_names.len() != self.dim_x || y_names.len() != self.dim_y {
            return Err(Error::invalid("column name counts do not match dimensions"));
        }
        self.x_names = x_names;
        self.y_names = y_names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    /// Total pair dimension `q + l`.
    pub fn dim(&self) -> usize {
        self.dim_x + self.dim_y
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim_x..(i + 1) * self.dim_x]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.dim_y..(i + 1) * self.dim_y]
    }

    pub fn x_flat(&self) -> &[f64] {
        &self.x
    }

    pub fn y_flat(&self) -> &[f64] {
        &self.y
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn y_names(&self) -> &[String] {
        &self.y_names
    }

    /// Concatenated feature vector `(x_row(ix), y_row(iy))`; the two indices
    /// differ exactly on shuffled (negative) pairs.
    pub fn pair_features(&self, ix: usize, iy: usize) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        z.extend_from_slice(self.x_row(ix));
        z.extend_from_slice(self.y_row(iy));
        z
    }

    /// Dataset with the roles of the two blocks exchanged.
    pub fn swap_blocks(&self) -> PairedDataset {
        PairedDataset {
            x: self.y.clone(),
            y: self.x.clone(),
            n: self.n,
            dim_x: self.dim_y,
            dim_y: self.dim_x,
            x_names: self.y_names.clone(),
            y_names: self.x_names.clone(),
        }
    }

    /// Dataset restricted to the given rows (duplicates allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Result<PairedDataset> {
        if rows.len() < 2 {
            return Err(Error::invalid("need at least 2 selected rows"));
        }
        let mut x = Vec::with_capacity(rows.len() * self.dim_x);
        let mut y = Vec::with_capacity(rows.len() * self.dim_y);
        for &i in rows {
            if i >= self.n {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            x.extend_from_slice(self.x_row(i));
            y.extend_from_slice(self.y_row(i));
        }
        let ds = Self::from_flat(x, y, rows.len(), self.dim_x, self.dim_y)?;
        ds.with_names(self.x_names.clone(), self.y_names.clone())
    }
}
