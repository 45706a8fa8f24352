//! Uniform square grids and scalar fields on them.
//!
//! Cells are indexed `(i, j)` with `i` the x index and `j` the y index, both
//! in `0..n`. Arrays are stored row-major in `i`, so flat index `i * n + j`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary handling for stencil extraction at the domain edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    /// Out-of-range neighbors mirror the nearest interior cell (zero normal
    /// derivative).
    ZeroGradient,
    /// Indices wrap modulo the grid size.
    Periodic,
}

/// Geometry of a uniform n-by-n grid over a square of side `length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    length: f64,
}

impl GridSpec {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidSpec(format!(
                "grid size {n} is below the 5-point stencil minimum of 3"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "domain length must be positive and finite, got {length}"
            )));
        }
        Ok(Self { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn cell_spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Cell-center coordinate of index `k` along either axis.
    pub fn coord(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.cell_spacing()
    }
}

/// Scalar state snapshot on a grid, tagged with its boundary condition and
/// simulation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid: GridSpec,
    pub boundary: BoundaryCondition,
    pub values: Array2<f64>,
    pub time: f64,
}

impl Field2D {
    pub fn new(grid: GridSpec, boundary: BoundaryCondition, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.n(), grid.n()) {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "field values are {:?}, grid expects ({}, {})",
                    values.dim(),
                    grid.n(),
                    grid.n()
                ),
            });
        }
        Ok(Self {
            grid,
            boundary,
            values,
            time: 0.0,
        })
    }

    pub fn zeros(grid: GridSpec, boundary: BoundaryCondition) -> Self {
        Self {
            grid,
            boundary,
            values: Array2::zeros((grid.n(), grid.n())),
            time: 0.0,
        }
    }

    pub fn constant(grid: GridSpec, boundary: BoundaryCondition, value: f64) -> Self {
        Self {
            grid,
            boundary,
            values: Array2::from_elem((grid.n(), grid.n()), value),
            time: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn mean(&self) -> f64 {
        self.values.sum() / (self.values.len() as f64)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the first non-finite cell, if any, in row-major order.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                if !self.values[(i, j)].is_finite() {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Clamp all values into `[lo, hi]` in place.
    pub fn clamp(&mut self, lo: f64, hi: f64) {
        self.values.mapv_inplace(|v| v.clamp(lo, hi));
    }
}
