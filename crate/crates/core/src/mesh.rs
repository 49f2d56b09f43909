//! Uniform cell-centered 1-D grids, face gradients with zero-flux (Neumann)
//! boundaries, and the discrete L², L^p and W^{1,p} norms.
//!
//! Cell `i` has center `x_i = (i + 1/2) h`. Only interior faces carry a
//! gradient; the two boundary faces have identically zero flux, which is how
//! the homogeneous Neumann condition enters every operator built on top.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform partition of `(0, length)` into `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    n_cells: usize,
    length: f64,
    h: f64,
}

impl Grid1D {
    pub fn new(n_cells: usize, length: f64) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::invalid("n_cells", format!("need at least 2 cells, got {n_cells}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid("length", format!("must be positive and finite, got {length}")));
        }
        Ok(Self { n_cells, length, h: length / n_cells as f64 })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_faces(&self) -> usize {
        self.n_cells - 1
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(move |i| self.center(i))
    }
}

/// Real values at the cell centers of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid1D,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::invalid(
                "values",
                format!("expected {} cell values, got {}", grid.n_cells(), values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("values", format!("non-finite entry at cell {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        Self { grid, values: vec![c; grid.n_cells()] }
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Self { grid, values: grid.centers().map(f).collect() }
    }

    /// Builds a field from values the caller guarantees to be finite and correctly sized.
    pub(crate) fn from_vec_unchecked(grid: Grid1D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_cells());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + alpha * b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Values on the interior faces `i + 1/2`, `i = 0..n_cells-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    values: Vec<f64>,
}

impl FaceField {
    pub fn new(grid: &Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_faces() {
            return Err(Error::invalid(
                "values",
                format!("expected {} face values, got {}", grid.n_faces(), values.len()),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

/// Face differences `(u_{i+1} - u_i) / h` on interior faces.
pub fn gradient(u: &GridFunction) -> FaceField {
    let h = u.grid.h();
    FaceField { values: u.values.windows(2).map(|w| (w[1] - w[0]) / h).collect() }
}

/// Discrete divergence of a face flux with zero boundary flux:
/// cell `i` gets `(F_{i+1/2} - F_{i-1/2}) / h`.
pub fn divergence(flux: &FaceField, grid: &Grid1D) -> GridFunction {
    let h = grid.h();
    let n = grid.n_cells();
    let f = &flux.values;
    let values = (0..n)
        .map(|i| {
            let right = if i + 1 < n { f[i] } else { 0.0 };
            let left = if i > 0 { f[i - 1] } else { 0.0 };
            (right - left) / h
        })
        .collect();
    GridFunction::from_vec_unchecked(*grid, values)
}

/// `h Σ_i u_i v_i`.
pub fn inner(u: &GridFunction, v: &GridFunction) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    u.grid.h() * u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum::<f64>()
}

/// `h Σ_f a_f b_f` over interior faces.
pub fn face_inner(a: &FaceField, b: &FaceField, grid: &Grid1D) -> f64 {
    grid.h() * a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>()
}

pub fn norm_l2(u: &GridFunction) -> f64 {
    inner(u, u).sqrt()
}

/// `h Σ_i |u_i|^p`, the p-th power of the discrete L^p norm.
pub fn norm_lp_pow(u: &GridFunction, p: f64) -> f64 {
    u.grid.h() * u.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()
}

/// p-th power of the discrete W^{1,p} norm: `h Σ_f |D_f u|^p + h Σ_i |u_i|^p`.
pub fn norm_v_p(u: &GridFunction, p: f64) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(Error::invalid("p", format!("norm requires p >= 2, got {p}")));
    }
    Ok(norm_v_p_unchecked(u, p))
}

pub(crate) fn norm_v_p_unchecked(u: &GridFunction, p: f64) -> f64 {
    let h = u.grid.h();
    let grad = gradient(u);
    h * grad.values.iter().map(|d| d.abs().powf(p)).sum::<f64>() + norm_lp_pow(u, p)
}
