//! Dense 2D/3D scalar fields with optional observation masks.

use crate::error::{Error, Result};

/// A dense scalar field over a 2D or 3D grid with power-of-two side lengths.
///
/// Values are stored row-major over the axes in order; coordinate `(c0, c1)`
/// or `(c0, c1, c2)` addresses `values[(c0 * n1 + c1) * n2 + c2]`. An optional
/// boolean mask of the same shape marks observed entries (`true` = observed).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: Vec<usize>,
    values: Vec<f64>,
    mask: Option<Vec<bool>>,
}

fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

impl Grid {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::with_mask(dims, values, None)
    }

    pub fn with_mask(dims: Vec<usize>, values: Vec<f64>, mask: Option<Vec<bool>>) -> Result<Self> {
        if dims.len() != 2 && dims.len() != 3 {
            return Err(Error::invalid(format!(
                "grid must be 2D or 3D, got {} dims",
                dims.len()
            )));
        }
        for &n in &dims {
            if !is_power_of_two(n) {
                return Err(Error::invalid(format!(
                    "grid dimension {n} is not a power of two"
                )));
            }
        }
        let total: usize = dims.iter().product();
        if values.len() != total {
            return Err(Error::shape(format!(
                "expected {} values for dims {:?}, got {}",
                total,
                dims,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("grid contains non-finite values".into()));
        }
        if let Some(m) = &mask {
            if m.len() != total {
                return Err(Error::shape(format!(
                    "mask length {} does not match {} grid entries",
                    m.len(),
                    total
                )));
            }
        }
        Ok(Grid { dims, values, mask })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let total = dims.iter().product();
        Self::new(dims, vec![0.0; total])
    }

    pub fn spatial_dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Side length, available only when all axes are equal.
    pub fn side(&self) -> Result<usize> {
        let s = self.dims[0];
        if self.dims.iter().any(|&n| n != s) {
            return Err(Error::shape(format!(
                "grid is not square/cubic: dims {:?}",
                self.dims
            )));
        }
        Ok(s)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn set_mask(&mut self, mask: Option<Vec<bool>>) -> Result<()> {
        if let Some(m) = &mask {
            if m.len() != self.values.len() {
                return Err(Error::shape(format!(
                    "mask length {} does not match {} grid entries",
                    m.len(),
                    self.values.len()
                )));
            }
        }
        self.mask = mask;
        Ok(())
    }

    pub fn linear_index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dims.len());
        let mut idx = 0;
        for (c, n) in coords.iter().zip(&self.dims) {
            debug_assert!(c < n);
            idx = idx * n + c;
        }
        idx
    }

    pub fn coords_of(&self, mut linear: usize) -> Vec<usize> {
        let mut coords = vec![0usize; self.dims.len()];
        for axis in (0..self.dims.len()).rev() {
            coords[axis] = linear % self.dims[axis];
            linear /= self.dims[axis];
        }
        coords
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.values[self.linear_index(coords)]
    }

    pub fn set(&mut self, coords: &[usize], v: f64) {
        let i = self.linear_index(coords);
        self.values[i] = v;
    }

    /// Linear indices of observed entries; all entries when no mask is set.
    pub fn observed_indices(&self) -> Vec<usize> {
        match &self.mask {
            None => (0..self.values.len()).collect(),
            Some(m) => m
                .iter()
                .enumerate()
                .filter_map(|(i, &o)| o.then_some(i))
                .collect(),
        }
    }

    pub fn observed_count(&self) -> usize {
        match &self.mask {
            None => self.values.len(),
            Some(m) => m.iter().filter(|&&o| o).count(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Mean squared difference against another grid of the same shape.
    pub fn mse(&self, other: &Grid) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "grid dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum / self.values.len() as f64)
    }
}
