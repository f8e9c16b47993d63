//! Spatial-to-QTT index bookkeeping.
//!
//! A grid with `2^D` samples per axis in `d` dimensions is reinterpreted as a
//! `D`-mode tensor with `2^d` entries per mode. Mode `k` (0-based) packs the
//! `k`-th most significant bit of every axis, x-major:
//!
//! `idx_k = bit_k(x) * 2^(d-1) + bit_k(y) * 2^(d-2) + ...`
//!
//! so the first core selects quadrants/octants and later cores refine them.
//! The resulting tensor order is a pure permutation of the grid (`quantize_grid`
//! / `unquantize`).

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tt::DenseTensor;

/// Geometry of a quantized tensor-train: `d` spatial axes, `D` binary levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QttLayout {
    spatial_dim: usize,
    depth: usize,
}

impl QttLayout {
    pub fn new(spatial_dim: usize, depth: usize) -> Result<Self> {
        if !(1..=3).contains(&spatial_dim) {
            return Err(Error::invalid(format!(
                "spatial dimension must be 1, 2 or 3, got {spatial_dim}"
            )));
        }
        if depth == 0 {
            return Err(Error::invalid("depth must be >= 1"));
        }
        if spatial_dim * depth > 48 {
            return Err(Error::invalid(format!(
                "grid with 2^{} entries is unaddressable",
                spatial_dim * depth
            )));
        }
        Ok(QttLayout { spatial_dim, depth })
    }

    /// Layout matching a square/cubic grid; the side must be a power of two.
    pub fn for_grid(grid: &Grid) -> Result<Self> {
        let side = grid.side()?;
        let depth = side.trailing_zeros() as usize;
        if 1 << depth != side || depth == 0 {
            return Err(Error::invalid(format!(
                "grid side {side} is not 2^D with D >= 1"
            )));
        }
        QttLayout::new(grid.spatial_dim(), depth)
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Samples per axis, `2^D`.
    pub fn side(&self) -> usize {
        1 << self.depth
    }

    /// Physical dimension of each core, `2^d`.
    pub fn core_phys_dim(&self) -> usize {
        1 << self.spatial_dim
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        vec![self.core_phys_dim(); self.depth]
    }

    pub fn total_entries(&self) -> usize {
        1usize << (self.spatial_dim * self.depth)
    }

    /// Layout one level deeper (doubled side length).
    pub fn deeper(&self) -> Result<QttLayout> {
        QttLayout::new(self.spatial_dim, self.depth + 1)
    }

    /// Per-core indices for a spatial coordinate tuple.
    pub fn coords_to_qtt(&self, coords: &[usize]) -> Result<Vec<usize>> {
        self.check_coords(coords)?;
        let mut idxs = vec![0usize; self.depth];
        for (k, idx) in idxs.iter_mut().enumerate() {
            *idx = self.core_index(coords, k);
        }
        Ok(idxs)
    }

    /// Exact inverse of [`coords_to_qtt`](Self::coords_to_qtt).
    pub fn qtt_to_coords(&self, idxs: &[usize]) -> Result<Vec<usize>> {
        if idxs.len() != self.depth {
            return Err(Error::invalid(format!(
                "expected {} core indices, got {}",
                self.depth,
                idxs.len()
            )));
        }
        let m = self.core_phys_dim();
        let mut coords = vec![0usize; self.spatial_dim];
        for (k, &idx) in idxs.iter().enumerate() {
            if idx >= m {
                return Err(Error::invalid(format!(
                    "core index {idx} out of range for physical dimension {m}"
                )));
            }
            let bit_pos = self.depth - 1 - k;
            for (axis, c) in coords.iter_mut().enumerate() {
                let bit = (idx >> (self.spatial_dim - 1 - axis)) & 1;
                *c |= bit << bit_pos;
            }
        }
        Ok(coords)
    }

    /// Packed physical index of core `k` (0-based) for a coordinate tuple.
    #[inline]
    pub fn core_index(&self, coords: &[usize], k: usize) -> usize {
        let bit_pos = self.depth - 1 - k;
        let mut idx = 0usize;
        for &c in coords {
            idx = (idx << 1) | ((c >> bit_pos) & 1);
        }
        idx
    }

    /// Linear index into the quantized tensor (row-major over core indices).
    pub fn quantized_index(&self, coords: &[usize]) -> usize {
        let mut q = 0usize;
        for k in 0..self.depth {
            q = (q << self.spatial_dim) | self.core_index(coords, k);
        }
        q
    }

    fn check_coords(&self, coords: &[usize]) -> Result<()> {
        if coords.len() != self.spatial_dim {
            return Err(Error::invalid(format!(
                "expected {} coordinates, got {}",
                self.spatial_dim,
                coords.len()
            )));
        }
        let side = self.side();
        for &c in coords {
            if c >= side {
                return Err(Error::invalid(format!(
                    "coordinate {c} out of range for side {side}"
                )));
            }
        }
        Ok(())
    }

    /// Permute a grid into the interleaved multi-mode tensor order.
    pub fn quantize_grid(&self, grid: &Grid) -> Result<DenseTensor> {
        let side = grid.side()?;
        if grid.spatial_dim() != self.spatial_dim || side != self.side() {
            return Err(Error::shape(format!(
                "grid dims {:?} do not match layout (d={}, D={})",
                grid.dims(),
                self.spatial_dim,
                self.depth
            )));
        }
        let mut data = vec![0.0; grid.len()];
        let mut coords = vec![0usize; self.spatial_dim];
        for lin in 0..grid.len() {
            self.linear_to_coords(lin, &mut coords);
            data[self.quantized_index(&coords)] = grid.values()[lin];
        }
        DenseTensor::new(self.phys_dims(), data)
    }

    /// Inverse permutation of [`quantize_grid`](Self::quantize_grid).
    pub fn unquantize(&self, tensor: &DenseTensor) -> Result<Grid> {
        if tensor.dims() != self.phys_dims().as_slice() {
            return Err(Error::shape(format!(
                "tensor dims {:?} do not match layout (d={}, D={})",
                tensor.dims(),
                self.spatial_dim,
                self.depth
            )));
        }
        let side = self.side();
        let mut values = vec![0.0; tensor.len()];
        let mut coords = vec![0usize; self.spatial_dim];
        for lin in 0..values.len() {
            self.linear_to_coords(lin, &mut coords);
            values[lin] = tensor.data()[self.quantized_index(&coords)];
        }
        Grid::new(vec![side; self.spatial_dim], values)
    }

    /// Decode a row-major grid linear index into spatial coordinates.
    #[inline]
    pub fn linear_to_coords(&self, mut linear: usize, coords: &mut [usize]) {
        let side = self.side();
        for axis in (0..self.spatial_dim).rev() {
            coords[axis] = linear & (side - 1);
            linear >>= self.depth;
        }
    }
}
