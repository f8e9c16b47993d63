//! Tensor-train data model: construction, evaluation, densification.
//!
//! A train over modes `n_1..n_D` stores one order-3 core per mode, core `k`
//! shaped `[R_k, n_k, R_{k+1}]` with boundary bonds `R_1 = R_{D+1} = 1`. The
//! tensor entry at a multi-index is the chain product of the selected core
//! slices.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::layout::QttLayout;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Default cap on densification size, overridable per call.
pub const DEFAULT_DENSE_CAP: usize = 1 << 24;

/// Order-3 TT core laid out row-major as `[left][phys][right]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    pub left: usize,
    pub phys: usize,
    pub right: usize,
    pub data: Vec<f64>,
}

impl Core {
    pub fn zeros(left: usize, phys: usize, right: usize) -> Core {
        Core {
            left,
            phys,
            right,
            data: vec![0.0; left * phys * right],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, j: usize, rp: usize) -> f64 {
        self.data[(r * self.phys + j) * self.right + rp]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, j: usize, rp: usize) -> &mut f64 {
        &mut self.data[(r * self.phys + j) * self.right + rp]
    }

    /// Contiguous row `(r, j, ..)` of the slice matrix `A^j`.
    #[inline]
    pub fn row(&self, r: usize, j: usize) -> &[f64] {
        let start = (r * self.phys + j) * self.right;
        &self.data[start..start + self.right]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// A tensor train; see module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain {
    cores: Vec<Core>,
}

/// Dense row-major multi-mode tensor (test oracles, TT-SVD input).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let total: usize = dims.iter().product();
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::invalid(format!("bad tensor dims {dims:?}")));
        }
        if data.len() != total {
            return Err(Error::shape(format!(
                "expected {} entries for dims {:?}, got {}",
                total,
                dims,
                data.len()
            )));
        }
        Ok(DenseTensor { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Relative Frobenius distance to another tensor of the same shape.
    pub fn rel_err(&self, other: &DenseTensor) -> f64 {
        assert_eq!(self.dims, other.dims);
        let num: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        num / other.frobenius_norm().max(1e-300)
    }
}

/// A batch of per-core index tuples, row-major `[len][depth]`.
///
/// Physical dimensions never exceed 8 for QTT use, so indices pack into bytes.
#[derive(Debug, Clone)]
pub struct IndexBatch {
    depth: usize,
    data: Vec<u8>,
}

impl IndexBatch {
    pub fn new(depth: usize) -> IndexBatch {
        IndexBatch {
            depth,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(depth: usize, rows: usize) -> IndexBatch {
        IndexBatch {
            depth,
            data: Vec::with_capacity(depth * rows),
        }
    }

    pub fn push(&mut self, idxs: &[usize]) {
        debug_assert_eq!(idxs.len(), self.depth);
        assert!(
            idxs.iter().all(|&i| i < 256),
            "index batches encode physical indices as bytes"
        );
        self.data.extend(idxs.iter().map(|&i| i as u8));
    }

    /// Append the QTT indices of a grid point given by its linear index.
    pub fn push_linear(&mut self, layout: &QttLayout, coords_buf: &mut [usize], linear: usize) {
        layout.linear_to_coords(linear, coords_buf);
        for k in 0..self.depth {
            self.data.push(layout.core_index(coords_buf, k) as u8);
        }
    }

    pub fn from_linear(layout: &QttLayout, linear: &[usize]) -> IndexBatch {
        let mut b = IndexBatch::with_capacity(layout.depth(), linear.len());
        let mut coords = vec![0usize; layout.spatial_dim()];
        for &lin in linear {
            b.push_linear(layout, &mut coords, lin);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.depth).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.depth..(i + 1) * self.depth]
    }
}

impl TensorTrain {
    pub fn from_cores(cores: Vec<Core>) -> Result<TensorTrain> {
        if cores.is_empty() {
            return Err(Error::invalid("tensor train needs at least one core"));
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(Error::invalid("boundary bond dimensions must be 1"));
        }
        for w in cores.windows(2) {
            if w[0].right != w[1].left {
                return Err(Error::shape(format!(
                    "adjacent cores disagree on bond: {} vs {}",
                    w[0].right, w[1].left
                )));
            }
        }
        for (k, c) in cores.iter().enumerate() {
            if c.phys == 0 || c.left == 0 || c.right == 0 {
                return Err(Error::invalid(format!("core {k} has a zero dimension")));
            }
            if c.data.len() != c.left * c.phys * c.right {
                return Err(Error::shape(format!("core {k} data length mismatch")));
            }
            if c.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("core {k} has non-finite entries")));
            }
        }
        Ok(TensorTrain { cores })
    }

    /// Rank-1 train representing a constant field.
    pub fn constant(phys_dims: &[usize], value: f64) -> Result<TensorTrain> {
        if phys_dims.is_empty() {
            return Err(Error::invalid("empty mode list"));
        }
        let mut cores = Vec::with_capacity(phys_dims.len());
        for (k, &n) in phys_dims.iter().enumerate() {
            let fill = if k == 0 { value } else { 1.0 };
            let mut c = Core::zeros(1, n, 1);
            c.data.fill(fill);
            cores.push(c);
        }
        TensorTrain::from_cores(cores)
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn cores_mut(&mut self) -> &mut [Core] {
        &mut self.cores
    }

    pub fn into_cores(self) -> Vec<Core> {
        self.cores
    }

    pub fn num_cores(&self) -> usize {
        self.cores.len()
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.phys).collect()
    }

    /// Bond dimensions `R_1..R_{D+1}` including the boundary 1s.
    pub fn rank_profile(&self) -> Vec<usize> {
        let mut p = Vec::with_capacity(self.cores.len() + 1);
        p.push(self.cores[0].left);
        for c in &self.cores {
            p.push(c.right);
        }
        p
    }

    pub fn max_rank(&self) -> usize {
        self.rank_profile().into_iter().max().unwrap_or(1)
    }

    /// Total stored parameters, `sum_k R_k * n_k * R_{k+1}`.
    pub fn param_count(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    pub fn assert_finite(&self) -> Result<()> {
        for (k, c) in self.cores.iter().enumerate() {
            if c.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("core {k} has non-finite entries")));
            }
        }
        Ok(())
    }

    fn check_indices(&self, idxs: &[u8]) -> Result<()> {
        if idxs.len() != self.cores.len() {
            return Err(Error::invalid(format!(
                "expected {} indices, got {}",
                self.cores.len(),
                idxs.len()
            )));
        }
        for (c, &j) in self.cores.iter().zip(idxs) {
            if j as usize >= c.phys {
                return Err(Error::invalid(format!(
                    "physical index {j} out of range for mode of size {}",
                    c.phys
                )));
            }
        }
        Ok(())
    }

    /// Chain-product evaluation at a single multi-index.
    pub fn eval(&self, idxs: &[usize]) -> Result<f64> {
        if idxs.len() != self.cores.len() {
            return Err(Error::invalid(format!(
                "expected {} indices, got {}",
                self.cores.len(),
                idxs.len()
            )));
        }
        for (c, &j) in self.cores.iter().zip(idxs) {
            if j >= c.phys {
                return Err(Error::invalid(format!(
                    "physical index {j} out of range for mode of size {}",
                    c.phys
                )));
            }
        }
        let max_rank = self.max_rank();
        let mut cur = vec![0.0; max_rank];
        let mut next = vec![0.0; max_rank];
        cur[0] = 1.0;
        let mut width = 1usize;
        for (core, &j) in self.cores.iter().zip(idxs) {
            let right = core.right;
            next[..right].fill(0.0);
            for (r, &v) in cur[..width].iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                for (n, &a) in next[..right].iter_mut().zip(core.row(r, j)) {
                    *n += v * a;
                }
            }
            cur[..right].copy_from_slice(&next[..right]);
            width = right;
        }
        Ok(cur[0])
    }

    /// Unchecked single-sample chain product using caller scratch buffers.
    #[inline]
    pub(crate) fn eval_row(&self, idxs: &[u8], cur: &mut [f64], next: &mut [f64]) -> f64 {
        cur[0] = 1.0;
        let mut width = 1usize;
        for (core, &j) in self.cores.iter().zip(idxs) {
            let right = core.right;
            next[..right].fill(0.0);
            for (r, &v) in cur[..width].iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let row = core.row(r, j as usize);
                for (n, &a) in next[..right].iter_mut().zip(row) {
                    *n += v * a;
                }
            }
            cur[..right].copy_from_slice(&next[..right]);
            width = right;
        }
        cur[0]
    }

    /// Evaluate many multi-indices; pure, deterministic, batch-parallel.
    pub fn eval_batch(&self, batch: &IndexBatch) -> Result<Vec<f64>> {
        if batch.depth() != self.cores.len() {
            return Err(Error::invalid(format!(
                "index tuples have {} entries, train has {} cores",
                batch.depth(),
                self.cores.len()
            )));
        }
        for i in 0..batch.len() {
            self.check_indices(batch.row(i))?;
        }
        let max_rank = self.max_rank();
        let n = batch.len();
        let chunk = 1024usize;
        let mut out = vec![0.0; n];
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(ci, chunk_out)| {
                let mut cur = vec![0.0; max_rank];
                let mut next = vec![0.0; max_rank];
                let base = ci * chunk;
                for (o, i) in chunk_out.iter_mut().zip(base..) {
                    *o = self.eval_row(batch.row(i), &mut cur, &mut next);
                }
            });
        Ok(out)
    }

    /// Full contraction to a dense tensor in quantized (mode) order.
    pub fn to_dense_tensor(&self, cap: usize) -> Result<DenseTensor> {
        let total: usize = self.phys_dims().iter().product();
        if total > cap {
            return Err(Error::ResourceLimit(format!(
                "densification of {total} entries exceeds cap {cap}"
            )));
        }
        // acc: [p][r] row-major, p = product of processed modes
        let mut acc = vec![1.0f64];
        let mut p = 1usize;
        let mut rank = 1usize;
        for core in &self.cores {
            let right = core.right;
            let new_len = p
                .checked_mul(core.phys)
                .and_then(|v| v.checked_mul(right))
                .ok_or_else(|| Error::ResourceLimit("densification overflow".into()))?;
            if new_len > cap.saturating_mul(64) {
                return Err(Error::ResourceLimit(format!(
                    "densification intermediate of {new_len} entries exceeds cap"
                )));
            }
            let mut next = vec![0.0f64; new_len];
            for pi in 0..p {
                let arow = &acc[pi * rank..(pi + 1) * rank];
                for j in 0..core.phys {
                    let orow = &mut next[(pi * core.phys + j) * right..][..right];
                    for (r, &v) in arow.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let crow = core.row(r, j);
                        for (o, &c) in orow.iter_mut().zip(crow) {
                            *o += v * c;
                        }
                    }
                }
            }
            acc = next;
            p *= core.phys;
            rank = right;
        }
        DenseTensor::new(self.phys_dims(), acc)
    }

    /// Densify and undo the quantization permutation, yielding the grid.
    pub fn to_dense(&self, layout: &QttLayout, cap: usize) -> Result<Grid> {
        if self.phys_dims() != layout.phys_dims() {
            return Err(Error::shape(format!(
                "train modes {:?} do not match layout (d={}, D={})",
                self.phys_dims(),
                layout.spatial_dim(),
                layout.depth()
            )));
        }
        let t = self.to_dense_tensor(cap)?;
        layout.unquantize(&t)
    }
}

/// Trapezoid rank profile: the internal bond after mode `k` is
/// `min(prod of left mode sizes, prod of right mode sizes, r_max)`.
pub fn trapezoid_ranks(phys_dims: &[usize], r_max: usize) -> Result<Vec<usize>> {
    if phys_dims.is_empty() {
        return Err(Error::invalid("empty mode list"));
    }
    if phys_dims.contains(&0) {
        return Err(Error::invalid("mode sizes must be >= 1"));
    }
    if r_max == 0 {
        return Err(Error::invalid("r_max must be >= 1"));
    }
    let d = phys_dims.len();
    const CAP: usize = 1 << 62;
    let mut left = vec![1usize; d + 1];
    for k in 0..d {
        left[k + 1] = left[k].saturating_mul(phys_dims[k]).min(CAP);
    }
    let mut right = vec![1usize; d + 1];
    for k in (0..d).rev() {
        right[k] = right[k + 1].saturating_mul(phys_dims[k]).min(CAP);
    }
    let mut profile = vec![1usize; d + 1];
    for k in 1..d {
        profile[k] = left[k].min(right[k]).min(r_max);
    }
    Ok(profile)
}

/// Per-core standard deviation that makes a random train's entries have
/// standard deviation `target_sigma`:
/// `sigma_hat = exp((2 ln sigma - sum_i ln R_i) / (2D))`.
pub fn init_sigma(target_sigma: f64, rank_profile: &[usize]) -> Result<f64> {
    if !(target_sigma > 0.0) || !target_sigma.is_finite() {
        return Err(Error::invalid(format!(
            "target sigma must be positive, got {target_sigma}"
        )));
    }
    if rank_profile.len() < 2 || rank_profile.contains(&0) {
        return Err(Error::invalid(format!("bad rank profile {rank_profile:?}")));
    }
    let depth = (rank_profile.len() - 1) as f64;
    let log_rank_sum: f64 = rank_profile.iter().map(|&r| (r as f64).ln()).sum();
    Ok(((2.0 * target_sigma.ln() - log_rank_sum) / (2.0 * depth)).exp())
}

/// Seeded random train with a trapezoid rank profile and i.i.d. normal cores
/// scaled so that reconstructed entries have std `sigma`.
pub fn random_tt(layout: &QttLayout, r_max: usize, sigma: f64, seed: u64) -> Result<TensorTrain> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    random_tt_with_dims(&layout.phys_dims(), r_max, sigma, &mut rng)
}

/// As [`random_tt`] but over arbitrary mode sizes and an external RNG.
pub fn random_tt_with_dims(
    phys_dims: &[usize],
    r_max: usize,
    sigma: f64,
    rng: &mut ChaCha12Rng,
) -> Result<TensorTrain> {
    let profile = trapezoid_ranks(phys_dims, r_max)?;
    let core_sigma = init_sigma(sigma, &profile)?;
    let mut cores = Vec::with_capacity(phys_dims.len());
    for (k, &n) in phys_dims.iter().enumerate() {
        let mut core = Core::zeros(profile[k], n, profile[k + 1]);
        for v in core.data.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = core_sigma * z;
        }
        cores.push(core);
    }
    TensorTrain::from_cores(cores)
}
