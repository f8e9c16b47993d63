//! CP and Tucker gradient-fit baselines sharing the sampling harness and
//! optimizer of the tensor-train trainer.
//!
//! Both models address grids by raw spatial coordinates (no quantization).
//! Their coarse-to-fine variant linearly interpolates the spatial factors to
//! twice the length at each upsampling event instead of applying an MPO.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::optim::{lr_at, AdamState, LrSchedule, StepInfo, TraceRow, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// Canonical polyadic model: per-mode factors `v^k` of shape `[n_k, R]`;
/// an entry is `sum_r prod_k v^k[j_k, r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpModel {
    pub rank: usize,
    /// factor k, row-major `[dims[k]][rank]`
    pub factors: Vec<Vec<f64>>,
    pub dims: Vec<usize>,
}

/// Tucker model: core of shape `m_1 x .. x m_d` and factors `U^k` of shape
/// `[m_k, n_k]`; an entry contracts the core with one factor column per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerModel {
    pub core_dims: Vec<usize>,
    pub core: Vec<f64>,
    /// factor k, row-major `[core_dims[k]][dims[k]]`
    pub factors: Vec<Vec<f64>>,
    pub dims: Vec<usize>,
}

impl CpModel {
    pub fn random(
        dims: &[usize],
        rank: usize,
        target_std: f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<CpModel> {
        if rank == 0 || dims.is_empty() {
            return Err(Error::invalid("CP rank and mode count must be >= 1"));
        }
        // entry variance of i.i.d. factors is R * s^(2d); match target_std
        let d = dims.len() as f64;
        let s = (target_std * target_std / rank as f64).powf(1.0 / (2.0 * d));
        let factors = dims
            .iter()
            .map(|&n| gaussian_vec(n * rank, s, rng))
            .collect();
        Ok(CpModel {
            rank,
            factors,
            dims: dims.to_vec(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.factors.iter().map(Vec::len).sum()
    }

    pub fn eval(&self, coords: &[usize]) -> Result<f64> {
        self.check(coords)?;
        let mut prod = vec![1.0f64; self.rank];
        for (k, &j) in coords.iter().enumerate() {
            let row = &self.factors[k][j * self.rank..(j + 1) * self.rank];
            for (p, &v) in prod.iter_mut().zip(row) {
                *p *= v;
            }
        }
        Ok(prod.iter().sum())
    }

    pub fn eval_batch(&self, coords: &[Vec<usize>]) -> Result<Vec<f64>> {
        coords.iter().map(|c| self.eval(c)).collect()
    }

    fn check(&self, coords: &[usize]) -> Result<()> {
        if coords.len() != self.dims.len() {
            return Err(Error::invalid(format!(
                "expected {} coordinates, got {}",
                self.dims.len(),
                coords.len()
            )));
        }
        for (c, n) in coords.iter().zip(&self.dims) {
            if c >= n {
                return Err(Error::invalid(format!(
                    "coordinate {c} out of range for mode of size {n}"
                )));
            }
        }
        Ok(())
    }
}

impl TuckerModel {
    pub fn random(
        dims: &[usize],
        core_dim: usize,
        target_std: f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<TuckerModel> {
        if core_dim == 0 || dims.is_empty() {
            return Err(Error::invalid("Tucker core dimension must be >= 1"));
        }
        let core_dims: Vec<usize> = dims.iter().map(|&n| core_dim.min(n)).collect();
        let core_len: usize = core_dims.iter().product();
        // entry variance is prod(m) * s^(2(d+1)); match target_std
        let d = dims.len() as f64;
        let s = (target_std * target_std / core_len as f64).powf(1.0 / (2.0 * (d + 1.0)));
        let core = gaussian_vec(core_len, s, rng);
        let factors = core_dims
            .iter()
            .zip(dims)
            .map(|(&m, &n)| gaussian_vec(m * n, s, rng))
            .collect();
        Ok(TuckerModel {
            core_dims,
            core,
            factors,
            dims: dims.to_vec(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.core.len() + self.factors.iter().map(Vec::len).sum::<usize>()
    }

    /// Contract the core with the factor column selected per mode.
    pub fn eval(&self, coords: &[usize]) -> Result<f64> {
        self.check(coords)?;
        let mut acc = self.core.clone();
        let mut tail: usize = self.core_dims.iter().product();
        for (k, &m) in self.core_dims.iter().enumerate() {
            let n = self.dims[k];
            let j = coords[k];
            tail /= m;
            let mut next = vec![0.0f64; tail];
            for i in 0..m {
                let u = self.factors[k][i * n + j];
                if u == 0.0 {
                    continue;
                }
                let block = &acc[i * tail..(i + 1) * tail];
                for (o, &b) in next.iter_mut().zip(block) {
                    *o += u * b;
                }
            }
            acc = next;
        }
        Ok(acc[0])
    }

    pub fn eval_batch(&self, coords: &[Vec<usize>]) -> Result<Vec<f64>> {
        coords.iter().map(|c| self.eval(c)).collect()
    }

    fn check(&self, coords: &[usize]) -> Result<()> {
        if coords.len() != self.dims.len() {
            return Err(Error::invalid(format!(
                "expected {} coordinates, got {}",
                self.dims.len(),
                coords.len()
            )));
        }
        for (c, n) in coords.iter().zip(&self.dims) {
            if c >= n {
                return Err(Error::invalid(format!(
                    "coordinate {c} out of range for mode of size {n}"
                )));
            }
        }
        Ok(())
    }
}

fn gaussian_vec(n: usize, std: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

/// Analytic MSE gradients for a CP model over a coordinate batch. Gradient
/// groups are the per-mode factors, in order.
pub fn cp_grad_mse(
    model: &CpModel,
    batch: &[Vec<usize>],
    targets: &[f64],
) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(Error::invalid("empty or mismatched batch"));
    }
    let d = model.dims.len();
    let rank = model.rank;
    let mut grads: Vec<Vec<f64>> = model.factors.iter().map(|f| vec![0.0; f.len()]).collect();
    let mut loss = 0.0;
    // prefix[k] = elementwise product of rows 0..k, suffix likewise from the right
    let mut prefix = vec![1.0f64; (d + 1) * rank];
    let mut suffix = vec![1.0f64; (d + 1) * rank];
    for (coords, &y) in batch.iter().zip(targets) {
        model.check(coords)?;
        prefix[..rank].fill(1.0);
        for k in 0..d {
            let row = &model.factors[k][coords[k] * rank..(coords[k] + 1) * rank];
            let (lo, hi) = prefix.split_at_mut((k + 1) * rank);
            let src = &lo[k * rank..];
            for r in 0..rank {
                hi[r] = src[r] * row[r];
            }
        }
        suffix[d * rank..].fill(1.0);
        for k in (0..d).rev() {
            let row = &model.factors[k][coords[k] * rank..(coords[k] + 1) * rank];
            let (lo, hi) = suffix.split_at_mut((k + 1) * rank);
            let dst = &mut lo[k * rank..];
            let src = &hi[..rank];
            for r in 0..rank {
                dst[r] = src[r] * row[r];
            }
        }
        let value: f64 = (0..rank).map(|r| prefix[d * rank + r]).sum();
        let residual = value - y;
        loss += residual * residual;
        for k in 0..d {
            let g = &mut grads[k][coords[k] * rank..(coords[k] + 1) * rank];
            for r in 0..rank {
                g[r] += residual * prefix[k * rank + r] * suffix[(k + 1) * rank + r];
            }
        }
    }
    let scale = 2.0 / batch.len() as f64;
    for g in &mut grads {
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    Ok((loss / batch.len() as f64, grads))
}

/// Analytic MSE gradients for a Tucker model. Gradient groups are the core
/// followed by the per-mode factors.
pub fn tucker_grad_mse(
    model: &TuckerModel,
    batch: &[Vec<usize>],
    targets: &[f64],
) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(Error::invalid("empty or mismatched batch"));
    }
    let d = model.dims.len();
    let mdims = &model.core_dims;
    let mut grads: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    grads.push(vec![0.0; model.core.len()]);
    for f in &model.factors {
        grads.push(vec![0.0; f.len()]);
    }
    let mut loss = 0.0;
    for (coords, &y) in batch.iter().zip(targets) {
        model.check(coords)?;
        // u^k = column j_k of factor k
        let us: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                let n = model.dims[k];
                (0..mdims[k])
                    .map(|i| model.factors[k][i * n + coords[k]])
                    .collect()
            })
            .collect();
        // forward partials: front[k] = core contracted with u^0..u^{k-1}
        let mut front: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
        front.push(model.core.clone());
        let mut tail: usize = model.core.len();
        for k in 0..d {
            let m = mdims[k];
            tail /= m;
            let prev = &front[k];
            let mut next = vec![0.0f64; tail];
            for i in 0..m {
                let u = us[k][i];
                if u == 0.0 {
                    continue;
                }
                for (o, &b) in next.iter_mut().zip(&prev[i * tail..(i + 1) * tail]) {
                    *o += u * b;
                }
            }
            front.push(next);
        }
        let value = front[d][0];
        let residual = value - y;
        loss += residual * residual;

        // back[k] = weights of core multi-indices over modes k..d-1 after
        // contracting u^{k}..u^{d-1}; built backwards as outer products
        let mut back: Vec<Vec<f64>> = vec![Vec::new(); d + 1];
        back[d] = vec![1.0];
        for k in (0..d).rev() {
            let m = mdims[k];
            let nxt = &back[k + 1];
            let mut cur = vec![0.0f64; m * nxt.len()];
            for i in 0..m {
                let u = us[k][i];
                for (o, &b) in cur[i * nxt.len()..(i + 1) * nxt.len()].iter_mut().zip(nxt) {
                    *o = u * b;
                }
            }
            back[k] = cur;
        }
        // core gradient: outer product of the u vectors
        for (g, &b) in grads[0].iter_mut().zip(&back[0]) {
            *g += residual * b;
        }
        // factor gradients: G_k[i] = front[k] x back[k+1] at mode k
        for k in 0..d {
            let m = mdims[k];
            let n = model.dims[k];
            let tail = back[k + 1].len();
            for i in 0..m {
                let fslice = &front[k][i * tail..(i + 1) * tail];
                let dot: f64 = fslice.iter().zip(&back[k + 1]).map(|(&a, &b)| a * b).sum();
                grads[k + 1][i * n + coords[k]] += residual * dot;
            }
        }
    }
    let scale = 2.0 / batch.len() as f64;
    for g in &mut grads {
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    Ok((loss / batch.len() as f64, grads))
}

// ---------------------------------------------------------------------------
// Factor upsampling and the shared training loop
// ---------------------------------------------------------------------------

/// Double a length-`n` sequence by linear interpolation with endpoint
/// replication: even outputs copy inputs, odd outputs average neighbours.
pub fn interpolate_rows(values: &[f64], n: usize, width: usize) -> Vec<f64> {
    debug_assert_eq!(values.len(), n * width);
    let mut out = vec![0.0; 2 * n * width];
    for i in 0..n {
        let src = &values[i * width..(i + 1) * width];
        out[2 * i * width..(2 * i + 1) * width].copy_from_slice(src);
        let dst_mid = (2 * i + 1) * width;
        if i + 1 < n {
            let nxt = &values[(i + 1) * width..(i + 2) * width];
            for w in 0..width {
                out[dst_mid + w] = 0.5 * (src[w] + nxt[w]);
            }
        } else {
            out[dst_mid..dst_mid + width].copy_from_slice(src);
        }
    }
    out
}

/// Which baseline decomposition to fit and its size knob.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineSpec {
    Cp { rank: usize },
    Tucker { core_dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    Cp(CpModel),
    Tucker(TuckerModel),
}

impl BaselineModel {
    pub fn eval(&self, coords: &[usize]) -> Result<f64> {
        match self {
            BaselineModel::Cp(m) => m.eval(coords),
            BaselineModel::Tucker(m) => m.eval(coords),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            BaselineModel::Cp(m) => m.param_count(),
            BaselineModel::Tucker(m) => m.param_count(),
        }
    }

    /// Densify onto a grid of the model's spatial dims.
    pub fn to_grid(&self) -> Result<Grid> {
        let dims = match self {
            BaselineModel::Cp(m) => m.dims.clone(),
            BaselineModel::Tucker(m) => m.dims.clone(),
        };
        let total: usize = dims.iter().product();
        let mut values = vec![0.0; total];
        let mut coords = vec![0usize; dims.len()];
        for (lin, value) in values.iter_mut().enumerate() {
            let mut rem = lin;
            for axis in (0..dims.len()).rev() {
                coords[axis] = rem % dims[axis];
                rem /= dims[axis];
            }
            *value = self.eval(&coords)?;
        }
        Grid::new(dims, values)
    }

    fn upsample(&mut self) {
        match self {
            BaselineModel::Cp(m) => {
                for (k, f) in m.factors.iter_mut().enumerate() {
                    *f = interpolate_rows(f, m.dims[k], m.rank);
                    m.dims[k] *= 2;
                }
            }
            BaselineModel::Tucker(m) => {
                // factors are [m_k, n_k]; interpolate along columns
                for (k, f) in m.factors.iter_mut().enumerate() {
                    let (mk, n) = (m.core_dims[k], m.dims[k]);
                    let mut transposed = vec![0.0; f.len()];
                    for i in 0..mk {
                        for j in 0..n {
                            transposed[j * mk + i] = f[i * n + j];
                        }
                    }
                    let doubled = interpolate_rows(&transposed, n, mk);
                    let n2 = 2 * n;
                    let mut back = vec![0.0; mk * n2];
                    for j in 0..n2 {
                        for i in 0..mk {
                            back[i * n2 + j] = doubled[j * mk + i];
                        }
                    }
                    *f = back;
                    m.dims[k] *= 2;
                }
            }
        }
    }

    fn param_groups(&mut self) -> Vec<&mut [f64]> {
        match self {
            BaselineModel::Cp(m) => m.factors.iter_mut().map(|f| f.as_mut_slice()).collect(),
            BaselineModel::Tucker(m) => std::iter::once(m.core.as_mut_slice())
                .chain(m.factors.iter_mut().map(|f| f.as_mut_slice()))
                .collect(),
        }
    }

    fn grad_mse(&self, batch: &[Vec<usize>], ys: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
        match self {
            BaselineModel::Cp(m) => cp_grad_mse(m, batch, ys),
            BaselineModel::Tucker(m) => tucker_grad_mse(m, batch, ys),
        }
    }
}

/// Coarse-to-fine baseline training over the same pyramid/schedule contract
/// as the tensor-train loop; on upsampling, spatial factors are linearly
/// interpolated to twice the length.
pub fn train_baseline(
    spec: BaselineSpec,
    pyramid: &[Grid],
    config: &TrainConfig,
) -> Result<(BaselineModel, Vec<TraceRow>)> {
    train_baseline_observed(spec, pyramid, config, &mut |_, _| {})
}

pub fn train_baseline_observed(
    spec: BaselineSpec,
    pyramid: &[Grid],
    config: &TrainConfig,
    observer: &mut dyn FnMut(&StepInfo, &BaselineModel),
) -> Result<(BaselineModel, Vec<TraceRow>)> {
    config.validate()?;
    if pyramid.is_empty() {
        return Err(Error::invalid("empty pyramid"));
    }
    let levels = pyramid.len() - 1;
    if config.upsample_iters.len() != levels {
        return Err(Error::invalid(format!(
            "{} upsample iterations for {} level transitions",
            config.upsample_iters.len(),
            levels
        )));
    }
    for w in pyramid.windows(2) {
        if w[1].side()? != 2 * w[0].side()? || w[0].spatial_dim() != w[1].spatial_dim() {
            return Err(Error::invalid("pyramid levels must double per step"));
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let dims = pyramid[0].dims().to_vec();
    let mut model = match spec {
        BaselineSpec::Cp { rank } => {
            BaselineModel::Cp(CpModel::random(&dims, rank, config.init_std, &mut rng)?)
        }
        BaselineSpec::Tucker { core_dim } => BaselineModel::Tucker(TuckerModel::random(
            &dims,
            core_dim,
            config.init_std,
            &mut rng,
        )?),
    };
    let schedule: LrSchedule = config.schedule();
    let group_lens: Vec<usize> = model.param_groups().iter().map(|g| g.len()).collect();
    let mut adam = AdamState::for_param_lens(&group_lens);
    let mut trace = Vec::with_capacity(config.total_iters);

    for stage in 0..=levels {
        let target = &pyramid[stage];
        let observed = target.observed_indices();
        if observed.is_empty() {
            return Err(Error::invalid("target has no observed entries"));
        }
        let tdims = target.dims();
        let (start, end) = schedule.stage_bounds(stage);
        for iter in start..end {
            let mut batch = Vec::with_capacity(config.batch_size);
            let mut ys = Vec::with_capacity(config.batch_size);
            for _ in 0..config.batch_size {
                let lin = observed[rng.gen_range(0..observed.len())];
                let mut rem = lin;
                let mut coords = vec![0usize; tdims.len()];
                for axis in (0..tdims.len()).rev() {
                    coords[axis] = rem % tdims[axis];
                    rem /= tdims[axis];
                }
                batch.push(coords);
                ys.push(target.values()[lin]);
            }
            let (loss, grads) = model.grad_mse(&batch, &ys)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss diverged at iteration {iter}")));
            }
            let lr = lr_at(&schedule, iter, stage);
            let mut groups = model.param_groups();
            adam.update_slices(&mut groups, &grads, lr)?;
            let info = StepInfo {
                iter,
                stage,
                depth: target.side()?.trailing_zeros() as usize,
                lr,
                loss,
            };
            trace.push(TraceRow {
                iter,
                depth: info.depth,
                lr,
                loss,
            });
            observer(&info, &model);
        }
        if stage < levels {
            model.upsample();
            let group_lens: Vec<usize> = model.param_groups().iter().map(|g| g.len()).collect();
            adam = AdamState::for_param_lens(&group_lens);
        }
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn coords_of(dims: &[usize], mut lin: usize) -> Vec<usize> {
        let mut coords = vec![0usize; dims.len()];
        for axis in (0..dims.len()).rev() {
            coords[axis] = lin % dims[axis];
            lin /= dims[axis];
        }
        coords
    }

    #[test]
    fn cp_rank_one_outer_product() {
        let model = CpModel {
            rank: 1,
            factors: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            dims: vec![2, 2],
        };
        assert_eq!(model.eval(&[1, 1]).unwrap(), 8.0);
        assert_eq!(model.eval(&[0, 0]).unwrap(), 3.0);
        assert!(model.eval(&[2, 0]).is_err());
    }

    #[test]
    fn cp_all_zero_factors() {
        let model = CpModel {
            rank: 2,
            factors: vec![vec![0.0; 8], vec![0.0; 8]],
            dims: vec![4, 4],
        };
        for lin in 0..16 {
            assert_eq!(model.eval(&coords_of(&[4, 4], lin)).unwrap(), 0.0);
        }
    }

    #[test]
    fn cp_matches_dense_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for dims in [vec![5usize, 4, 3], vec![32, 32]] {
            let total: usize = dims.iter().product();
            let model = CpModel::random(&dims, 3, 1.0, &mut rng).unwrap();
            for lin in 0..total {
                let coords = coords_of(&dims, lin);
                // dense oracle: explicit sum of outer products
                let mut want = 0.0;
                for r in 0..model.rank {
                    let mut prod = 1.0;
                    for (k, &j) in coords.iter().enumerate() {
                        prod *= model.factors[k][j * model.rank + r];
                    }
                    want += prod;
                }
                let got = model.eval(&coords).unwrap();
                assert!((got - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn tucker_identity_reproduces_core() {
        // core 2x2, identity factors, n = m
        let model = TuckerModel {
            core_dims: vec![2, 2],
            core: vec![1.0, 2.0, 3.0, 4.0],
            factors: vec![vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, 1.0]],
            dims: vec![2, 2],
        };
        for (lin, want) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            assert_eq!(model.eval(&coords_of(&[2, 2], lin)).unwrap(), *want);
        }
    }

    #[test]
    fn tucker_rank_one_is_separable() {
        let model = TuckerModel {
            core_dims: vec![1, 1],
            core: vec![2.0],
            factors: vec![vec![0.5, 1.0, 1.5, 2.0], vec![1.0, -1.0, 0.0, 0.25]],
            dims: vec![4, 4],
        };
        for x in 0..4 {
            for y in 0..4 {
                let want = 2.0 * model.factors[0][x] * model.factors[1][y];
                assert_eq!(model.eval(&[x, y]).unwrap(), want);
            }
        }
    }

    #[test]
    fn tucker_matches_dense_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for dims in [vec![4usize, 4, 4], vec![32, 16]] {
            let total: usize = dims.iter().product();
            let d = dims.len();
            let model = TuckerModel::random(&dims, 3, 1.0, &mut rng).unwrap();
            for lin in 0..total {
                let coords = coords_of(&dims, lin);
                let mdims = &model.core_dims;
                let mut want = 0.0;
                for ci in 0..model.core.len() {
                    let mut rem = ci;
                    let mut prod = model.core[ci];
                    for k in (0..d).rev() {
                        let i = rem % mdims[k];
                        rem /= mdims[k];
                        prod *= model.factors[k][i * dims[k] + coords[k]];
                    }
                    want += prod;
                }
                let got = model.eval(&coords).unwrap();
                assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn cp_gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let dims = [4usize, 4];
        let mut model = CpModel::random(&dims, 3, 1.0, &mut rng).unwrap();
        let batch: Vec<Vec<usize>> = (0..6).map(|i| coords_of(&dims, (i * 5) % 16)).collect();
        let ys: Vec<f64> = (0..6).map(|i| (i as f64) / 7.0).collect();
        let (_, grads) = cp_grad_mse(&model, &batch, &ys).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            for i in 0..model.factors[k].len() {
                let orig = model.factors[k][i];
                model.factors[k][i] = orig + h;
                let lp = cp_grad_mse(&model, &batch, &ys).unwrap().0;
                model.factors[k][i] = orig - h;
                let lm = cp_grad_mse(&model, &batch, &ys).unwrap().0;
                model.factors[k][i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let a = grads[k][i];
                let denom = a.abs().max(fd.abs()).max(1e-4);
                assert!(((a - fd) / denom).abs() <= 1e-4, "{a} vs {fd}");
            }
        }
    }

    #[test]
    fn tucker_gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let dims = [4usize, 4];
        let mut model = TuckerModel::random(&dims, 2, 1.0, &mut rng).unwrap();
        let batch: Vec<Vec<usize>> = (0..6).map(|i| coords_of(&dims, (i * 3) % 16)).collect();
        let ys: Vec<f64> = (0..6).map(|i| ((i * i) as f64) / 11.0).collect();
        let (_, grads) = tucker_grad_mse(&model, &batch, &ys).unwrap();
        let h = 1e-6;
        // group 0: core
        for i in 0..model.core.len() {
            let orig = model.core[i];
            model.core[i] = orig + h;
            let lp = tucker_grad_mse(&model, &batch, &ys).unwrap().0;
            model.core[i] = orig - h;
            let lm = tucker_grad_mse(&model, &batch, &ys).unwrap().0;
            model.core[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let a = grads[0][i];
            let denom = a.abs().max(fd.abs()).max(1e-4);
            assert!(((a - fd) / denom).abs() <= 1e-4);
        }
        for k in 0..2 {
            for i in 0..model.factors[k].len() {
                let orig = model.factors[k][i];
                model.factors[k][i] = orig + h;
                let lp = tucker_grad_mse(&model, &batch, &ys).unwrap().0;
                model.factors[k][i] = orig - h;
                let lm = tucker_grad_mse(&model, &batch, &ys).unwrap().0;
                model.factors[k][i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let a = grads[k + 1][i];
                let denom = a.abs().max(fd.abs()).max(1e-4);
                assert!(((a - fd) / denom).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn interpolation_inserts_midpoints() {
        let ramp = [0.0, 1.0, 2.0, 3.0];
        let out = interpolate_rows(&ramp, 4, 1);
        assert_eq!(out, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.0]);
    }

    #[test]
    fn param_counts() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let cp = CpModel::random(&[8, 8], 5, 1.0, &mut rng).unwrap();
        assert_eq!(cp.param_count(), 8 * 5 + 8 * 5);
        let tk = TuckerModel::random(&[8, 8], 3, 1.0, &mut rng).unwrap();
        assert_eq!(tk.param_count(), 9 + 2 * 3 * 8);
    }

    #[test]
    fn cp_fits_constant_target() {
        let side = 16;
        let g = Grid::new(vec![side, side], vec![0.5; side * side]).unwrap();
        let config = TrainConfig {
            r_max: 1,
            batch_size: 256,
            total_iters: 500,
            base_lr: 3e-2,
            inter_stage_decay: 1e-3,
            init_std: 0.01,
            seed: 4,
            ..TrainConfig::default()
        };
        let (model, trace) = train_baseline(
            BaselineSpec::Cp { rank: 1 },
            std::slice::from_ref(&g),
            &config,
        )
        .unwrap();
        assert_eq!(trace.len(), 500);
        let recon = model.to_grid().unwrap();
        let mse = recon.mse(&g).unwrap();
        assert!(mse <= 1e-6, "final mse {mse}");
    }

    #[test]
    fn baseline_training_is_deterministic() {
        let side = 8;
        let values: Vec<f64> = (0..side * side).map(|i| ((i % 5) as f64) / 5.0).collect();
        let g = Grid::new(vec![side, side], values).unwrap();
        let config = TrainConfig {
            r_max: 2,
            batch_size: 32,
            total_iters: 30,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = |spec| train_baseline(spec, std::slice::from_ref(&g), &config).unwrap();
        assert_eq!(
            run(BaselineSpec::Cp { rank: 2 }),
            run(BaselineSpec::Cp { rank: 2 })
        );
        assert_eq!(
            run(BaselineSpec::Tucker { core_dim: 2 }),
            run(BaselineSpec::Tucker { core_dim: 2 })
        );
    }

    #[test]
    fn baseline_upsampling_doubles_dims() {
        let mk = |side: usize| {
            Grid::new(
                vec![side, side],
                (0..side * side).map(|i| ((i % 3) as f64) / 3.0).collect(),
            )
            .unwrap()
        };
        let pyramid = vec![mk(8), mk(16)];
        let config = TrainConfig {
            r_max: 2,
            batch_size: 16,
            total_iters: 8,
            upsample_iters: vec![4],
            warmup_iters: 1,
            seed: 1,
            ..TrainConfig::default()
        };
        let (model, _) = train_baseline(BaselineSpec::Cp { rank: 2 }, &pyramid, &config).unwrap();
        match model {
            BaselineModel::Cp(m) => assert_eq!(m.dims, vec![16, 16]),
            _ => unreachable!(),
        }
        let (model, _) =
            train_baseline(BaselineSpec::Tucker { core_dim: 2 }, &pyramid, &config).unwrap();
        match model {
            BaselineModel::Tucker(m) => {
                assert_eq!(m.dims, vec![16, 16]);
                assert_eq!(m.core_dims, vec![2, 2]);
            }
            _ => unreachable!(),
        }
    }
}
