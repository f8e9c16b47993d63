//! Sampled-entry MSE training: analytic core gradients, Adam, the staged
//! learning-rate schedule, and the coarse-to-fine training loop.
//!
//! Training alternates `Train` and `Upsample` phases: fit the train against a
//! (possibly masked) target grid by sampling observed coordinates, then
//! prolong to the next resolution and continue. Each upsampling recalibrates
//! the learning-rate peak and restarts the optimizer.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::layout::QttLayout;
use crate::prolong::prolong;
use crate::tt::{random_tt_with_dims, trapezoid_ranks, Core, IndexBatch, TensorTrain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Fixed gradient accumulation chunk; keeps reductions deterministic under
/// any thread count.
const GRAD_CHUNK: usize = 256;

// ---------------------------------------------------------------------------
// Learning-rate schedule
// ---------------------------------------------------------------------------

/// Staged exponential decay: within a stage the rate decays from the stage
/// peak to `inter_stage_decay * peak`; each upsample lowers the peak by
/// `upsample_decay` and prepends a linear warmup from 10% of the peak.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    /// Within-stage decay target `alpha`; the stage endpoint hits `alpha * peak`.
    pub inter_stage_decay: f64,
    /// Per-upsample peak decay `beta`; stage `l` peaks at `beta^l * base_lr`.
    pub upsample_decay: f64,
    pub warmup_iters: usize,
    /// Iteration indices of upsampling events (stage boundaries).
    pub boundaries: Vec<usize>,
    pub total_iters: usize,
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(Error::invalid("base_lr must be positive"));
        }
        if !(self.inter_stage_decay > 0.0 && self.inter_stage_decay <= 1.0) {
            return Err(Error::invalid("inter_stage_decay must be in (0, 1]"));
        }
        if !(self.upsample_decay > 0.0 && self.upsample_decay <= 1.0) {
            return Err(Error::invalid("upsample_decay must be in (0, 1]"));
        }
        if self.total_iters == 0 {
            return Err(Error::invalid("total_iters must be >= 1"));
        }
        let mut prev = 0usize;
        for (i, &b) in self.boundaries.iter().enumerate() {
            if b >= self.total_iters || (i > 0 && b <= prev) || b == 0 {
                return Err(Error::invalid(
                    "stage boundaries must be strictly increasing and inside (0, total_iters)",
                ));
            }
            prev = b;
        }
        Ok(())
    }

    pub fn stage_bounds(&self, stage: usize) -> (usize, usize) {
        let start = if stage == 0 {
            0
        } else {
            self.boundaries[stage - 1]
        };
        let end = self
            .boundaries
            .get(stage)
            .copied()
            .unwrap_or(self.total_iters);
        (start, end)
    }
}

/// Learning rate at a global iteration given the number of completed
/// upsamples `l` (equal to the stage index).
pub fn lr_at(schedule: &LrSchedule, iter: usize, completed_upsamples: usize) -> f64 {
    let l = completed_upsamples;
    let (start, end) = schedule.stage_bounds(l);
    debug_assert!(iter >= start && (iter < end || l == schedule.boundaries.len()));
    let len = end.saturating_sub(start).max(1);
    let peak = schedule.base_lr * schedule.upsample_decay.powi(l as i32);
    let t = iter.saturating_sub(start);
    let warm = if l == 0 {
        0
    } else {
        schedule.warmup_iters.min(len)
    };
    if t < warm {
        // linear ramp from 10% of the stage peak
        peak * (0.1 + 0.9 * t as f64 / warm as f64)
    } else {
        let dec_len = len - warm;
        if dec_len == 0 {
            peak
        } else {
            peak * schedule
                .inter_stage_decay
                .powf((t - warm) as f64 / dec_len as f64)
        }
    }
}

/// Base learning-rate adaptation for noisy or incomplete targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrAdaptation {
    /// `lr = base * factor^sigma`
    Noise { sigma: f64, factor: f64 },
    /// `lr = base * factor^(1 - observed_fraction)`
    MissingData { observed_fraction: f64, factor: f64 },
}

impl LrAdaptation {
    pub fn noise(sigma: f64) -> LrAdaptation {
        LrAdaptation::Noise { sigma, factor: 0.1 }
    }

    pub fn missing(observed_fraction: f64, factor: f64) -> LrAdaptation {
        LrAdaptation::MissingData {
            observed_fraction,
            factor,
        }
    }
}

pub fn adapt_base_lr(base: f64, adaptation: &LrAdaptation) -> Result<f64> {
    if !(base > 0.0) {
        return Err(Error::invalid("base learning rate must be positive"));
    }
    match *adaptation {
        LrAdaptation::Noise { sigma, factor } => {
            if sigma < 0.0 || !(factor > 0.0) {
                return Err(Error::invalid(format!(
                    "bad noise adaptation (sigma={sigma}, factor={factor})"
                )));
            }
            Ok(base * factor.powf(sigma))
        }
        LrAdaptation::MissingData {
            observed_fraction,
            factor,
        } => {
            if !(0.0..=1.0).contains(&observed_fraction) || !(factor > 0.0) {
                return Err(Error::invalid(format!(
                    "bad missing-data adaptation (p={observed_fraction}, factor={factor})"
                )));
            }
            Ok(base * factor.powf(1.0 - observed_fraction))
        }
    }
}

// ---------------------------------------------------------------------------
// Gradients and Adam
// ---------------------------------------------------------------------------

/// Mean-squared-error loss over a sampled batch plus analytic per-core
/// gradients. For a sample with residual `r`, the gradient contribution to
/// core `k` slice `j_k` is the outer product of the left and right partial
/// chain products scaled by `2 r / batch`.
pub fn grad_mse(
    tt: &TensorTrain,
    batch: &IndexBatch,
    targets: &[f64],
) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if batch.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} index tuples vs {} targets",
            batch.len(),
            targets.len()
        )));
    }
    if batch.depth() != tt.num_cores() {
        return Err(Error::invalid(format!(
            "index tuples have {} entries, train has {} cores",
            batch.depth(),
            tt.num_cores()
        )));
    }
    let cores = tt.cores();
    for i in 0..batch.len() {
        for (c, &j) in cores.iter().zip(batch.row(i)) {
            if j as usize >= c.phys {
                return Err(Error::invalid(format!(
                    "physical index {j} out of range for mode of size {}",
                    c.phys
                )));
            }
        }
    }

    let n = batch.len();
    let n_cores = cores.len();
    // prefix offsets of the left-partial buffer: segment k holds R_k values
    let mut left_off = vec![0usize; n_cores + 1];
    for k in 0..n_cores {
        left_off[k + 1] = left_off[k] + cores[k].left;
    }
    let left_total = left_off[n_cores];
    let max_rank = tt.max_rank();

    let n_chunks = n.div_ceil(GRAD_CHUNK);
    let partials: Vec<(f64, Vec<Vec<f64>>)> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * GRAD_CHUNK;
            let hi = ((ci + 1) * GRAD_CHUNK).min(n);
            let mut loss_sum = 0.0f64;
            let mut grads: Vec<Vec<f64>> = cores.iter().map(|c| vec![0.0; c.data.len()]).collect();
            let mut lefts = vec![0.0f64; left_total];
            let mut rcur = vec![0.0f64; max_rank];
            let mut rnext = vec![0.0f64; max_rank];
            for b in lo..hi {
                let idxs = batch.row(b);
                // forward sweep, keeping every left partial
                lefts[0] = 1.0;
                let mut value = 0.0;
                for (k, core) in cores.iter().enumerate() {
                    let j = idxs[k] as usize;
                    if k + 1 < n_cores {
                        let (src, dst) = lefts.split_at_mut(left_off[k + 1]);
                        let src = &src[left_off[k]..];
                        let dst = &mut dst[..core.right];
                        dst.fill(0.0);
                        for (r, &v) in src.iter().enumerate() {
                            if v == 0.0 {
                                continue;
                            }
                            for (o, &c) in dst.iter_mut().zip(core.row(r, j)) {
                                *o += v * c;
                            }
                        }
                    } else {
                        // last core: scalar chain value
                        let src = &lefts[left_off[k]..left_off[k + 1]];
                        value = src
                            .iter()
                            .enumerate()
                            .map(|(r, &v)| v * core.at(r, j, 0))
                            .sum();
                    }
                }
                let residual = value - targets[b];
                loss_sum += residual * residual;
                // backward sweep, accumulating outer products
                rcur[0] = 1.0;
                let mut rwidth = 1usize;
                for k in (0..n_cores).rev() {
                    let core = &cores[k];
                    let j = idxs[k] as usize;
                    let lpart = &lefts[left_off[k]..left_off[k + 1]];
                    let g = &mut grads[k];
                    for (r, &lv) in lpart.iter().enumerate() {
                        if lv == 0.0 {
                            continue;
                        }
                        let w = residual * lv;
                        let grow = &mut g[(r * core.phys + j) * core.right..][..core.right];
                        for (o, &rv) in grow.iter_mut().zip(&rcur[..rwidth]) {
                            *o += w * rv;
                        }
                    }
                    // right partial for the next (leftward) core
                    if k > 0 {
                        for (r, o) in rnext[..core.left].iter_mut().enumerate() {
                            let row = core.row(r, j);
                            *o = row.iter().zip(&rcur[..rwidth]).map(|(&a, &b)| a * b).sum();
                        }
                        rcur[..core.left].copy_from_slice(&rnext[..core.left]);
                        rwidth = core.left;
                    }
                }
            }
            (loss_sum, grads)
        })
        .collect();

    let mut loss = 0.0f64;
    let mut grads: Vec<Vec<f64>> = cores.iter().map(|c| vec![0.0; c.data.len()]).collect();
    for (l, g) in partials {
        loss += l;
        for (acc, part) in grads.iter_mut().zip(g) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }
    let scale = 2.0 / n as f64;
    for g in &mut grads {
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    Ok((loss / n as f64, grads))
}

/// Adam optimizer state; moment arrays mirror the core shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    shapes: Vec<(usize, usize, usize)>,
}

impl AdamState {
    pub fn new(tt: &TensorTrain) -> AdamState {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: tt.cores().iter().map(|c| vec![0.0; c.data.len()]).collect(),
            v: tt.cores().iter().map(|c| vec![0.0; c.data.len()]).collect(),
            shapes: tt
                .cores()
                .iter()
                .map(|c| (c.left, c.phys, c.right))
                .collect(),
        }
    }

    /// State for an arbitrary parameter-group layout (baseline models).
    pub fn for_param_lens(lens: &[usize]) -> AdamState {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
            shapes: Vec::new(),
        }
    }

    /// Canonical Adam update over flat parameter groups, in place.
    pub fn update_slices(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[Vec<f64>],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("parameter/gradient group count mismatch"));
        }
        for (k, p) in params.iter().enumerate() {
            if grads[k].len() != p.len() || self.m[k].len() != p.len() {
                return Err(Error::shape(format!("group {k} length mismatch")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            let g = &grads[k];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }

    /// Zero-pad moment arrays to match a rank-grown train (step count kept).
    pub fn pad_to(&mut self, tt: &TensorTrain) -> Result<()> {
        if tt.num_cores() != self.shapes.len() {
            return Err(Error::shape("core count changed under the optimizer"));
        }
        for (k, core) in tt.cores().iter().enumerate() {
            let (l, p, r) = self.shapes[k];
            if p != core.phys || core.left < l || core.right < r {
                return Err(Error::shape(format!(
                    "core {k} shrank or changed mode under the optimizer"
                )));
            }
            self.m[k] = pad_core_data(&self.m[k], (l, p, r), (core.left, core.phys, core.right));
            self.v[k] = pad_core_data(&self.v[k], (l, p, r), (core.left, core.phys, core.right));
            self.shapes[k] = (core.left, core.phys, core.right);
        }
        Ok(())
    }
}

/// One canonical Adam update with bias correction, in place.
pub fn adam_step(
    state: &mut AdamState,
    tt: &mut TensorTrain,
    grads: &[Vec<f64>],
    lr: f64,
) -> Result<()> {
    let mut params: Vec<&mut [f64]> = tt
        .cores_mut()
        .iter_mut()
        .map(|c| c.data.as_mut_slice())
        .collect();
    state.update_slices(&mut params, grads, lr)
}

// ---------------------------------------------------------------------------
// Rank growth
// ---------------------------------------------------------------------------

fn pad_core_data(
    data: &[f64],
    (l, p, r): (usize, usize, usize),
    (nl, np, nr): (usize, usize, usize),
) -> Vec<f64> {
    debug_assert_eq!(p, np);
    let mut out = vec![0.0; nl * np * nr];
    for rr in 0..l {
        for j in 0..p {
            let src = &data[(rr * p + j) * r..][..r];
            let dst = &mut out[(rr * np + j) * nr..][..r];
            dst.copy_from_slice(src);
        }
    }
    out
}

/// Grow every internal bond by `delta`, capped by `r_cap` and by the maximal
/// exact rank at that cut. New parameter slices are zero, so the represented
/// tensor is unchanged.
pub fn grow_rank(tt: &TensorTrain, delta: usize, r_cap: usize) -> Result<TensorTrain> {
    if delta == 0 {
        return Err(Error::invalid("delta must be >= 1"));
    }
    let dims = tt.phys_dims();
    let exact = trapezoid_ranks(&dims, usize::MAX >> 2)?;
    let profile = tt.rank_profile();
    let mut target = profile.clone();
    for k in 1..profile.len() - 1 {
        target[k] = (profile[k] + delta)
            .min(exact[k])
            .min(r_cap)
            .max(profile[k]);
    }
    let mut cores = Vec::with_capacity(tt.num_cores());
    for (k, core) in tt.cores().iter().enumerate() {
        let shape = (core.left, core.phys, core.right);
        let new_shape = (target[k], core.phys, target[k + 1]);
        cores.push(Core {
            left: new_shape.0,
            phys: new_shape.1,
            right: new_shape.2,
            data: pad_core_data(&core.data, shape, new_shape),
        });
    }
    TensorTrain::from_cores(cores)
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

/// Schedule of rank-growth events, applied at the listed global iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct RankGrowth {
    pub delta: usize,
    pub iters: Vec<usize>,
    pub cap: usize,
}

/// Training hyper-parameters shared by every model kind.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub r_max: usize,
    pub total_iters: usize,
    /// Global iterations at which upsampling happens, one per level transition.
    pub upsample_iters: Vec<usize>,
    pub batch_size: usize,
    pub seed: u64,
    pub base_lr: f64,
    pub inter_stage_decay: f64,
    pub upsample_decay: f64,
    pub warmup_iters: usize,
    pub init_std: f64,
    pub rank_growth: Option<RankGrowth>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            r_max: 64,
            total_iters: 1024,
            upsample_iters: Vec::new(),
            batch_size: 512 * 512,
            seed: 0,
            base_lr: 5e-3,
            inter_stage_decay: 0.1,
            upsample_decay: 0.9,
            warmup_iters: 50,
            init_std: 0.1,
            rank_growth: None,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base_lr: self.base_lr,
            inter_stage_decay: self.inter_stage_decay,
            upsample_decay: self.upsample_decay,
            warmup_iters: self.warmup_iters,
            boundaries: self.upsample_iters.clone(),
            total_iters: self.total_iters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_max == 0 {
            return Err(Error::invalid("r_max must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.init_std > 0.0) {
            return Err(Error::invalid("init_std must be positive"));
        }
        if let Some(g) = &self.rank_growth {
            if g.delta == 0 || g.cap == 0 {
                return Err(Error::invalid("rank growth delta and cap must be >= 1"));
            }
            if g.iters.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid("rank growth iterations must be increasing"));
            }
        }
        self.schedule().validate()
    }
}

/// Per-step report passed to training observers.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub iter: usize,
    pub stage: usize,
    pub depth: usize,
    pub lr: f64,
    pub loss: f64,
}

/// One trace row per optimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub depth: usize,
    pub lr: f64,
    pub loss: f64,
}

fn sample_batch(
    layout: &QttLayout,
    target: &Grid,
    observed: &[usize],
    batch_size: usize,
    rng: &mut ChaCha12Rng,
    coords_buf: &mut [usize],
) -> (IndexBatch, Vec<f64>) {
    let mut batch = IndexBatch::with_capacity(layout.depth(), batch_size);
    let mut ys = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let lin = observed[rng.gen_range(0..observed.len())];
        batch.push_linear(layout, coords_buf, lin);
        ys.push(target.values()[lin]);
    }
    (batch, ys)
}

#[allow(clippy::too_many_arguments)]
fn run_span(
    tt: &mut TensorTrain,
    adam: &mut AdamState,
    layout: &QttLayout,
    target: &Grid,
    schedule: &LrSchedule,
    stage: usize,
    span: std::ops::Range<usize>,
    config: &TrainConfig,
    rng: &mut ChaCha12Rng,
    growth_cursor: &mut usize,
    trace: &mut Vec<TraceRow>,
    observer: &mut dyn FnMut(&StepInfo, &TensorTrain),
) -> Result<()> {
    let observed = target.observed_indices();
    if observed.is_empty() {
        return Err(Error::invalid("target has no observed entries"));
    }
    let mut coords_buf = vec![0usize; layout.spatial_dim()];
    for iter in span {
        if let Some(growth) = &config.rank_growth {
            while *growth_cursor < growth.iters.len() && growth.iters[*growth_cursor] == iter {
                *tt = grow_rank(tt, growth.delta, growth.cap)?;
                adam.pad_to(tt)?;
                *growth_cursor += 1;
            }
        }
        let (batch, ys) = sample_batch(
            layout,
            target,
            &observed,
            config.batch_size,
            rng,
            &mut coords_buf,
        );
        let (loss, grads) = grad_mse(tt, &batch, &ys)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss diverged at iteration {iter}")));
        }
        let lr = lr_at(schedule, iter, stage);
        adam_step(adam, tt, &grads, lr)?;
        let info = StepInfo {
            iter,
            stage,
            depth: layout.depth(),
            lr,
            loss,
        };
        trace.push(TraceRow {
            iter,
            depth: layout.depth(),
            lr,
            loss,
        });
        observer(&info, tt);
    }
    Ok(())
}

/// Fixed-resolution training: `level_iters` steps of sampled-batch MSE with
/// Adam under a single-stage schedule. Masked targets train only on observed
/// coordinates.
pub fn train_level(
    tt: TensorTrain,
    target: &Grid,
    config: &TrainConfig,
    level_iters: usize,
    rng: &mut ChaCha12Rng,
) -> Result<(TensorTrain, Vec<TraceRow>)> {
    train_level_observed(tt, target, config, level_iters, rng, &mut |_, _| {})
}

pub fn train_level_observed(
    mut tt: TensorTrain,
    target: &Grid,
    config: &TrainConfig,
    level_iters: usize,
    rng: &mut ChaCha12Rng,
    observer: &mut dyn FnMut(&StepInfo, &TensorTrain),
) -> Result<(TensorTrain, Vec<TraceRow>)> {
    if level_iters == 0 {
        return Err(Error::invalid("level_iters must be >= 1"));
    }
    let layout = QttLayout::for_grid(target)?;
    if layout.phys_dims() != tt.phys_dims() {
        return Err(Error::shape(format!(
            "target side {} does not match model modes {:?}",
            layout.side(),
            tt.phys_dims()
        )));
    }
    let schedule = LrSchedule {
        boundaries: Vec::new(),
        total_iters: level_iters,
        ..TrainConfig::schedule(config)
    };
    schedule.validate()?;
    let mut adam = AdamState::new(&tt);
    let mut trace = Vec::with_capacity(level_iters);
    let mut growth_cursor = 0usize;
    run_span(
        &mut tt,
        &mut adam,
        &layout,
        target,
        &schedule,
        0,
        0..level_iters,
        config,
        rng,
        &mut growth_cursor,
        &mut trace,
        observer,
    )?;
    Ok((tt, trace))
}

/// Coarse-to-fine training over a pyramid of targets (coarse first): fit at
/// the coarsest level, prolong at each configured iteration, finish at full
/// resolution. Returns the full-resolution model and the step trace.
pub fn train_putt(pyramid: &[Grid], config: &TrainConfig) -> Result<(TensorTrain, Vec<TraceRow>)> {
    train_putt_observed(pyramid, config, &mut |_, _| {})
}

pub fn train_putt_observed(
    pyramid: &[Grid],
    config: &TrainConfig,
    observer: &mut dyn FnMut(&StepInfo, &TensorTrain),
) -> Result<(TensorTrain, Vec<TraceRow>)> {
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
        let (a, b) = (w[0].side()?, w[1].side()?);
        if b != 2 * a || w[0].spatial_dim() != w[1].spatial_dim() {
            return Err(Error::invalid(format!(
                "pyramid levels must double per step, got sides {a} then {b}"
            )));
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut layout = QttLayout::for_grid(&pyramid[0])?;
    let mut tt = random_tt_with_dims(&layout.phys_dims(), config.r_max, config.init_std, &mut rng)?;
    let mut adam = AdamState::new(&tt);
    let schedule = config.schedule();
    let mut trace = Vec::with_capacity(config.total_iters);
    let mut growth_cursor = 0usize;

    for stage in 0..=levels {
        let (start, end) = schedule.stage_bounds(stage);
        run_span(
            &mut tt,
            &mut adam,
            &layout,
            &pyramid[stage],
            &schedule,
            stage,
            start..end,
            config,
            &mut rng,
            &mut growth_cursor,
            &mut trace,
            observer,
        )?;
        if stage < levels {
            let (up, up_layout) = prolong(&tt, &layout, config.r_max)?;
            tt = up;
            layout = up_layout;
            adam = AdamState::new(&tt);
        }
    }
    tt.assert_finite()?;
    Ok((tt, trace))
}
