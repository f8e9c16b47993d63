//! Training-dynamics checks at desk scale: loss decreases on smooth targets,
//! rank growth helps on a fixed budget, and coarse-to-fine training is robust
//! where cold-started training is not.

use qtt_core::data::build_pyramid;
use qtt_core::grid::Grid;
use qtt_core::layout::QttLayout;
use qtt_core::metrics::psnr;
use qtt_core::optim::{train_level, train_putt, RankGrowth, TrainConfig};
use qtt_core::tt::{random_tt_with_dims, DEFAULT_DENSE_CAP};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Smooth-but-structured synthetic target: a few sinusoid octaves plus a
/// radial blob, normalized into [0.05, 0.95].
fn synthetic_image(side: usize, seed: u64) -> Grid {
    let mut values = vec![0.0; side * side];
    let s = side as f64;
    let phase = (seed % 97) as f64 * 0.37;
    for r in 0..side {
        for c in 0..side {
            let (x, y) = (r as f64 / s, c as f64 / s);
            let mut v = 0.0;
            v += (2.0 * std::f64::consts::PI * (1.5 * x + 0.8 * y) + phase).sin();
            v += 0.5 * (2.0 * std::f64::consts::PI * (3.0 * y - 2.0 * x) - phase).cos();
            v += 0.25
                * (2.0 * std::f64::consts::PI * 6.0 * x).sin()
                * (2.0 * std::f64::consts::PI * 5.0 * y).cos();
            let dx = x - 0.6;
            let dy = y - 0.4;
            v += 1.2 * (-(dx * dx + dy * dy) * 40.0).exp();
            values[r * side + c] = v;
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    for v in &mut values {
        *v = 0.05 + 0.9 * (*v - lo) / (hi - lo);
    }
    Grid::new(vec![side, side], values).unwrap()
}

#[test]
fn moving_average_loss_decreases_over_a_level() {
    let g = synthetic_image(64, 3);
    let layout = QttLayout::for_grid(&g).unwrap();
    for seed in [1u64, 2, 3] {
        let config = TrainConfig {
            r_max: 8,
            batch_size: 1024,
            total_iters: 500,
            seed,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let tt = random_tt_with_dims(&layout.phys_dims(), 8, 0.1, &mut rng).unwrap();
        let (_, trace) = train_level(tt, &g, &config, 500, &mut rng).unwrap();
        let head: f64 = trace[..100].iter().map(|t| t.loss).sum::<f64>() / 100.0;
        let tail: f64 = trace[400..].iter().map(|t| t.loss).sum::<f64>() / 100.0;
        assert!(
            tail <= head,
            "seed {seed}: moving average rose from {head:.3e} to {tail:.3e}"
        );
    }
}

#[test]
fn rank_growth_beats_fixed_rank_on_equal_budget() {
    let g = synthetic_image(64, 9);
    let layout = QttLayout::for_grid(&g).unwrap();
    let mut fixed_losses = Vec::new();
    let mut grown_losses = Vec::new();
    for seed in [5u64, 6, 7] {
        let base = TrainConfig {
            r_max: 6,
            batch_size: 1024,
            total_iters: 600,
            seed,
            ..TrainConfig::default()
        };
        let final_mse = |config: &TrainConfig| {
            let (tt, _) = train_putt(std::slice::from_ref(&g), config).unwrap();
            let recon = tt.to_dense(&layout, DEFAULT_DENSE_CAP).unwrap();
            recon.mse(&g).unwrap()
        };
        fixed_losses.push(final_mse(&base));
        let grown = TrainConfig {
            rank_growth: Some(RankGrowth {
                delta: 2,
                iters: vec![150, 250, 350],
                cap: 12,
            }),
            ..base
        };
        grown_losses.push(final_mse(&grown));
    }
    fixed_losses.sort_by(f64::total_cmp);
    grown_losses.sort_by(f64::total_cmp);
    assert!(
        grown_losses[1] <= fixed_losses[1],
        "median grown {grown_losses:?} vs fixed {fixed_losses:?}"
    );
}

#[test]
fn coarse_to_fine_is_robust_to_bad_initialization() {
    // cold-started training is init-sensitive; the upsampled run is not
    let g = synthetic_image(64, 21);
    let pyramid = build_pyramid(&g, 2).unwrap();
    let mut putt_psnrs = Vec::new();
    let mut cold_psnrs = Vec::new();
    for seed in [11u64, 12, 13] {
        let config = TrainConfig {
            r_max: 16,
            batch_size: 1024,
            total_iters: 400,
            upsample_iters: vec![80, 160],
            init_std: 0.5,
            seed,
            ..TrainConfig::default()
        };
        let (tt, _) = train_putt(&pyramid, &config).unwrap();
        let layout = QttLayout::for_grid(&g).unwrap();
        let recon = tt.to_dense(&layout, DEFAULT_DENSE_CAP).unwrap();
        putt_psnrs.push(psnr(&recon, &g, 1.0).unwrap());

        let cold = TrainConfig {
            upsample_iters: vec![],
            ..config
        };
        let (tt, _) = train_putt(std::slice::from_ref(&g), &cold).unwrap();
        let recon = tt.to_dense(&layout, DEFAULT_DENSE_CAP).unwrap();
        cold_psnrs.push(psnr(&recon, &g, 1.0).unwrap());
    }
    putt_psnrs.sort_by(f64::total_cmp);
    cold_psnrs.sort_by(f64::total_cmp);
    assert!(
        putt_psnrs[1] >= cold_psnrs[1],
        "median coarse-to-fine {putt_psnrs:?} vs cold {cold_psnrs:?}"
    );
}
