//! Procedural natural-looking test data: multi-octave value noise with a
//! roughly 1/f amplitude spectrum plus a handful of smooth shapes and edges.
//! Deterministic in the seed; used to generate the bundled test image.

use qtt_core::grid::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Bilinear upsampling of a coarse lattice of random values to `side`.
fn value_noise_2d(side: usize, cells: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1))
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let mut out = vec![0.0; side * side];
    let scale = cells as f64 / side as f64;
    for r in 0..side {
        let fy = r as f64 * scale;
        let y0 = (fy as usize).min(cells - 1);
        let ty = fy - y0 as f64;
        for c in 0..side {
            let fx = c as f64 * scale;
            let x0 = (fx as usize).min(cells - 1);
            let tx = fx - x0 as f64;
            let g = |yy: usize, xx: usize| lattice[yy * (cells + 1) + xx];
            let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
            let bot = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
            out[r * side + c] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// Natural-looking grayscale test image in [0.02, 0.98].
pub fn natural_image(side: usize, seed: u64) -> Grid {
    assert!(side >= 16 && side.is_power_of_two());
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut values = vec![0.0f64; side * side];

    // broad illumination gradient
    let (gx, gy) = (rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
    for r in 0..side {
        for c in 0..side {
            let (x, y) = (c as f64 / side as f64, r as f64 / side as f64);
            values[r * side + c] = gx * x + gy * y;
        }
    }

    // 1/f value-noise octaves, coarse to fine
    let mut cells = 4usize;
    let mut amp = 0.8;
    while cells < side {
        let octave = value_noise_2d(side, cells, &mut rng);
        for (v, o) in values.iter_mut().zip(&octave) {
            *v += amp * o;
        }
        cells *= 2;
        amp *= 0.55;
    }

    // soft-edged shapes for structure and edges
    for _ in 0..4 {
        let cx = rng.gen_range(0.15..0.85);
        let cy = rng.gen_range(0.15..0.85);
        let radius = rng.gen_range(0.05..0.22);
        let height = rng.gen_range(-0.7..0.7);
        let softness = rng.gen_range(0.005..0.02);
        for r in 0..side {
            for c in 0..side {
                let (x, y) = (c as f64 / side as f64, r as f64 / side as f64);
                let d = ((x - cx) * (x - cx) + (y - cy) * (y - cy)).sqrt();
                values[r * side + c] += height / (1.0 + ((d - radius) / softness).exp());
            }
        }
    }
    // one axis-aligned soft rectangle
    let (x0, y0) = (rng.gen_range(0.1..0.5), rng.gen_range(0.1..0.5));
    let (w, h) = (rng.gen_range(0.15..0.35), rng.gen_range(0.15..0.35));
    let height = rng.gen_range(-0.5..0.5);
    let soft = 0.01;
    let edge = |t: f64| 1.0 / (1.0 + (-t / soft).exp());
    for r in 0..side {
        for c in 0..side {
            let (x, y) = (c as f64 / side as f64, r as f64 / side as f64);
            let inside = edge(x - x0) * edge(x0 + w - x) * edge(y - y0) * edge(y0 + h - y);
            values[r * side + c] += height * inside;
        }
    }

    normalize(&mut values);
    Grid::new(vec![side, side], values).expect("side is a power of two")
}

/// Smooth 3D test volume: low-frequency waves plus gaussian clumps.
pub fn natural_volume(side: usize, seed: u64) -> Grid {
    assert!(side >= 8 && side.is_power_of_two());
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut values = vec![0.0f64; side * side * side];
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.5..3.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            ]
        })
        .collect();
    let clumps: Vec<[f64; 5]> = (0..3)
        .map(|_| {
            [
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.2..0.8),
                rng.gen_range(20.0..80.0),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    let s = side as f64;
    for a in 0..side {
        for b in 0..side {
            for c in 0..side {
                let (x, y, z) = (a as f64 / s, b as f64 / s, c as f64 / s);
                let mut v = 0.0;
                for (i, w) in waves.iter().enumerate() {
                    let amp = 0.8 / (i + 1) as f64;
                    v += amp
                        * (std::f64::consts::TAU * (w[0] * x + w[1] * y + w[2] * z) + w[3]).sin();
                }
                for k in &clumps {
                    let d2 =
                        (x - k[0]) * (x - k[0]) + (y - k[1]) * (y - k[1]) + (z - k[2]) * (z - k[2]);
                    v += k[4] * (-d2 * k[3]).exp();
                }
                values[(a * side + b) * side + c] = v;
            }
        }
    }
    normalize(&mut values);
    Grid::new(vec![side; 3], values).expect("side is a power of two")
}

fn normalize(values: &mut [f64]) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-12);
    for v in values.iter_mut() {
        *v = 0.02 + 0.96 * (*v - lo) / span;
    }
}
