//! Quality and size metrics: MSE, PSNR, SSIM, compression ratio.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Final-quality summary attached to runs and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
    pub params: usize,
    pub compression_ratio: f64,
}

/// Peak signal-to-noise ratio in dB; `+inf` for identical inputs.
pub fn psnr(a: &Grid, b: &Grid, peak: f64) -> Result<f64> {
    let mse = a.mse(b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Uncompressed entries per stored parameter.
pub fn compression_ratio(dense_entries: usize, params: usize) -> Result<f64> {
    if params == 0 {
        return Err(Error::invalid("parameter count must be >= 1"));
    }
    Ok(dense_entries as f64 / params as f64)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_RANGE: f64 = 1.0;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (k, v) in w.iter_mut().enumerate() {
        *v = (-((k as f64 - c) * (k as f64 - c)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Separable valid-mode convolution of a `rows x cols` plane with the window.
fn conv_valid(values: &[f64], rows: usize, cols: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let oc = cols - SSIM_WINDOW + 1;
    // horizontal pass
    let mut h = vec![0.0; rows * oc];
    for r in 0..rows {
        let row = &values[r * cols..(r + 1) * cols];
        for c in 0..oc {
            let mut acc = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                acc += wk * row[c + k];
            }
            h[r * oc + c] = acc;
        }
    }
    // vertical pass
    let or = rows - SSIM_WINDOW + 1;
    let mut out = vec![0.0; or * oc];
    for c in 0..oc {
        for r in 0..or {
            let mut acc = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                acc += wk * h[(r + k) * oc + c];
            }
            out[r * oc + c] = acc;
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], rows: usize, cols: usize) -> f64 {
    let w = gaussian_window();
    let mu_a = conv_valid(a, rows, cols, &w);
    let mu_b = conv_valid(b, rows, cols, &w);
    let aa: Vec<f64> = a.iter().map(|x| x * x).collect();
    let bb: Vec<f64> = b.iter().map(|x| x * x).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let e_aa = conv_valid(&aa, rows, cols, &w);
    let e_bb = conv_valid(&bb, rows, cols, &w);
    let e_ab = conv_valid(&ab, rows, cols, &w);

    let c1 = (SSIM_K1 * SSIM_RANGE) * (SSIM_K1 * SSIM_RANGE);
    let c2 = (SSIM_K2 * SSIM_RANGE) * (SSIM_K2 * SSIM_RANGE);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    total / mu_a.len() as f64
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
/// valid windows. 3D grids are scored slice-wise along the last axis and the
/// slice values averaged.
pub fn ssim(a: &Grid, b: &Grid) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!(
            "grid dims {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    match a.spatial_dim() {
        2 => {
            let (rows, cols) = (a.dims()[0], a.dims()[1]);
            if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
                return Err(Error::invalid(format!(
                    "grid {rows}x{cols} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
                )));
            }
            Ok(ssim_plane(a.values(), b.values(), rows, cols))
        }
        3 => {
            let (rows, cols, slices) = (a.dims()[0], a.dims()[1], a.dims()[2]);
            if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
                return Err(Error::invalid(format!(
                    "slices {rows}x{cols} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
                )));
            }
            // slice s along the last axis is the strided plane [r, c, s]
            let mut total = 0.0;
            let mut pa = vec![0.0; rows * cols];
            let mut pb = vec![0.0; rows * cols];
            for s in 0..slices {
                for r in 0..rows {
                    for c in 0..cols {
                        pa[r * cols + c] = a.values()[(r * cols + c) * slices + s];
                        pb[r * cols + c] = b.values()[(r * cols + c) * slices + s];
                    }
                }
                total += ssim_plane(&pa, &pb, rows, cols);
            }
            Ok(total / slices as f64)
        }
        _ => Err(Error::invalid("ssim needs a 2D or 3D grid")),
    }
}
