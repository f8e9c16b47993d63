//! Thin wrappers over dense SVD/QR with deterministic sign gauges.
//!
//! Matrices cross this seam as row-major `&[f64]` slices; nalgebra types stay
//! internal to the module.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Truncated SVD of a `rows x cols` row-major matrix.
pub(crate) struct SvdTrunc {
    /// Kept rank (>= 1).
    pub rank: usize,
    /// `rows x rank`, row-major.
    pub u: Vec<f64>,
    /// Kept singular values, descending.
    pub s: Vec<f64>,
    /// `rank x cols`, row-major.
    pub vt: Vec<f64>,
    /// Sum of squares of discarded singular values.
    pub discarded_sq: f64,
}

/// Relative cutoff below which singular values are treated as numerical zeros.
pub(crate) const SV_REL_CUTOFF: f64 = 1e-14;

/// SVD truncated to at most `max_keep` singular values, discarding numerical
/// zeros (relative to the largest singular value). The sign gauge forces the
/// largest-magnitude entry of each kept left singular vector non-negative.
pub(crate) fn svd_truncated(
    rows: usize,
    cols: usize,
    data: &[f64],
    max_keep: usize,
) -> Result<SvdTrunc> {
    debug_assert_eq!(data.len(), rows * cols);
    if max_keep == 0 {
        return Err(Error::invalid("rank bound must be >= 1"));
    }
    let m = DMatrix::from_row_slice(rows, cols, data);
    let svd = m
        .try_svd(true, true, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numeric(format!("SVD did not converge on {rows}x{cols} matrix")))?;
    let u_full = svd.u.as_ref().expect("u requested");
    let vt_full = svd.v_t.as_ref().expect("v_t requested");
    let sv = &svd.singular_values;

    let s_max = sv.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = s_max * SV_REL_CUTOFF;
    let mut rank = 0usize;
    for i in 0..sv.len().min(max_keep) {
        if sv[i] > cutoff {
            rank = i + 1;
        } else {
            break;
        }
    }
    if rank == 0 {
        rank = 1; // zero matrix still yields one (zero) component
    }

    let mut u = vec![0.0; rows * rank];
    let mut vt = vec![0.0; rank * cols];
    let mut s = Vec::with_capacity(rank);
    for j in 0..rank {
        s.push(sv[j]);
        // sign gauge: largest-magnitude entry of U column j made non-negative
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..rows {
            let a = u_full[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        let flip = if u_full[(best, j)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..rows {
            u[i * rank + j] = flip * u_full[(i, j)];
        }
        for c in 0..cols {
            vt[j * cols + c] = flip * vt_full[(j, c)];
        }
    }
    let discarded_sq = (rank..sv.len()).map(|i| sv[i] * sv[i]).sum();
    Ok(SvdTrunc {
        rank,
        u,
        s,
        vt,
        discarded_sq,
    })
}

/// Thin QR of a `rows x cols` row-major matrix: returns `(q, r, k)` with
/// `q: rows x k`, `r: k x cols`, `k = min(rows, cols)`. The gauge forces the
/// diagonal of `r` non-negative.
pub(crate) fn qr_thin(rows: usize, cols: usize, data: &[f64]) -> (Vec<f64>, Vec<f64>, usize) {
    debug_assert_eq!(data.len(), rows * cols);
    let k = rows.min(cols);
    let m = DMatrix::from_row_slice(rows, cols, data);
    let qr = m.qr();
    let q_full = qr.q();
    let r_full = qr.r();
    let mut q = vec![0.0; rows * k];
    let mut r = vec![0.0; k * cols];
    for j in 0..k {
        let flip = if r_full[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..rows {
            q[i * k + j] = flip * q_full[(i, j)];
        }
        for c in 0..cols {
            r[j * cols + c] = flip * r_full[(j, c)];
        }
    }
    (q, r, k)
}

/// Row-major matrix product: `a (m x k) * b (k x n)`.
pub(crate) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}
