//! TT-SVD decomposition and rank truncation sweeps.

use crate::error::{Error, Result};
use crate::linalg::{matmul, qr_thin, svd_truncated};
use crate::tt::{Core, DenseTensor, TensorTrain};

/// Per-bond truncation diagnostics: sum of squared discarded singular values
/// at each internal bond (bond `b` sits between cores `b` and `b+1`).
#[derive(Debug, Clone, Default)]
pub struct TruncationInfo {
    pub discarded_sq: Vec<f64>,
}

impl TruncationInfo {
    /// Upper bound on the squared Frobenius reconstruction error.
    pub fn error_sq_bound(&self) -> f64 {
        self.discarded_sq.iter().sum()
    }
}

/// Sequential-SVD decomposition of a dense tensor with all bonds capped at
/// `r_max`. Deterministic; the SVD sign gauge is fixed internally.
pub fn tt_svd(dense: &DenseTensor, r_max: usize) -> Result<TensorTrain> {
    tt_svd_with_info(dense, r_max).map(|(tt, _)| tt)
}

pub fn tt_svd_with_info(
    dense: &DenseTensor,
    r_max: usize,
) -> Result<(TensorTrain, TruncationInfo)> {
    if r_max == 0 {
        return Err(Error::invalid("r_max must be >= 1"));
    }
    let dims = dense.dims().to_vec();
    let n_modes = dims.len();
    let mut info = TruncationInfo {
        discarded_sq: vec![0.0; n_modes.saturating_sub(1)],
    };
    if n_modes == 1 {
        let core = Core {
            left: 1,
            phys: dims[0],
            right: 1,
            data: dense.data().to_vec(),
        };
        return Ok((TensorTrain::from_cores(vec![core])?, info));
    }

    let mut c = dense.data().to_vec();
    let mut r_left = 1usize;
    let mut cores = Vec::with_capacity(n_modes);
    for k in 0..n_modes - 1 {
        let rows = r_left * dims[k];
        let cols = c.len() / rows;
        let svd = svd_truncated(rows, cols, &c, r_max)?;
        info.discarded_sq[k] = svd.discarded_sq;
        cores.push(Core {
            left: r_left,
            phys: dims[k],
            right: svd.rank,
            data: svd.u,
        });
        // c <- diag(s) * vt, shape [rank, cols]
        let mut next = svd.vt;
        for r in 0..svd.rank {
            let s = svd.s[r];
            for v in &mut next[r * cols..(r + 1) * cols] {
                *v *= s;
            }
        }
        c = next;
        r_left = svd.rank;
    }
    cores.push(Core {
        left: r_left,
        phys: dims[n_modes - 1],
        right: 1,
        data: c,
    });
    Ok((TensorTrain::from_cores(cores)?, info))
}

/// Left-orthogonalize every core but the last via a QR sweep. The represented
/// tensor is unchanged; all norm accumulates in the final core.
pub fn left_orthogonalize(tt: &TensorTrain) -> Result<TensorTrain> {
    let mut cores = tt.cores().to_vec();
    for k in 0..cores.len() - 1 {
        let (l, n, r) = (cores[k].left, cores[k].phys, cores[k].right);
        let (q, rmat, kk) = qr_thin(l * n, r, &cores[k].data);
        cores[k] = Core {
            left: l,
            phys: n,
            right: kk,
            data: q,
        };
        let next = &cores[k + 1];
        let (nl, nn, nr) = (next.left, next.phys, next.right);
        debug_assert_eq!(nl, r);
        let merged = matmul(kk, r, nn * nr, &rmat, &next.data);
        cores[k + 1] = Core {
            left: kk,
            phys: nn,
            right: nr,
            data: merged,
        };
    }
    TensorTrain::from_cores(cores)
}

/// Rank truncation: left-orthogonalization sweep followed by a right-to-left
/// SVD sweep keeping at most `r_max` singular values per bond.
pub fn truncate(tt: &TensorTrain, r_max: usize) -> Result<TensorTrain> {
    truncate_with_info(tt, r_max).map(|(tt, _)| tt)
}

pub fn truncate_with_info(tt: &TensorTrain, r_max: usize) -> Result<(TensorTrain, TruncationInfo)> {
    if r_max == 0 {
        return Err(Error::invalid("r_max must be >= 1"));
    }
    let n_modes = tt.num_cores();
    let mut info = TruncationInfo {
        discarded_sq: vec![0.0; n_modes.saturating_sub(1)],
    };
    if n_modes == 1 {
        return Ok((tt.clone(), info));
    }
    let mut cores = left_orthogonalize(tt)?.into_cores();
    for k in (1..n_modes).rev() {
        let (l, n, r) = (cores[k].left, cores[k].phys, cores[k].right);
        let svd = svd_truncated(l, n * r, &cores[k].data, r_max)?;
        info.discarded_sq[k - 1] = svd.discarded_sq;
        cores[k] = Core {
            left: svd.rank,
            phys: n,
            right: r,
            data: svd.vt,
        };
        // carry = u * diag(s), absorbed into the left neighbour
        let mut carry = svd.u;
        for row in carry.chunks_mut(svd.rank) {
            for (v, s) in row.iter_mut().zip(&svd.s) {
                *v *= s;
            }
        }
        let prev = &cores[k - 1];
        let (pl, pn, pr) = (prev.left, prev.phys, prev.right);
        debug_assert_eq!(pr, l);
        let merged = matmul(pl * pn, l, svd.rank, &prev.data, &carry);
        cores[k - 1] = Core {
            left: pl,
            phys: pn,
            right: svd.rank,
            data: merged,
        };
    }
    Ok((TensorTrain::from_cores(cores)?, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::{random_tt, trapezoid_ranks, DEFAULT_DENSE_CAP};
    use crate::QttLayout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_dense(dims: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n: usize = dims.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseTensor::new(dims.to_vec(), data).unwrap()
    }

    #[test]
    fn identity_matrix_has_bond_two() {
        let dense = DenseTensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let tt = tt_svd(&dense, 100).unwrap();
        assert_eq!(tt.rank_profile(), vec![1, 2, 1]);
        let recon = tt.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        assert!(recon.rel_err(&dense) < 1e-14);
    }

    #[test]
    fn rank_one_outer_product_has_unit_bonds() {
        let u: Vec<f64> = (0..8).map(|i| (i as f64 * 0.71).cos()).collect();
        let v: Vec<f64> = (0..8).map(|i| (i as f64 * 1.13).sin() + 0.2).collect();
        let data: Vec<f64> = u
            .iter()
            .flat_map(|a| v.iter().map(move |b| a * b))
            .collect();
        let dense = DenseTensor::new(vec![8, 8], data).unwrap();
        let tt = tt_svd(&dense, 100).unwrap();
        assert_eq!(tt.rank_profile(), vec![1, 1, 1]);
        let recon = tt.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        assert!(recon.rel_err(&dense) < 1e-12);
    }

    #[test]
    fn full_rank_reconstruction_of_random_tensor() {
        let dense = random_dense(&[2; 6], 11);
        let tt = tt_svd(&dense, usize::MAX >> 1).unwrap();
        let recon = tt.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        assert!(recon.rel_err(&dense) <= 1e-10);
    }

    #[test]
    fn grid_round_trips_through_full_rank_decomposition() {
        let layout = QttLayout::new(2, 4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let side = layout.side();
        let values: Vec<f64> = (0..side * side).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g = crate::Grid::new(vec![side, side], values).unwrap();
        let tt = tt_svd(&layout.quantize_grid(&g).unwrap(), usize::MAX >> 1).unwrap();
        let back = tt.to_dense(&layout, DEFAULT_DENSE_CAP).unwrap();
        let err: f64 = back
            .values()
            .iter()
            .zip(g.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err / g.frobenius_norm() <= 1e-10);
    }

    #[test]
    fn exact_ranks_match_trapezoid_profile() {
        // random tensors have generic (maximal) TT ranks, so the exact TT-SVD
        // profile clipped at r_max is the trapezoid profile
        let dense = random_dense(&[4, 4, 4, 4], 5);
        let full = tt_svd(&dense, 1 << 30).unwrap();
        assert_eq!(
            full.rank_profile(),
            trapezoid_ranks(&[4, 4, 4, 4], 1 << 30).unwrap()
        );
        for r_max in [16, 8] {
            let clipped = tt_svd(&dense, r_max).unwrap();
            assert_eq!(
                clipped.rank_profile(),
                trapezoid_ranks(&[4, 4, 4, 4], r_max).unwrap()
            );
        }
    }

    #[test]
    fn tt_svd_rejects_zero_rank() {
        let dense = random_dense(&[2, 2], 1);
        assert!(tt_svd(&dense, 0).is_err());
    }

    #[test]
    fn tt_svd_is_deterministic() {
        let dense = random_dense(&[4, 4, 4], 9);
        let a = tt_svd(&dense, 8).unwrap();
        let b = tt_svd(&dense, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tt_svd_error_obeys_discarded_bound() {
        let dense = random_dense(&[4, 4, 4, 4], 23);
        let (tt, info) = tt_svd_with_info(&dense, 3).unwrap();
        let recon = tt.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        let err_sq: f64 = recon
            .data()
            .iter()
            .zip(dense.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(err_sq <= info.error_sq_bound() * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn left_orthogonalize_preserves_tensor() {
        let layout = QttLayout::new(2, 3).unwrap();
        let tt = random_tt(&layout, 5, 1.0, 3).unwrap();
        let ortho = left_orthogonalize(&tt).unwrap();
        let a = tt.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        let b = ortho.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        assert!(a.rel_err(&b) < 1e-13);
        // all but the last core are left-orthogonal
        for core in &ortho.cores()[..ortho.num_cores() - 1] {
            let rows = core.left * core.phys;
            for a_col in 0..core.right {
                for b_col in 0..core.right {
                    let dot: f64 = (0..rows)
                        .map(|i| {
                            core.data[i * core.right + a_col] * core.data[i * core.right + b_col]
                        })
                        .sum();
                    let expect = if a_col == b_col { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn truncate_at_current_rank_is_identity() {
        let layout = QttLayout::new(2, 3).unwrap();
        let tt = random_tt(&layout, 6, 1.0, 17).unwrap();
        let max = tt.max_rank();
        let cut = truncate(&tt, max).unwrap();
        let a = tt.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        let b = cut.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn truncate_is_idempotent() {
        let layout = QttLayout::new(2, 4).unwrap();
        let tt = random_tt(&layout, 12, 1.0, 29).unwrap();
        let once = truncate(&tt, 3).unwrap();
        let twice = truncate(&once, 3).unwrap();
        let a = once.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        let b = twice.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn truncation_error_bounded_by_discarded_spectrum() {
        let layout = QttLayout::new(2, 4).unwrap();
        let tt = random_tt(&layout, 16, 1.0, 31).unwrap();
        let (cut, info) = truncate_with_info(&tt, 4).unwrap();
        let a = tt.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        let b = cut.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        let err_sq: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        assert!(info.error_sq_bound() > 0.0);
        assert!(err_sq <= info.error_sq_bound() * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn truncation_error_monotone_in_rank() {
        let dense = random_dense(&[4, 4, 4, 4], 77);
        let mut last = f64::INFINITY;
        for r_max in [1, 2, 4, 8, 16, 64] {
            let tt = tt_svd(&dense, r_max).unwrap();
            let recon = tt.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
            let err = recon.rel_err(&dense);
            assert!(err <= last * (1.0 + 1e-12) + 1e-14);
            last = err;
        }
    }
}
