//! Dense-oracle checks for the prolongation operator: the MPO contraction
//! must agree with the directly-constructed interpolation matrix applied per
//! axis, across every supported dimensionality.

use qtt_core::grid::Grid;
use qtt_core::layout::QttLayout;
use qtt_core::mpo::apply_mpo;
use qtt_core::prolong::{prolong, prolongation_mpo_1d, prolongation_mpo_nd};
use qtt_core::tt::{random_tt, DEFAULT_DENSE_CAP};

/// `P[2t+1, t] = 1`, `P[2t, t] = 1/2`, `P[2t, t-1] = 1/2`: the dense
/// resolution-doubling interpolation matrix, built from its definition.
fn dense_p_matrix(depth: usize) -> Vec<f64> {
    let n = 1usize << depth;
    let mut p = vec![0.0; 2 * n * n];
    for t in 0..n {
        p[(2 * t + 1) * n + t] = 1.0;
        p[(2 * t) * n + t] = 0.5;
        if t > 0 {
            p[(2 * t) * n + t - 1] = 0.5;
        }
    }
    p
}

/// Apply the dense interpolation matrix along every axis of a grid.
fn dense_prolong(grid: &Grid) -> Grid {
    let d = grid.spatial_dim();
    let side = grid.side().unwrap();
    let depth = side.trailing_zeros() as usize;
    let p = dense_p_matrix(depth);
    let fine = 2 * side;
    let mut cur = grid.values().to_vec();
    let mut dims: Vec<usize> = grid.dims().to_vec();
    for axis in 0..d {
        let lead: usize = dims[..axis].iter().product();
        let trail: usize = dims[axis + 1..].iter().product();
        let n = dims[axis];
        let mut next = vec![0.0; lead * fine * trail];
        for l in 0..lead {
            for u in 0..fine {
                for t in 0..trail {
                    let mut acc = 0.0;
                    for c in 0..n {
                        let w = p[u * n + c];
                        if w != 0.0 {
                            acc += w * cur[(l * n + c) * trail + t];
                        }
                    }
                    next[(l * fine + u) * trail + t] = acc;
                }
            }
        }
        cur = next;
        dims[axis] = fine;
    }
    Grid::new(dims, cur).unwrap()
}

fn rel_err(a: &Grid, b: &Grid) -> f64 {
    let num: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    num / b.frobenius_norm().max(1e-300)
}

#[test]
fn mpo_matrix_equals_interpolation_matrix_1d() {
    // in 1D the quantized order is the plain binary order, so the contracted
    // operator must equal the interpolation matrix entry for entry
    for depth in 1..=4usize {
        let mpo = prolongation_mpo_1d(depth).unwrap();
        let m = mpo.to_dense_matrix(DEFAULT_DENSE_CAP).unwrap();
        assert_eq!(m.data(), dense_p_matrix(depth).as_slice(), "depth {depth}");
    }
}

#[test]
fn mpo_matrix_equals_permuted_kronecker_everywhere() {
    // exhaustive dense-equivalence sweep: contract the nD MPO and compare
    // against per-axis application of the printed matrix, entrywise exact
    for d in 2..=3usize {
        for depth in 1..=(5 - d) {
            let layout = QttLayout::new(d, depth).unwrap();
            let fine = layout.deeper().unwrap();
            let mpo = prolongation_mpo_nd(&layout).unwrap();
            let m = mpo.to_dense_matrix(DEFAULT_DENSE_CAP).unwrap();
            let side = layout.side();
            let n_in = layout.total_entries();
            // one dense basis grid per input position
            for col in 0..n_in {
                let mut g = Grid::zeros(vec![side; d]).unwrap();
                g.values_mut()[col] = 1.0;
                let want = dense_prolong(&g);
                let want_q = fine.quantize_grid(&want).unwrap();
                let q_col = {
                    let q = layout.quantize_grid(&g).unwrap();
                    q.data().iter().position(|&v| v == 1.0).unwrap()
                };
                for row in 0..m.dims()[0] {
                    let got = m.data()[row * n_in + q_col];
                    assert_eq!(
                        got,
                        want_q.data()[row],
                        "d={d} depth={depth} row={row} col={col}"
                    );
                }
            }
        }
    }
}

#[test]
fn prolonged_2d_qtt_matches_bilinear_oracle() {
    let layout = QttLayout::new(2, 4).unwrap(); // 16x16
    let tt = random_tt(&layout, 16, 1.0, 41).unwrap();
    let coarse = tt.to_dense(&layout, DEFAULT_DENSE_CAP).unwrap();
    let (up, up_layout) = prolong(&tt, &layout, usize::MAX >> 2).unwrap();
    let got = up.to_dense(&up_layout, DEFAULT_DENSE_CAP).unwrap();
    let want = dense_prolong(&coarse);
    assert!(
        rel_err(&got, &want) <= 1e-8,
        "rel err {}",
        rel_err(&got, &want)
    );
}

#[test]
fn prolonged_3d_qtt_matches_trilinear_oracle() {
    let layout = QttLayout::new(3, 3).unwrap(); // 8^3
    let tt = random_tt(&layout, 12, 1.0, 43).unwrap();
    let coarse = tt.to_dense(&layout, DEFAULT_DENSE_CAP).unwrap();
    let (up, up_layout) = prolong(&tt, &layout, usize::MAX >> 2).unwrap();
    let got = up.to_dense(&up_layout, DEFAULT_DENSE_CAP).unwrap();
    let want = dense_prolong(&coarse);
    assert!(
        rel_err(&got, &want) <= 1e-8,
        "rel err {}",
        rel_err(&got, &want)
    );
}

#[test]
fn prolongation_is_linear() {
    let layout = QttLayout::new(2, 3).unwrap();
    let t1 = random_tt(&layout, 4, 1.0, 11).unwrap();
    let t2 = random_tt(&layout, 4, 1.0, 12).unwrap();
    let g1 = t1.to_dense(&layout, DEFAULT_DENSE_CAP).unwrap();
    let g2 = t2.to_dense(&layout, DEFAULT_DENSE_CAP).unwrap();
    let (u1, up_layout) = prolong(&t1, &layout, usize::MAX >> 2).unwrap();
    let (u2, _) = prolong(&t2, &layout, usize::MAX >> 2).unwrap();
    let f1 = u1.to_dense(&up_layout, DEFAULT_DENSE_CAP).unwrap();
    let f2 = u2.to_dense(&up_layout, DEFAULT_DENSE_CAP).unwrap();
    // sum of prolonged fields == prolongation of the summed field
    let summed = Grid::new(
        g1.dims().to_vec(),
        g1.values()
            .iter()
            .zip(g2.values())
            .map(|(a, b)| 0.7 * a + 1.3 * b)
            .collect(),
    )
    .unwrap();
    let want = dense_prolong(&summed);
    let got = Grid::new(
        f1.dims().to_vec(),
        f1.values()
            .iter()
            .zip(f2.values())
            .map(|(a, b)| 0.7 * a + 1.3 * b)
            .collect(),
    )
    .unwrap();
    assert!(rel_err(&got, &want) <= 1e-10);
}

#[test]
fn rank_law_before_truncation() {
    let layout = QttLayout::new(2, 4).unwrap();
    let tt = random_tt(&layout, 6, 1.0, 19).unwrap();
    let mpo = prolongation_mpo_nd(&layout).unwrap();
    let out = apply_mpo(&mpo, &tt).unwrap();
    let tt_bonds = tt.rank_profile();
    let mpo_bonds = mpo.bond_profile();
    let out_bonds = out.rank_profile();
    for (k, &b) in out_bonds.iter().enumerate() {
        // the train is one core shorter than the operator; its boundary bond
        // (1) pads the trailing cuts
        let tb = tt_bonds.get(k).copied().unwrap_or(1);
        assert_eq!(b, tb * mpo_bonds[k], "cut {k}");
    }
}

#[test]
fn even_axis_positions_copy_input_exactly() {
    // per-axis copy positions (odd fine indices) hold the coarse samples
    let layout = QttLayout::new(2, 3).unwrap();
    let tt = random_tt(&layout, 5, 1.0, 23).unwrap();
    let coarse = tt.to_dense(&layout, DEFAULT_DENSE_CAP).unwrap();
    let mpo = prolongation_mpo_nd(&layout).unwrap();
    let up = apply_mpo(&mpo, &tt).unwrap();
    let fine = up
        .to_dense(&layout.deeper().unwrap(), DEFAULT_DENSE_CAP)
        .unwrap();
    let side = layout.side();
    for x in 0..side {
        for y in 0..side {
            let a = coarse.get(&[x, y]);
            let b = fine.get(&[2 * x + 1, 2 * y + 1]);
            assert_eq!(a, b, "copy position ({x},{y})");
        }
    }
}

#[test]
fn one_d_matrix_printed_form() {
    // spot-check the depth-2 printed matrix through the integration surface
    let mpo = prolongation_mpo_1d(2).unwrap();
    let m = mpo.to_dense_matrix(DEFAULT_DENSE_CAP).unwrap();
    assert_eq!(m.data(), dense_p_matrix(2).as_slice());
}
