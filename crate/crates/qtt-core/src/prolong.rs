//! The prolongation operator: global linear interpolation in TT form.
//!
//! In one dimension the dense operator mapping `2^D` samples to `2^(D+1)`
//! samples places every coarse sample at odd fine positions and the average of
//! neighbouring coarse samples at even positions (the first fine sample gets
//! half the first coarse sample). As an MPO over MSB-first binary modes this
//! is a carry chain with bond dimension 2: the extra output core decides
//! between the copy branch (odd positions, weight 1) and the averaging branch
//! (even positions, weight 1/2 with an optional +1 carry that propagates
//! towards the most significant mode and must not overflow).

use crate::decomp::truncate;
use crate::error::{Error, Result};
use crate::layout::QttLayout;
use crate::mpo::{apply_mpo, Mpo, MpoCore};
use crate::tt::TensorTrain;

/// 1D prolongation MPO with `depth + 1` cores; entries are 0, 1/2 or 1.
pub fn prolongation_mpo_1d(depth: usize) -> Result<Mpo> {
    if depth == 0 {
        return Err(Error::invalid("depth must be >= 1"));
    }
    let mut cores = Vec::with_capacity(depth + 1);

    // first core [1, 2, 2, 2]; right bond carries the increment into this bit
    let mut first = MpoCore::zeros(1, 2, 2, 2);
    *first.at_mut(0, 0, 0, 0) = 1.0; // no carry: copy bit
    *first.at_mut(0, 1, 1, 0) = 1.0;
    *first.at_mut(0, 1, 0, 1) = 1.0; // carry absorbed; j=1 would overflow
    cores.push(first);

    // middle cores [2, 2, 2, 2]; left bond = carry out, right bond = carry in
    for _ in 1..depth {
        let mut mid = MpoCore::zeros(2, 2, 2, 2);
        *mid.at_mut(0, 0, 0, 0) = 1.0;
        *mid.at_mut(0, 1, 1, 0) = 1.0;
        *mid.at_mut(0, 1, 0, 1) = 1.0; // j=0 + carry -> i=1, carry stops
        *mid.at_mut(1, 0, 1, 1) = 1.0; // j=1 + carry -> i=0, carry ripples
        cores.push(mid);
    }

    // terminal core [2, 2, 1, 1]: the new least-significant output bit
    let mut last = MpoCore::zeros(2, 2, 1, 1);
    *last.at_mut(0, 1, 0, 0) = 1.0; // odd fine position: exact copy
    *last.at_mut(0, 0, 0, 0) = 0.5; // even: half of the same coarse sample
    *last.at_mut(1, 0, 0, 0) = 0.5; // even: half of the previous coarse sample
    cores.push(last);

    Mpo::from_cores(cores)
}

/// Tensor-product prolongation MPO for `layout.spatial_dim()` axes.
///
/// Core `k` is the outer product of `d` copies of the 1D core `k` over both
/// physical and virtual indices, packed x-major to match the interleaved QTT
/// index order. Bond dimension is `2^d`.
pub fn prolongation_mpo_nd(layout: &QttLayout) -> Result<Mpo> {
    let d = layout.spatial_dim();
    let one_d = prolongation_mpo_1d(layout.depth())?;
    if d == 1 {
        return Ok(one_d);
    }
    let mut cores = Vec::with_capacity(one_d.num_cores());
    for c in one_d.cores() {
        let (sl, no, ni, sr) = (c.left, c.n_out, c.n_in, c.right);
        let (psl, pno, pni, psr) = (
            sl.pow(d as u32),
            no.pow(d as u32),
            ni.pow(d as u32),
            sr.pow(d as u32),
        );
        let mut core = MpoCore::zeros(psl, pno, pni, psr);
        for s in 0..psl {
            for i in 0..pno {
                for j in 0..pni {
                    for sp in 0..psr {
                        let mut v = 1.0;
                        for axis in 0..d {
                            let shift = d - 1 - axis;
                            let sa = digit(s, shift, sl);
                            let ia = digit(i, shift, no);
                            let ja = digit(j, shift, ni);
                            let spa = digit(sp, shift, sr);
                            v *= c.at(sa, ia, ja, spa);
                            if v == 0.0 {
                                break;
                            }
                        }
                        if v != 0.0 {
                            *core.at_mut(s, i, j, sp) = v;
                        }
                    }
                }
            }
        }
        cores.push(core);
    }
    Mpo::from_cores(cores)
}

/// Extract the base-`radix` digit of `packed` at position `shift` (x-major
/// packing uses radix 2 per axis; a radix of 1 always yields 0).
#[inline]
fn digit(packed: usize, shift: usize, radix: usize) -> usize {
    if radix <= 1 {
        0
    } else {
        (packed >> shift) & 1
    }
}

/// Upsample a QTT one level: apply the prolongation MPO, then truncate every
/// bond to `r_max`. Returns the deeper train and its layout.
pub fn prolong(
    tt: &TensorTrain,
    layout: &QttLayout,
    r_max: usize,
) -> Result<(TensorTrain, QttLayout)> {
    if tt.phys_dims() != layout.phys_dims() {
        return Err(Error::shape(format!(
            "train modes {:?} do not match layout (d={}, D={})",
            tt.phys_dims(),
            layout.spatial_dim(),
            layout.depth()
        )));
    }
    let mpo = prolongation_mpo_nd(layout)?;
    let expanded = apply_mpo(&mpo, tt)?;
    let truncated = truncate(&expanded, r_max)?;
    Ok((truncated, layout.deeper()?))
}
