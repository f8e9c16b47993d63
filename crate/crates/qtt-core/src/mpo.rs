//! Matrix product operators and their application to tensor trains.

use crate::error::{Error, Result};
use crate::tt::{Core, DenseTensor, TensorTrain};

/// Order-4 MPO core laid out row-major as `[left][out][in][right]`.
///
/// A terminal core with no input index is represented with `n_in = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpoCore {
    pub left: usize,
    pub n_out: usize,
    pub n_in: usize,
    pub right: usize,
    pub data: Vec<f64>,
}

impl MpoCore {
    pub fn zeros(left: usize, n_out: usize, n_in: usize, right: usize) -> MpoCore {
        MpoCore {
            left,
            n_out,
            n_in,
            right,
            data: vec![0.0; left * n_out * n_in * right],
        }
    }

    #[inline]
    pub fn at(&self, s: usize, i: usize, j: usize, sp: usize) -> f64 {
        self.data[((s * self.n_out + i) * self.n_in + j) * self.right + sp]
    }

    #[inline]
    pub fn at_mut(&mut self, s: usize, i: usize, j: usize, sp: usize) -> &mut f64 {
        &mut self.data[((s * self.n_out + i) * self.n_in + j) * self.right + sp]
    }
}

/// A chain of MPO cores with matching virtual bonds.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpo {
    cores: Vec<MpoCore>,
}

impl Mpo {
    pub fn from_cores(cores: Vec<MpoCore>) -> Result<Mpo> {
        if cores.is_empty() {
            return Err(Error::invalid("MPO needs at least one core"));
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(Error::invalid("MPO boundary bonds must be 1"));
        }
        for w in cores.windows(2) {
            if w[0].right != w[1].left {
                return Err(Error::shape(format!(
                    "adjacent MPO cores disagree on bond: {} vs {}",
                    w[0].right, w[1].left
                )));
            }
        }
        for (k, c) in cores.iter().enumerate() {
            if c.data.len() != c.left * c.n_out * c.n_in * c.right {
                return Err(Error::shape(format!("MPO core {k} data length mismatch")));
            }
        }
        Ok(Mpo { cores })
    }

    /// Identity operator over the given mode sizes (diagonal rank-1 cores).
    pub fn identity(phys_dims: &[usize]) -> Result<Mpo> {
        if phys_dims.is_empty() {
            return Err(Error::invalid("empty mode list"));
        }
        let mut cores = Vec::with_capacity(phys_dims.len());
        for &n in phys_dims {
            let mut c = MpoCore::zeros(1, n, n, 1);
            for i in 0..n {
                *c.at_mut(0, i, i, 0) = 1.0;
            }
            cores.push(c);
        }
        Mpo::from_cores(cores)
    }

    pub fn cores(&self) -> &[MpoCore] {
        &self.cores
    }

    pub fn num_cores(&self) -> usize {
        self.cores.len()
    }

    pub fn bond_profile(&self) -> Vec<usize> {
        let mut p = Vec::with_capacity(self.cores.len() + 1);
        p.push(self.cores[0].left);
        for c in &self.cores {
            p.push(c.right);
        }
        p
    }

    pub fn out_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.n_out).collect()
    }

    pub fn in_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.n_in).collect()
    }

    /// Contract every virtual bond, producing the dense operator matrix of
    /// shape `[prod out dims, prod in dims]` (row-major, first core most
    /// significant on both sides).
    pub fn to_dense_matrix(&self, cap: usize) -> Result<DenseTensor> {
        let out_total: usize = self.out_dims().iter().product();
        let in_total: usize = self.in_dims().iter().product();
        let total = out_total
            .checked_mul(in_total)
            .ok_or_else(|| Error::ResourceLimit("dense operator overflow".into()))?;
        if total > cap {
            return Err(Error::ResourceLimit(format!(
                "dense operator of {total} entries exceeds cap {cap}"
            )));
        }
        // acc logical shape [out_p, in_p, s], row-major
        let mut acc = vec![1.0f64];
        let mut out_p = 1usize;
        let mut in_p = 1usize;
        let mut bond = 1usize;
        for core in &self.cores {
            let (no, ni, right) = (core.n_out, core.n_in, core.right);
            let mut next = vec![0.0f64; out_p * no * in_p * ni * right];
            for op in 0..out_p {
                for ip in 0..in_p {
                    let arow = &acc[(op * in_p + ip) * bond..][..bond];
                    for i in 0..no {
                        for j in 0..ni {
                            let orow = &mut next
                                [((op * no + i) * (in_p * ni) + (ip * ni + j)) * right..][..right];
                            for (s, &av) in arow.iter().enumerate() {
                                if av == 0.0 {
                                    continue;
                                }
                                for (o, sp) in orow.iter_mut().zip(0..right) {
                                    *o += av * core.at(s, i, j, sp);
                                }
                            }
                        }
                    }
                }
            }
            acc = next;
            out_p *= no;
            in_p *= ni;
            bond = right;
        }
        DenseTensor::new(vec![out_total, in_total], acc)
    }
}

/// Apply an MPO to a tensor train core-wise.
///
/// The MPO may have one trailing core more than the train; trailing cores must
/// have `n_in = 1` and extend the output chain (resolution-doubling operators
/// use this). Every output bond is the product of the TT and MPO bonds at that
/// cut.
pub fn apply_mpo(mpo: &Mpo, tt: &TensorTrain) -> Result<TensorTrain> {
    let d_tt = tt.num_cores();
    let d_mpo = mpo.num_cores();
    if d_mpo != d_tt && d_mpo != d_tt + 1 {
        return Err(Error::shape(format!(
            "MPO with {d_mpo} cores cannot act on train with {d_tt} cores"
        )));
    }
    for (k, (mc, tc)) in mpo.cores().iter().zip(tt.cores()).enumerate() {
        if mc.n_in != tc.phys {
            return Err(Error::shape(format!(
                "MPO core {k} input dim {} vs train mode {}",
                mc.n_in, tc.phys
            )));
        }
    }
    let unit = Core {
        left: 1,
        phys: 1,
        right: 1,
        data: vec![1.0],
    };
    let mut out = Vec::with_capacity(d_mpo);
    for (k, mc) in mpo.cores().iter().enumerate() {
        let tc = if k < d_tt { &tt.cores()[k] } else { &unit };
        if k >= d_tt && mc.n_in != 1 {
            return Err(Error::shape(format!(
                "trailing MPO core {k} must have n_in = 1, got {}",
                mc.n_in
            )));
        }
        let (sl, sr) = (mc.left, mc.right);
        let (rl, rr) = (tc.left, tc.right);
        let mut core = Core::zeros(sl * rl, mc.n_out, sr * rr);
        for s in 0..sl {
            for r in 0..rl {
                for i in 0..mc.n_out {
                    for j in 0..mc.n_in {
                        for sp in 0..sr {
                            let w = mc.at(s, i, j, sp);
                            if w == 0.0 {
                                continue;
                            }
                            let trow = tc.row(r, j);
                            let orow = &mut core.data
                                [((s * rl + r) * mc.n_out + i) * (sr * rr) + sp * rr..][..rr];
                            for (o, &t) in orow.iter_mut().zip(trow) {
                                *o += w * t;
                            }
                        }
                    }
                }
            }
        }
        out.push(core);
    }
    TensorTrain::from_cores(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::{random_tt, DEFAULT_DENSE_CAP};
    use crate::QttLayout;

    #[test]
    fn identity_mpo_preserves_train() {
        let layout = QttLayout::new(2, 3).unwrap();
        let tt = random_tt(&layout, 5, 1.0, 2).unwrap();
        let id = Mpo::identity(&tt.phys_dims()).unwrap();
        let applied = apply_mpo(&id, &tt).unwrap();
        let a = tt.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        let b = applied.to_dense_tensor(DEFAULT_DENSE_CAP).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-14);
        }
    }

    #[test]
    fn output_bonds_are_products() {
        let layout = QttLayout::new(1, 3).unwrap();
        let tt = random_tt(&layout, 2, 1.0, 4).unwrap();
        assert_eq!(tt.rank_profile(), vec![1, 2, 2, 1]);
        let id = Mpo::identity(&tt.phys_dims()).unwrap();
        let applied = apply_mpo(&id, &tt).unwrap();
        assert_eq!(applied.rank_profile(), vec![1, 2, 2, 1]);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let tt = crate::tt::TensorTrain::constant(&[4, 4], 1.0).unwrap();
        let id = Mpo::identity(&[2, 2]).unwrap();
        assert!(apply_mpo(&id, &tt).is_err());
        let id = Mpo::identity(&[4, 4, 4, 4]).unwrap();
        assert!(apply_mpo(&id, &tt).is_err());
    }

    #[test]
    fn dense_matrix_of_identity() {
        let id = Mpo::identity(&[2, 2]).unwrap();
        let m = id.to_dense_matrix(DEFAULT_DENSE_CAP).unwrap();
        assert_eq!(m.dims(), &[4, 4]);
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert_eq!(m.data()[r * 4 + c], want);
            }
        }
    }
}
