//! Binary model checkpoints.
//!
//! All formats share the layout: a 4-byte magic, little-endian `u32` header
//! fields, then contiguous little-endian `f64` payload arrays.
//!
//! - `QTT1`: d, D, core count (= D), rank profile (D+1 u32s), then each core
//!   in `[R_k][n_k][R_{k+1}]` order.
//! - `CPD1`: mode count d, rank R, mode sizes (d u32s), then d factors, each
//!   `[n_k][R]`.
//! - `TUK1`: mode count d, core dims (d u32s), mode sizes (d u32s), then the
//!   core (row-major) and d factors, each `[m_k][n_k]`.

use crate::baselines::{BaselineModel, CpModel, TuckerModel};
use crate::error::{Error, Result};
use crate::layout::QttLayout;
use crate::tt::{Core, TensorTrain};
use std::fs;
use std::path::Path;

const QTT_MAGIC: &[u8; 4] = b"QTT1";
const CP_MAGIC: &[u8; 4] = b"CPD1";
const TUCKER_MAGIC: &[u8; 4] = b"TUK1";

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 4]) -> Writer {
        Writer {
            buf: magic.to_vec(),
        }
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::invalid("field exceeds u32 range"))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Reader<'a>> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(Error::Format(format!(
                "bad magic, expected {:?}",
                std::str::from_utf8(magic).expect("magics are ascii")
            )));
        }
        Ok(Reader { bytes, pos: 4 })
    }

    fn u32(&mut self) -> Result<usize> {
        if self.pos + 4 > self.bytes.len() {
            return Err(Error::Format("truncated checkpoint header".into()));
        }
        let v = u32::from_le_bytes(
            self.bytes[self.pos..self.pos + 4]
                .try_into()
                .expect("4 bytes"),
        );
        self.pos += 4;
        Ok(v as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let need = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format("overflow".into()))?;
        if self.pos + need > self.bytes.len() {
            return Err(Error::Format("truncated checkpoint payload".into()));
        }
        let out = self.bytes[self.pos..self.pos + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        self.pos += need;
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes in checkpoint",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Serialize a QTT checkpoint to bytes (exposed for determinism tests).
pub fn qtt_to_bytes(tt: &TensorTrain, layout: &QttLayout) -> Result<Vec<u8>> {
    if tt.phys_dims() != layout.phys_dims() {
        return Err(Error::shape("train does not match layout"));
    }
    let mut w = Writer::new(QTT_MAGIC);
    w.u32(layout.spatial_dim())?;
    w.u32(layout.depth())?;
    w.u32(tt.num_cores())?;
    for r in tt.rank_profile() {
        w.u32(r)?;
    }
    for core in tt.cores() {
        w.f64s(&core.data);
    }
    Ok(w.buf)
}

pub fn save_qtt(tt: &TensorTrain, layout: &QttLayout, path: &Path) -> Result<()> {
    fs::write(path, qtt_to_bytes(tt, layout)?)?;
    Ok(())
}

pub fn load_qtt(path: &Path) -> Result<(TensorTrain, QttLayout)> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, QTT_MAGIC)?;
    let d = r.u32()?;
    let depth = r.u32()?;
    let count = r.u32()?;
    if count != depth {
        return Err(Error::Format(format!(
            "core count {count} does not match depth {depth}"
        )));
    }
    let layout = QttLayout::new(d, depth)?;
    let mut profile = Vec::with_capacity(depth + 1);
    for _ in 0..=depth {
        profile.push(r.u32()?);
    }
    let phys = layout.core_phys_dim();
    let mut cores = Vec::with_capacity(depth);
    for k in 0..depth {
        let (l, rr) = (profile[k], profile[k + 1]);
        let data = r.f64s(l * phys * rr)?;
        cores.push(Core {
            left: l,
            phys,
            right: rr,
            data,
        });
    }
    r.finish()?;
    Ok((TensorTrain::from_cores(cores)?, layout))
}

pub fn baseline_to_bytes(model: &BaselineModel) -> Result<Vec<u8>> {
    match model {
        BaselineModel::Cp(m) => {
            let mut w = Writer::new(CP_MAGIC);
            w.u32(m.dims.len())?;
            w.u32(m.rank)?;
            for &n in &m.dims {
                w.u32(n)?;
            }
            for f in &m.factors {
                w.f64s(f);
            }
            Ok(w.buf)
        }
        BaselineModel::Tucker(m) => {
            let mut w = Writer::new(TUCKER_MAGIC);
            w.u32(m.dims.len())?;
            for &c in &m.core_dims {
                w.u32(c)?;
            }
            for &n in &m.dims {
                w.u32(n)?;
            }
            w.f64s(&m.core);
            for f in &m.factors {
                w.f64s(f);
            }
            Ok(w.buf)
        }
    }
}

pub fn save_baseline(model: &BaselineModel, path: &Path) -> Result<()> {
    fs::write(path, baseline_to_bytes(model)?)?;
    Ok(())
}

pub fn load_baseline(path: &Path) -> Result<BaselineModel> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(CP_MAGIC) {
        let mut r = Reader::new(&bytes, CP_MAGIC)?;
        let d = r.u32()?;
        let rank = r.u32()?;
        if d == 0 || rank == 0 {
            return Err(Error::Format("empty CP checkpoint".into()));
        }
        let mut dims = Vec::with_capacity(d);
        for _ in 0..d {
            dims.push(r.u32()?);
        }
        let mut factors = Vec::with_capacity(d);
        for &n in &dims {
            factors.push(r.f64s(n * rank)?);
        }
        r.finish()?;
        Ok(BaselineModel::Cp(CpModel {
            rank,
            factors,
            dims,
        }))
    } else if bytes.starts_with(TUCKER_MAGIC) {
        let mut r = Reader::new(&bytes, TUCKER_MAGIC)?;
        let d = r.u32()?;
        if d == 0 {
            return Err(Error::Format("empty Tucker checkpoint".into()));
        }
        let mut core_dims = Vec::with_capacity(d);
        for _ in 0..d {
            core_dims.push(r.u32()?);
        }
        let mut dims = Vec::with_capacity(d);
        for _ in 0..d {
            dims.push(r.u32()?);
        }
        let core = r.f64s(core_dims.iter().product())?;
        let mut factors = Vec::with_capacity(d);
        for (m, n) in core_dims.iter().zip(&dims) {
            factors.push(r.f64s(m * n)?);
        }
        r.finish()?;
        Ok(BaselineModel::Tucker(TuckerModel {
            core_dims,
            core,
            factors,
            dims,
        }))
    } else {
        Err(Error::Format("unknown checkpoint magic".into()))
    }
}
