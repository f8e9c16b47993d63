//! Grid I/O, pyramid construction, noise injection and observation masks.
//!
//! 2D grids travel as binary NetPBM (PGM `P5` for gray data and masks, PPM
//! `P6` converted to luma on load); 3D grids as raw little-endian `f32` with a
//! one-line JSON sidecar `{"dims":[..]}` next to the data file. Loaded values
//! are scaled and clamped to `[0, 1]`.

use crate::error::{Error, Result};
use crate::grid::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fs;
use std::io::Write;
use std::path::Path;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Additive i.i.d. noise description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Laplace,
}

// ---------------------------------------------------------------------------
// Loading and saving
// ---------------------------------------------------------------------------

/// Load a grid from disk: `P5`/`P6` NetPBM for 2D, raw f32 + sidecar for 3D.
pub fn load_grid(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        return parse_netpbm(&bytes);
    }
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        return load_volume(path, &sidecar);
    }
    Err(Error::Format(format!(
        "{}: not a P5/P6 NetPBM file and no {} sidecar found",
        path.display(),
        sidecar.display()
    )))
}

/// Save a grid: 16-bit PGM for 2D, raw little-endian f32 + sidecar for 3D.
pub fn save_grid(grid: &Grid, path: &Path) -> Result<()> {
    match grid.spatial_dim() {
        2 => save_pgm16(grid, path),
        3 => save_volume(grid, path),
        _ => Err(Error::invalid("only 2D and 3D grids are saved")),
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    std::path::PathBuf::from(s)
}

struct NetpbmHeader {
    color: bool,
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_netpbm_header(bytes: &[u8]) -> Result<NetpbmHeader> {
    let color = match &bytes[..2] {
        b"P5" => false,
        b"P6" => true,
        _ => return Err(Error::Format("expected P5 or P6 magic".into())),
    };
    let mut pos = 2usize;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed NetPBM header".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are utf8");
        *field = text
            .parse()
            .map_err(|_| Error::Format("NetPBM header field out of range".into()))?;
    }
    // single whitespace byte separates header from raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing raster separator".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::Format("zero NetPBM dimensions".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    Ok(NetpbmHeader {
        color,
        width: width as usize,
        height: height as usize,
        maxval,
        data_offset: pos,
    })
}

fn parse_netpbm(bytes: &[u8]) -> Result<Grid> {
    let h = parse_netpbm_header(bytes)?;
    let channels = if h.color { 3 } else { 1 };
    let wide = h.maxval > 255;
    let bytes_per_sample = if wide { 2 } else { 1 };
    let raster = &bytes[h.data_offset..];
    let expected = h.width * h.height * channels * bytes_per_sample;
    if raster.len() < expected {
        return Err(Error::Format(format!(
            "raster truncated: expected {expected} bytes, found {}",
            raster.len()
        )));
    }
    let max = h.maxval as f64;
    let sample = |i: usize| -> f64 {
        let v = if wide {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64
        } else {
            raster[i] as f64
        };
        (v / max).clamp(0.0, 1.0)
    };
    let mut values = Vec::with_capacity(h.width * h.height);
    for px in 0..h.width * h.height {
        if h.color {
            let v = (0..3).map(|c| LUMA[c] * sample(px * 3 + c)).sum::<f64>();
            values.push(v.clamp(0.0, 1.0));
        } else {
            values.push(sample(px));
        }
    }
    // rows are the major axis; geometry violations are file-format errors here
    Grid::new(vec![h.height, h.width], values).map_err(into_format_error)
}

fn into_format_error(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) | Error::ShapeMismatch(m) => Error::Format(m),
        other => other,
    }
}

fn save_pgm16(grid: &Grid, path: &Path) -> Result<()> {
    let dims = grid.dims();
    let (rows, cols) = (dims[0], dims[1]);
    let mut out = Vec::with_capacity(32 + grid.len() * 2);
    write!(out, "P5\n{cols} {rows}\n65535\n")?;
    for &v in grid.values() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

fn load_volume(path: &Path, sidecar: &Path) -> Result<Grid> {
    let meta = fs::read_to_string(sidecar)?;
    let dims = parse_dims_json(&meta).ok_or_else(|| {
        Error::Format(format!("{}: expected {{\"dims\":[..]}}", sidecar.display()))
    })?;
    let bytes = fs::read(path)?;
    let total: usize = dims.iter().product();
    if bytes.len() != total * 4 {
        return Err(Error::Format(format!(
            "volume has {} bytes, dims {:?} need {}",
            bytes.len(),
            dims,
            total * 4
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Grid::new(dims, values).map_err(into_format_error)
}

fn save_volume(grid: &Grid, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(grid.len() * 4);
    for &v in grid.values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    let dims: Vec<String> = grid.dims().iter().map(|d| d.to_string()).collect();
    fs::write(
        sidecar_path(path),
        format!("{{\"dims\":[{}]}}\n", dims.join(",")),
    )?;
    Ok(())
}

/// Strict parser for the one-line sidecar schema `{"dims":[a,b,...]}`.
fn parse_dims_json(text: &str) -> Option<Vec<usize>> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let inner = compact.strip_prefix("{\"dims\":[")?.strip_suffix("]}")?;
    let mut dims = Vec::new();
    for part in inner.split(',') {
        dims.push(part.parse().ok()?);
    }
    (!dims.is_empty()).then_some(dims)
}

/// Load an observation mask from a `P5` PGM: 0 means missing, nonzero observed.
pub fn load_mask(path: &Path, expected_dims: &[usize]) -> Result<Vec<bool>> {
    let bytes = fs::read(path)?;
    if !bytes.starts_with(b"P5") {
        return Err(Error::Format("mask must be a P5 PGM".into()));
    }
    let h = parse_netpbm_header(&bytes)?;
    if expected_dims.len() != 2 || [h.height, h.width] != expected_dims[..2] {
        return Err(Error::shape(format!(
            "mask is {}x{}, grid dims {:?}",
            h.height, h.width, expected_dims
        )));
    }
    let wide = h.maxval > 255;
    let raster = &bytes[h.data_offset..];
    let n = h.width * h.height;
    let expected = n * if wide { 2 } else { 1 };
    if raster.len() < expected {
        return Err(Error::Format("mask raster truncated".into()));
    }
    Ok((0..n)
        .map(|i| {
            if wide {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) != 0
            } else {
                raster[i] != 0
            }
        })
        .collect())
}

/// Save an observation mask as an 8-bit `P5` PGM (255 observed, 0 missing).
pub fn save_mask(mask: &[bool], dims: &[usize], path: &Path) -> Result<()> {
    if dims.len() != 2 || dims.iter().product::<usize>() != mask.len() {
        return Err(Error::shape("mask/dims mismatch or not 2D"));
    }
    let mut out = Vec::with_capacity(32 + mask.len());
    write!(out, "P5\n{} {}\n255\n", dims[1], dims[0])?;
    out.extend(mask.iter().map(|&o| if o { 255u8 } else { 0 }));
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Pyramids
// ---------------------------------------------------------------------------

/// Halve the resolution along every axis by plain block averaging.
pub fn downsample_avg(grid: &Grid) -> Result<Grid> {
    downsample_impl(grid, false)
}

/// Masked average pooling: each output value averages the observed entries of
/// its block; the output is observed iff any input in the block is.
pub fn masked_avg_pool(grid: &Grid) -> Result<Grid> {
    if grid.mask().is_none() {
        return Err(Error::invalid("masked pooling needs an observation mask"));
    }
    downsample_impl(grid, true)
}

fn downsample_impl(grid: &Grid, masked: bool) -> Result<Grid> {
    let dims = grid.dims();
    if dims.iter().any(|&n| n < 2) {
        return Err(Error::invalid(format!("cannot halve dims {dims:?}")));
    }
    let out_dims: Vec<usize> = dims.iter().map(|&n| n / 2).collect();
    let out_len: usize = out_dims.iter().product();
    let mut values = vec![0.0; out_len];
    let mut out_mask = vec![false; out_len];
    let d = dims.len();
    let mask = grid.mask();

    let mut out_coords = vec![0usize; d];
    for (out_lin, value) in values.iter_mut().enumerate() {
        // decode output coordinates
        let mut rem = out_lin;
        for axis in (0..d).rev() {
            out_coords[axis] = rem % out_dims[axis];
            rem /= out_dims[axis];
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for corner in 0..(1usize << d) {
            let mut lin = 0usize;
            for axis in 0..d {
                let c = out_coords[axis] * 2 + ((corner >> (d - 1 - axis)) & 1);
                lin = lin * dims[axis] + c;
            }
            let observed = mask.is_none_or(|m| m[lin]);
            if !masked || observed {
                sum += grid.values()[lin];
                count += 1;
            }
        }
        if count > 0 {
            *value = sum / count as f64;
            out_mask[out_lin] = true;
        }
    }
    let mask_out = if masked { Some(out_mask) } else { None };
    Grid::with_mask(out_dims, values, mask_out)
}

/// Repeatedly downsample, returning `levels + 1` grids, coarse first, with the
/// input as the finest element. Masked grids use masked average pooling.
pub fn build_pyramid(grid: &Grid, levels: usize) -> Result<Vec<Grid>> {
    let min_dim = *grid.dims().iter().min().expect("grids are non-empty");
    let depth = min_dim.trailing_zeros() as usize;
    if levels + 1 > depth {
        return Err(Error::invalid(format!(
            "{levels} pyramid levels too many for dims {:?}",
            grid.dims()
        )));
    }
    let mut rev = vec![grid.clone()];
    for _ in 0..levels {
        let prev = rev.last().expect("non-empty");
        let next = if prev.mask().is_some() {
            masked_avg_pool(prev)?
        } else {
            downsample_avg(prev)?
        };
        rev.push(next);
    }
    rev.reverse();
    Ok(rev)
}

// ---------------------------------------------------------------------------
// Noise and masks
// ---------------------------------------------------------------------------

/// Add i.i.d. noise entry-wise. No clamping: noisy training targets may leave
/// `[0, 1]`.
pub fn add_noise(grid: &Grid, spec: &NoiseSpec) -> Result<Grid> {
    if spec.scale < 0.0 || !spec.scale.is_finite() {
        return Err(Error::invalid(format!("bad noise scale {}", spec.scale)));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut values = grid.values().to_vec();
    if spec.scale > 0.0 {
        match spec.kind {
            NoiseKind::Gaussian => {
                for v in &mut values {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += spec.scale * z;
                }
            }
            NoiseKind::Laplace => {
                for v in &mut values {
                    let u: f64 = rng.gen_range(-0.5..0.5);
                    let mag = -spec.scale * (1.0 - 2.0 * u.abs()).ln();
                    *v += if u < 0.0 { -mag } else { mag };
                }
            }
        }
    }
    Grid::with_mask(
        grid.dims().to_vec(),
        values,
        grid.mask().map(|m| m.to_vec()),
    )
}

/// Uniform observation mask with exactly `round(p * N)` observed positions,
/// sampled without replacement.
pub fn random_mask(dims: &[usize], observed_fraction: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&observed_fraction) {
        return Err(Error::invalid(format!(
            "observed fraction {observed_fraction} outside [0, 1]"
        )));
    }
    let n: usize = dims.iter().product();
    let k = (observed_fraction * n as f64).round() as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut mask = vec![false; n];
    for idx in rand::seq::index::sample(&mut rng, n, k) {
        mask[idx] = true;
    }
    Ok(mask)
}
