//! Tensor-train compression of 2D/3D scalar fields with coarse-to-fine training.
//!
//! The library is organized around a quantized tensor train (QTT): a grid with
//! side length `2^D` is reinterpreted as a `D`-mode tensor whose mode `k` holds
//! the `k`-th most significant bit of every spatial axis. A [`tt::TensorTrain`]
//! over those modes compresses the grid; an [`mpo::Mpo`] encoding global linear
//! interpolation doubles its resolution in-place in TT form (`prolong`), which
//! is the upsampling step of the coarse-to-fine training loop in [`optim`].
//!
//! Modules:
//! - [`layout`]: spatial <-> QTT index bookkeeping and grid quantization
//! - [`grid`]: dense scalar fields with optional observation masks
//! - [`tt`]: tensor-train construction, evaluation and densification
//! - [`decomp`]: TT-SVD and rank truncation sweeps
//! - [`mpo`] / [`prolong`]: matrix product operators and the interpolation MPO
//! - [`optim`]: sampled MSE gradients, Adam, LR schedule, training loops
//! - [`baselines`]: CP and Tucker gradient-fit baselines
//! - [`data`]: grid I/O, pyramids, masks, noise
//! - [`metrics`]: PSNR / SSIM / compression ratio
//! - [`checkpoint`]: binary model checkpoints

// indexed loops are the clearest form for the contraction kernels, and
// `!(x > 0.0)` deliberately rejects NaN alongside non-positive values
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod decomp;
pub mod error;
pub mod grid;
pub mod layout;
mod linalg;
pub mod metrics;
pub mod mpo;
pub mod optim;
pub mod prolong;
pub mod tt;

pub use error::{Error, Result};
pub use grid::Grid;
pub use layout::QttLayout;
pub use tt::TensorTrain;
