//! Run configuration: JSON schema, validation, default resolution, hashing.
//!
//! One JSON document describes one invocation. Unknown keys are rejected.
//! Omitted schedule fields default to the desk-scale analogue of the standard
//! schedules: total iterations scale with the side length and upsampling
//! events sit at `total / 2^(ups + 2 - k)`, the halving pattern that ends at
//! `total / 4`.

use crate::{CliError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "qtt-putt")]
    QttPutt,
    #[serde(rename = "qtt-noup")]
    QttNoup,
    #[serde(rename = "cp")]
    Cp,
    #[serde(rename = "tucker")]
    Tucker,
    #[serde(rename = "ttsvd")]
    TtSvd,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::QttPutt => "qtt-putt",
            ModelKind::QttNoup => "qtt-noup",
            ModelKind::Cp => "cp",
            ModelKind::Tucker => "tucker",
            ModelKind::TtSvd => "ttsvd",
        }
    }

    pub fn upsamples(&self) -> bool {
        matches!(self, ModelKind::QttPutt | ModelKind::Cp | ModelKind::Tucker)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKindCfg {
    Gaussian,
    Laplace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseCfg {
    pub kind: NoiseKindCfg,
    pub scale: f64,
    /// Defaults to the run seed, so every model sees the same noisy target.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankGrowthCfg {
    pub delta: usize,
    pub iters: Vec<usize>,
    pub cap: usize,
}

/// The on-disk config schema; every field that can default is optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub subcommand: String,
    pub input: PathBuf,
    #[serde(default)]
    pub model: Option<ModelKind>,
    #[serde(default)]
    pub models: Option<Vec<ModelKind>>,
    pub r_max: usize,
    #[serde(default)]
    pub total_iters: Option<usize>,
    #[serde(default)]
    pub upsample_iters: Option<Vec<usize>>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default)]
    pub init_std: Option<f64>,
    #[serde(default)]
    pub warmup_iters: Option<usize>,
    #[serde(default)]
    pub inter_stage_decay: Option<f64>,
    #[serde(default)]
    pub upsample_decay: Option<f64>,
    #[serde(default)]
    pub noise: Option<NoiseCfg>,
    #[serde(default)]
    pub observed_fraction: Option<f64>,
    #[serde(default)]
    pub mask_path: Option<PathBuf>,
    #[serde(default)]
    pub adaptation_factor: Option<f64>,
    #[serde(default)]
    pub rank_growth: Option<RankGrowthCfg>,
    #[serde(default)]
    pub param_budget: Option<usize>,
    #[serde(default)]
    pub log_every: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

// `out` is excluded from the run-identity hash: the same experiment written
// to two directories is still the same experiment.

/// Which experiment family a subcommand belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Fit,
    Denoise,
    Complete,
    Svd,
    Compare,
}

/// Fully resolved invocation: every default applied, ready to hash and run.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub subcommand: String,
    pub input: PathBuf,
    pub models: Vec<ModelKind>,
    pub r_max: usize,
    pub total_iters: usize,
    pub upsample_iters: Vec<usize>,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub lr: Option<f64>,
    pub init_std: f64,
    pub warmup_iters: usize,
    pub inter_stage_decay: f64,
    pub upsample_decay: f64,
    pub noise: Option<NoiseCfg>,
    pub observed_fraction: Option<f64>,
    pub mask_path: Option<PathBuf>,
    pub adaptation_factor: f64,
    pub rank_growth: Option<RankGrowthCfg>,
    pub param_budget: Option<usize>,
    pub log_every: usize,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub task: Task,
    #[serde(skip)]
    pub spatial_dim: usize,
}

pub fn parse_subcommand(name: &str) -> Result<(Task, usize)> {
    Ok(match name {
        "fit2d" => (Task::Fit, 2),
        "fit3d" => (Task::Fit, 3),
        "denoise2d" => (Task::Denoise, 2),
        "denoise3d" => (Task::Denoise, 3),
        "complete2d" => (Task::Complete, 2),
        "complete3d" => (Task::Complete, 3),
        "svd" => (Task::Svd, 0),
        "compare" => (Task::Compare, 0),
        other => {
            return Err(CliError::config(format!("unknown subcommand {other:?}")));
        }
    })
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Desk-scale default schedule for a grid side: totals scale with the side,
/// upsampling starts from side 128 (2D) or 8 (3D) and events follow the
/// halving pattern ending at `total / 4`.
pub fn default_schedule(
    side: usize,
    spatial_dim: usize,
    task: Task,
    wants_upsampling: bool,
) -> (usize, Vec<usize>) {
    let total = match (spatial_dim, task) {
        (2, Task::Denoise | Task::Complete) => 2 * side,
        (2, _) => side,
        (_, Task::Denoise | Task::Complete) => 16 * side,
        _ => 8 * side,
    }
    .max(64);
    if !wants_upsampling {
        return (total, Vec::new());
    }
    let start_side = if spatial_dim == 2 { 128 } else { 8 };
    let depth = side.trailing_zeros() as usize;
    let max_ups = depth.saturating_sub(1);
    let ups = if side > start_side {
        (side / start_side).trailing_zeros() as usize
    } else {
        2
    }
    .min(max_ups);
    let mut iters: Vec<usize> = (1..=ups)
        .map(|k| total / (1usize << (ups + 2 - k)))
        .collect();
    iters.dedup();
    iters.retain(|&i| i > 0);
    (total, iters)
}

impl ConfigFile {
    /// Validate against the invoked subcommand and resolve every default.
    /// `side` is the input grid's side length (defaults need it).
    pub fn resolve(
        &self,
        invoked: &str,
        side: usize,
        spatial_dim: usize,
        out_override: Option<&Path>,
        seed_override: Option<u64>,
    ) -> Result<Resolved> {
        if self.subcommand != invoked {
            return Err(CliError::config(format!(
                "config file is for subcommand {:?}, invoked {:?}",
                self.subcommand, invoked
            )));
        }
        let (task, cfg_dim) = parse_subcommand(&self.subcommand)?;
        if cfg_dim != 0 && cfg_dim != spatial_dim {
            return Err(CliError::config(format!(
                "{} expects a {}D input, got {}D",
                self.subcommand, cfg_dim, spatial_dim
            )));
        }
        if self.r_max == 0 {
            return Err(CliError::config("r_max must be >= 1"));
        }

        // model list
        let models: Vec<ModelKind> = match task {
            Task::Compare => {
                let list = self
                    .models
                    .clone()
                    .ok_or_else(|| CliError::config("compare needs a \"models\" list"))?;
                if list.is_empty() {
                    return Err(CliError::config("compare \"models\" list is empty"));
                }
                if self.model.is_some() {
                    return Err(CliError::config("compare takes \"models\", not \"model\""));
                }
                list
            }
            Task::Svd => {
                if self.models.is_some() {
                    return Err(CliError::config("\"models\" is only for compare"));
                }
                match self.model {
                    None | Some(ModelKind::TtSvd) => vec![ModelKind::TtSvd],
                    Some(other) => {
                        return Err(CliError::config(format!(
                            "svd runs the ttsvd model, got {:?}",
                            other.name()
                        )));
                    }
                }
            }
            _ => {
                if self.models.is_some() {
                    return Err(CliError::config("\"models\" is only for compare"));
                }
                vec![self
                    .model
                    .ok_or_else(|| CliError::config("missing \"model\""))?]
            }
        };

        // seeds
        let seeds: Vec<u64> = if let Some(seed) = seed_override {
            vec![seed]
        } else {
            match (&self.seed, &self.seeds) {
                (Some(_), Some(_)) => {
                    return Err(CliError::config("give either \"seed\" or \"seeds\""));
                }
                (Some(s), None) => vec![*s],
                (None, Some(list)) if !list.is_empty() => list.clone(),
                _ => vec![0],
            }
        };

        // task-specific requirements; compare infers its inner task from the
        // fields present (noise -> denoise, mask -> completion, else fit)
        let has_mask = self.observed_fraction.is_some() || self.mask_path.is_some();
        match task {
            Task::Denoise => {
                if self.noise.is_none() {
                    return Err(CliError::config("denoise needs a \"noise\" spec"));
                }
            }
            Task::Complete => {
                if !has_mask {
                    return Err(CliError::config(
                        "complete needs \"observed_fraction\" or \"mask_path\"",
                    ));
                }
            }
            Task::Compare => {
                if self.noise.is_some() && has_mask {
                    return Err(CliError::config(
                        "compare takes noise or an observation mask, not both",
                    ));
                }
            }
            _ => {
                if has_mask {
                    return Err(CliError::config(
                        "observation masks only apply to complete subcommands",
                    ));
                }
            }
        }
        if !matches!(task, Task::Denoise | Task::Compare) && self.noise.is_some() {
            return Err(CliError::config("\"noise\" only applies to denoise"));
        }
        if (task == Task::Complete || (task == Task::Compare && has_mask))
            && models.contains(&ModelKind::TtSvd)
        {
            return Err(CliError::config(
                "ttsvd needs the dense signal; it cannot fit incomplete data",
            ));
        }
        if let Some(p) = self.observed_fraction {
            if !(0.0..=1.0).contains(&p) {
                return Err(CliError::config(format!(
                    "observed_fraction {p} outside [0, 1]"
                )));
            }
        }
        if let Some(n) = &self.noise {
            if n.scale < 0.0 || !n.scale.is_finite() {
                return Err(CliError::config(format!("bad noise scale {}", n.scale)));
            }
        }

        // schedule
        let wants_ups = models.iter().any(ModelKind::upsamples);
        let (default_total, default_ups) = default_schedule(side, spatial_dim, task, wants_ups);
        let total_iters = self.total_iters.unwrap_or(default_total);
        let upsample_iters = match &self.upsample_iters {
            Some(list) => list.clone(),
            None if wants_ups => default_ups,
            None => Vec::new(),
        };
        if task != Task::Svd {
            if total_iters == 0 {
                return Err(CliError::config("total_iters must be >= 1"));
            }
            let mut prev = 0usize;
            for &u in &upsample_iters {
                if u == 0 || u >= total_iters || (prev > 0 && u <= prev) {
                    return Err(CliError::config(format!(
                        "upsample_iters {upsample_iters:?} must be strictly increasing inside (0, {total_iters})"
                    )));
                }
                prev = u;
            }
            let depth = side.trailing_zeros() as usize;
            if upsample_iters.len() + 1 > depth {
                return Err(CliError::config(format!(
                    "{} upsampling steps need a start side below the minimum for side {side}",
                    upsample_iters.len()
                )));
            }
        }

        let out = out_override
            .map(Path::to_path_buf)
            .or_else(|| self.out.clone())
            .ok_or_else(|| CliError::config("no output directory (config \"out\" or --out)"))?;

        Ok(Resolved {
            subcommand: self.subcommand.clone(),
            input: self.input.clone(),
            models,
            r_max: self.r_max,
            total_iters,
            upsample_iters,
            batch_size: self.batch_size.unwrap_or(512 * 512),
            seeds,
            lr: self.lr,
            init_std: self.init_std.unwrap_or(0.1),
            warmup_iters: self.warmup_iters.unwrap_or(50),
            inter_stage_decay: self.inter_stage_decay.unwrap_or(0.1),
            upsample_decay: self.upsample_decay.unwrap_or(0.9),
            noise: self.noise.clone(),
            observed_fraction: self.observed_fraction,
            mask_path: self.mask_path.clone(),
            adaptation_factor: self.adaptation_factor.unwrap_or(0.1),
            rank_growth: self.rank_growth.clone(),
            param_budget: self.param_budget,
            log_every: self.log_every.unwrap_or(100).max(1),
            out,
            task,
            spatial_dim,
        })
    }
}

impl Resolved {
    /// The experiment family actually executed: compare borrows denoise or
    /// completion semantics from the fields present.
    pub fn effective_task(&self) -> Task {
        match self.task {
            Task::Compare => {
                if self.noise.is_some() {
                    Task::Denoise
                } else if self.observed_fraction.is_some() || self.mask_path.is_some() {
                    Task::Complete
                } else {
                    Task::Fit
                }
            }
            t => t,
        }
    }

    /// Hash of the canonical resolved-config serialization; embedded in run ids.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("resolved config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(12);
        for b in &digest[..6] {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    /// Base learning rate for a model kind, including the standard higher
    /// default for CP/Tucker and the task-specific adaptation.
    pub fn base_lr_for(&self, model: ModelKind) -> Result<f64> {
        let base = self.lr.unwrap_or(match model {
            ModelKind::Cp | ModelKind::Tucker => 1e-2,
            _ => 5e-3,
        });
        let adapted = match self.effective_task() {
            Task::Denoise => {
                let scale = self.noise.as_ref().expect("validated").scale;
                qtt_core::optim::adapt_base_lr(
                    base,
                    &qtt_core::optim::LrAdaptation::Noise {
                        sigma: scale,
                        factor: self.adaptation_factor,
                    },
                )?
            }
            Task::Complete => {
                let p = self.observed_fraction.unwrap_or(1.0);
                qtt_core::optim::adapt_base_lr(
                    base,
                    &qtt_core::optim::LrAdaptation::MissingData {
                        observed_fraction: p,
                        factor: self.adaptation_factor,
                    },
                )?
            }
            _ => base,
        };
        Ok(adapted)
    }

    pub fn run_id(&self, model: ModelKind, seed: u64) -> String {
        format!("{}-s{}-{}", model.name(), seed, self.config_hash())
    }

    /// Upsampling schedule for one model (empty for non-upsampling kinds).
    pub fn upsample_iters_for(&self, model: ModelKind) -> Vec<usize> {
        if model.upsamples() {
            self.upsample_iters.clone()
        } else {
            Vec::new()
        }
    }

    /// Tucker core dimension per mode: honor an explicit parameter budget
    /// (`prod m + sum m*n <= budget`), otherwise reuse `r_max`.
    pub fn tucker_core_dim(&self, dims: &[usize]) -> usize {
        let min_side = *dims.iter().min().expect("non-empty dims");
        match self.param_budget {
            None => self.r_max.min(min_side),
            Some(budget) => {
                let d = dims.len() as u32;
                let side_sum: usize = dims.iter().sum();
                let mut best = 1usize;
                for m in 1..=min_side {
                    let params = m.pow(d) + m * side_sum;
                    if params <= budget {
                        best = m;
                    } else {
                        break;
                    }
                }
                best
            }
        }
    }
}
