//! Experiment orchestration: builds targets and pyramids, drives training,
//! and writes checkpoints, reconstructions, CSV rows and JSON summaries.

use crate::config::{load_config, parse_subcommand, ModelKind, NoiseKindCfg, Resolved, Task};
use crate::report::{mean_std, metric_value, CsvWriter, FinalMetrics, MetricsRow, METRICS_HEADER};
use crate::{CliError, Result};
use qtt_core::baselines::{train_baseline_observed, BaselineModel, BaselineSpec};
use qtt_core::checkpoint;
use qtt_core::data::{
    add_noise, build_pyramid, load_grid, load_mask, random_mask, save_grid, save_mask, NoiseKind,
    NoiseSpec,
};
use qtt_core::decomp::tt_svd;
use qtt_core::grid::Grid;
use qtt_core::layout::QttLayout;
use qtt_core::metrics::{compression_ratio, psnr, ssim};
use qtt_core::optim::{train_putt_observed, RankGrowth, StepInfo, TrainConfig};
use serde_json::json;
use std::path::Path;
use std::time::Instant;

pub const COMPARE_HEADER: &str =
    "run_id,row_type,model,seed,psnr,ssim,mse,params,compression_ratio,psnr_std,ssim_std,mse_std";

/// Densification cap, overridable through `QTT_SAFETY_CAP`.
pub fn dense_cap() -> usize {
    std::env::var("QTT_SAFETY_CAP")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(qtt_core::tt::DEFAULT_DENSE_CAP)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_id: String,
    pub model: ModelKind,
    pub seed: u64,
    pub final_metrics: FinalMetrics,
    pub wall_seconds: f64,
}

/// Entry point shared by every data-driven subcommand.
pub fn execute(
    invoked: &str,
    config_path: &Path,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<()> {
    parse_subcommand(invoked)?;
    let cfg = load_config(config_path)?;
    let clean = load_grid(&cfg.input).map_err(CliError::from)?;
    let side = clean
        .side()
        .map_err(|_| CliError::config("input grid must be square/cubic"))?;
    let resolved = cfg.resolve(
        invoked,
        side,
        clean.spatial_dim(),
        out_override,
        seed_override,
    )?;
    std::fs::create_dir_all(&resolved.out)?;
    match resolved.task {
        Task::Compare => run_compare(&resolved, &clean),
        _ => run_standard(&resolved, &clean),
    }
}

fn run_standard(resolved: &Resolved, clean: &Grid) -> Result<()> {
    let mut csv = CsvWriter::create(&resolved.out.join("metrics.csv"), METRICS_HEADER)?;
    let model = resolved.models[0];
    let mut outcomes = Vec::new();
    for &seed in &resolved.seeds {
        let outcome = run_single(resolved, model, seed, clean, &mut csv)?;
        outcomes.push(outcome);
    }
    write_summary(resolved, &outcomes)?;
    Ok(())
}

fn run_compare(resolved: &Resolved, clean: &Grid) -> Result<()> {
    let mut csv = CsvWriter::create(&resolved.out.join("metrics.csv"), METRICS_HEADER)?;
    let mut compare = CsvWriter::create(&resolved.out.join("compare.csv"), COMPARE_HEADER)?;
    let mut outcomes: Vec<RunOutcome> = Vec::new();
    let mut failure: Option<CliError> = None;
    'outer: for &model in &resolved.models {
        for &seed in &resolved.seeds {
            match run_single(resolved, model, seed, clean, &mut csv) {
                Ok(outcome) => {
                    let f = &outcome.final_metrics;
                    compare.append(&format!(
                        "{},run,{},{},{},{},{},{},{},,,",
                        outcome.run_id,
                        model.name(),
                        seed,
                        crate::report::fmt_float(f.psnr, 4),
                        f.ssim
                            .map_or("nan".into(), |s| crate::report::fmt_float(s, 6)),
                        crate::report::fmt_exp(f.mse),
                        f.params,
                        crate::report::fmt_float(f.compression_ratio, 6),
                    ))?;
                    compare.flush()?;
                    outcomes.push(outcome);
                }
                Err(e) => {
                    // keep partial results on disk, then surface the failure
                    failure = Some(e);
                    break 'outer;
                }
            }
        }
    }
    // aggregate rows: mean and sample std of the per-seed finals, per model
    for &model in &resolved.models {
        let finals: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.model == model).collect();
        if finals.is_empty() {
            continue;
        }
        let psnrs: Vec<f64> = finals.iter().map(|o| o.final_metrics.psnr).collect();
        let ssims: Vec<f64> = finals.iter().filter_map(|o| o.final_metrics.ssim).collect();
        let mses: Vec<f64> = finals.iter().map(|o| o.final_metrics.mse).collect();
        let (pm, ps) = mean_std(&psnrs);
        let (mm, ms) = mean_std(&mses);
        let (sm, ss) = if ssims.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            mean_std(&ssims)
        };
        compare.append(&format!(
            ",aggregate,{},,{},{},{},,,{},{},{}",
            model.name(),
            crate::report::fmt_float(pm, 4),
            crate::report::fmt_float(sm, 6),
            crate::report::fmt_exp(mm),
            crate::report::fmt_float(ps, 4),
            crate::report::fmt_float(ss, 6),
            crate::report::fmt_exp(ms),
        ))?;
    }
    compare.flush()?;
    write_summary(resolved, &outcomes)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(())
}

fn write_summary(resolved: &Resolved, outcomes: &[RunOutcome]) -> Result<()> {
    let runs: Vec<serde_json::Value> = outcomes
        .iter()
        .map(|o| {
            json!({
                "run_id": o.run_id,
                "model": o.model.name(),
                "seed": o.seed,
                "final": o.final_metrics.to_json(),
                "wall_seconds": o.wall_seconds,
            })
        })
        .collect();
    let mut aggregates = serde_json::Map::new();
    for &model in &resolved.models {
        let finals: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.model == model).collect();
        if finals.is_empty() {
            continue;
        }
        let psnrs: Vec<f64> = finals.iter().map(|o| o.final_metrics.psnr).collect();
        let mses: Vec<f64> = finals.iter().map(|o| o.final_metrics.mse).collect();
        let ssims: Vec<f64> = finals.iter().filter_map(|o| o.final_metrics.ssim).collect();
        let (pm, ps) = mean_std(&psnrs);
        let (mm, ms) = mean_std(&mses);
        let entry = if ssims.is_empty() {
            json!({
                "psnr_mean": metric_value(pm), "psnr_std": metric_value(ps),
                "mse_mean": metric_value(mm), "mse_std": metric_value(ms),
            })
        } else {
            let (sm, ss) = mean_std(&ssims);
            json!({
                "psnr_mean": metric_value(pm), "psnr_std": metric_value(ps),
                "ssim_mean": metric_value(sm), "ssim_std": metric_value(ss),
                "mse_mean": metric_value(mm), "mse_std": metric_value(ms),
            })
        };
        aggregates.insert(model.name().to_string(), entry);
    }
    let summary = json!({
        "subcommand": resolved.subcommand,
        "config_hash": resolved.config_hash(),
        "input": resolved.input.display().to_string(),
        "runs": runs,
        "aggregate": aggregates,
    });
    std::fs::write(
        resolved.out.join("summary.json"),
        format!(
            "{}\n",
            serde_json::to_string_pretty(&summary).expect("valid json")
        ),
    )?;
    Ok(())
}

/// Build the training target for one seed (noise and masks are seeded so
/// every model sees identical data at the same seed).
fn build_target(resolved: &Resolved, clean: &Grid, seed: u64) -> Result<Grid> {
    match resolved.effective_task() {
        Task::Denoise => {
            let n = resolved.noise.as_ref().expect("validated");
            let spec = NoiseSpec {
                kind: match n.kind {
                    NoiseKindCfg::Gaussian => NoiseKind::Gaussian,
                    NoiseKindCfg::Laplace => NoiseKind::Laplace,
                },
                scale: n.scale,
                seed: n.seed.unwrap_or(seed),
            };
            Ok(add_noise(clean, &spec)?)
        }
        Task::Complete => {
            let mask = match (&resolved.mask_path, resolved.observed_fraction) {
                (Some(path), _) => load_mask(path, clean.dims())?,
                (None, Some(p)) => random_mask(clean.dims(), p, seed)?,
                (None, None) => unreachable!("validated"),
            };
            let mut g = clean.clone();
            g.set_mask(Some(mask))?;
            Ok(g)
        }
        _ => Ok(clean.clone()),
    }
}

fn interval_row_needed(iter: usize, total: usize, log_every: usize) -> bool {
    iter.is_multiple_of(log_every) || iter + 1 == total
}

#[allow(clippy::too_many_arguments)]
fn push_interval_row(
    rows: &mut Vec<MetricsRow>,
    run_id: &str,
    model: ModelKind,
    seed: u64,
    info: &StepInfo,
    recon: &Grid,
    reference: &Grid,
    params: usize,
) {
    let p = psnr(recon, reference, 1.0).unwrap_or(f64::NAN);
    let s = ssim(recon, reference).ok();
    let side = reference.side().unwrap_or(0);
    rows.push(MetricsRow {
        run_id: run_id.to_string(),
        model: model.name(),
        seed,
        iter: info.iter,
        level: side,
        lr: info.lr,
        loss: info.loss,
        psnr: p,
        ssim: s,
        params,
        compression_ratio: reference.len() as f64 / params as f64,
    });
    eprintln!(
        "[{run_id}] iter {} side {side} loss {:.4e} psnr {:.2}",
        info.iter, info.loss, p
    );
}

fn run_single(
    resolved: &Resolved,
    model: ModelKind,
    seed: u64,
    clean: &Grid,
    csv: &mut CsvWriter,
) -> Result<RunOutcome> {
    let start = Instant::now();
    let run_id = resolved.run_id(model, seed);
    let run_dir = resolved.out.join(&run_id);
    std::fs::create_dir_all(&run_dir)?;
    let cap = dense_cap();

    let target = build_target(resolved, clean, seed)?;
    let ups = resolved.upsample_iters_for(model);
    let levels = ups.len();
    let pyramid_train = build_pyramid(&target, levels)?;
    let pyramid_clean = build_pyramid(clean, levels)?;

    let train_config = TrainConfig {
        r_max: resolved.r_max,
        total_iters: resolved.total_iters,
        upsample_iters: ups,
        batch_size: resolved.batch_size,
        seed,
        base_lr: resolved.base_lr_for(model)?,
        inter_stage_decay: resolved.inter_stage_decay,
        upsample_decay: resolved.upsample_decay,
        warmup_iters: resolved.warmup_iters,
        init_std: resolved.init_std,
        rank_growth: resolved.rank_growth.as_ref().map(|g| RankGrowth {
            delta: g.delta,
            iters: g.iters.clone(),
            cap: g.cap,
        }),
    };

    let mut rows: Vec<MetricsRow> = Vec::new();
    let (recon, params) = match model {
        ModelKind::TtSvd => {
            let layout = QttLayout::for_grid(&target)?;
            let quantized = layout.quantize_grid(&target)?;
            let tt = tt_svd(&quantized, resolved.r_max)?;
            let recon = tt.to_dense(&layout, cap)?;
            let params = tt.param_count();
            let mse = recon.mse(clean)?;
            rows.push(MetricsRow {
                run_id: run_id.clone(),
                model: model.name(),
                seed,
                iter: 0,
                level: clean.side()?,
                lr: 0.0,
                loss: mse,
                psnr: psnr(&recon, clean, 1.0)?,
                ssim: ssim(&recon, clean).ok(),
                params,
                compression_ratio: compression_ratio(clean.len(), params)?,
            });
            checkpoint::save_qtt(&tt, &layout, &run_dir.join("checkpoint.qtt"))?;
            (recon, params)
        }
        ModelKind::QttPutt | ModelKind::QttNoup => {
            let total = resolved.total_iters;
            let log_every = resolved.log_every;
            let mut observer = |info: &StepInfo, tt: &qtt_core::TensorTrain| {
                if interval_row_needed(info.iter, total, log_every) {
                    let layout = QttLayout::new(clean.spatial_dim(), info.depth)
                        .expect("depth tracks the pyramid");
                    if let Ok(recon) = tt.to_dense(&layout, cap) {
                        push_interval_row(
                            &mut rows,
                            &run_id,
                            model,
                            seed,
                            info,
                            &recon,
                            &pyramid_clean[info.stage],
                            tt.param_count(),
                        );
                    }
                }
            };
            let (tt, _) = train_putt_observed(&pyramid_train, &train_config, &mut observer)?;
            let layout = QttLayout::for_grid(clean)?;
            let recon = tt.to_dense(&layout, cap)?;
            let params = tt.param_count();
            checkpoint::save_qtt(&tt, &layout, &run_dir.join("checkpoint.qtt"))?;
            (recon, params)
        }
        ModelKind::Cp | ModelKind::Tucker => {
            let spec = match model {
                ModelKind::Cp => BaselineSpec::Cp {
                    rank: resolved.r_max,
                },
                _ => BaselineSpec::Tucker {
                    core_dim: resolved.tucker_core_dim(clean.dims()),
                },
            };
            let total = resolved.total_iters;
            let log_every = resolved.log_every;
            let mut observer = |info: &StepInfo, m: &BaselineModel| {
                if interval_row_needed(info.iter, total, log_every) {
                    if let Ok(recon) = m.to_grid() {
                        push_interval_row(
                            &mut rows,
                            &run_id,
                            model,
                            seed,
                            info,
                            &recon,
                            &pyramid_clean[info.stage],
                            m.param_count(),
                        );
                    }
                }
            };
            let (m, _) =
                train_baseline_observed(spec, &pyramid_train, &train_config, &mut observer)?;
            let recon = m.to_grid()?;
            let params = m.param_count();
            let ext = if model == ModelKind::Cp { "cpd" } else { "tuk" };
            checkpoint::save_baseline(&m, &run_dir.join(format!("checkpoint.{ext}")))?;
            (recon, params)
        }
    };

    // final artifacts and metrics against the clean full-resolution reference
    let recon_name = if clean.spatial_dim() == 2 {
        "recon.pgm"
    } else {
        "recon.raw"
    };
    save_grid(&recon, &run_dir.join(recon_name))?;
    if resolved.effective_task() == Task::Complete {
        if let Some(mask) = target.mask() {
            if clean.spatial_dim() == 2 {
                save_mask(mask, clean.dims(), &run_dir.join("mask.pgm"))?;
            }
        }
    }

    let mse = recon.mse(clean)?;
    let psnr_full = psnr(&recon, clean, 1.0)?;
    let ssim_full = ssim(&recon, clean).ok();
    let psnr_unobserved = if resolved.effective_task() == Task::Complete {
        target.mask().map(|mask| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for (i, &observed) in mask.iter().enumerate() {
                if !observed {
                    let d = recon.values()[i] - clean.values()[i];
                    sum += d * d;
                    count += 1;
                }
            }
            if count == 0 || sum == 0.0 {
                f64::INFINITY
            } else {
                10.0 * (1.0 / (sum / count as f64)).log10()
            }
        })
    } else {
        None
    };
    let final_metrics = FinalMetrics {
        mse,
        psnr: psnr_full,
        ssim: ssim_full,
        params,
        compression_ratio: compression_ratio(clean.len(), params)?,
        psnr_unobserved,
    };

    for row in &rows {
        csv.append(&row.to_csv())?;
    }
    csv.flush()?;

    Ok(RunOutcome {
        run_id,
        model,
        seed,
        final_metrics,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
