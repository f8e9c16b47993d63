//! Deterministic CSV and JSON reporting.
//!
//! `metrics.csv` schema (one file per invocation, rows across seeds):
//! `run_id,model,seed,iter,level,lr,loss,psnr,ssim,params,compression_ratio,wall_seconds`
//! with `level` the side length of the active stage. Infinite PSNR serializes
//! as `inf`; SSIM on grids smaller than its window serializes as `nan`. The
//! `wall_seconds` column is left empty so reruns of the same config and seed
//! are byte-identical; timings live in `summary.json` instead.

use crate::Result;
use serde_json::{json, Value};
use std::io::Write;
use std::path::Path;

pub const METRICS_HEADER: &str =
    "run_id,model,seed,iter,level,lr,loss,psnr,ssim,params,compression_ratio,wall_seconds";

/// One `metrics.csv` row.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub run_id: String,
    pub model: &'static str,
    pub seed: u64,
    pub iter: usize,
    pub level: usize,
    pub lr: f64,
    pub loss: f64,
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub params: usize,
    pub compression_ratio: f64,
}

/// Lowercase float formatting with fixed precision; `inf`/`nan` spelled out.
pub fn fmt_float(v: f64, precision: usize) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.precision$}")
    }
}

pub fn fmt_exp(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.8e}")
    }
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},",
            self.run_id,
            self.model,
            self.seed,
            self.iter,
            self.level,
            fmt_exp(self.lr),
            fmt_exp(self.loss),
            fmt_float(self.psnr, 4),
            self.ssim.map_or("nan".to_string(), |s| fmt_float(s, 6)),
            self.params,
            fmt_float(self.compression_ratio, 6),
        )
    }
}

/// Incremental CSV writer that flushes after every append so partial results
/// survive a failing later run.
pub struct CsvWriter {
    file: std::fs::File,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &str) -> Result<CsvWriter> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "{header}")?;
        file.flush()?;
        Ok(CsvWriter { file })
    }

    pub fn append(&mut self, line: &str) -> Result<()> {
        writeln!(self.file, "{line}")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.file.flush()?;
        Ok(())
    }
}

/// JSON value for a possibly non-finite metric (JSON numbers cannot be inf).
pub fn metric_value(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// Final per-run quality numbers.
#[derive(Debug, Clone)]
pub struct FinalMetrics {
    pub mse: f64,
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub params: usize,
    pub compression_ratio: f64,
    /// PSNR restricted to unobserved positions (completion runs only).
    pub psnr_unobserved: Option<f64>,
}

impl FinalMetrics {
    pub fn to_json(&self) -> Value {
        let mut obj = json!({
            "mse": metric_value(self.mse),
            "psnr": metric_value(self.psnr),
            "ssim": self.ssim.map_or(json!("nan"), metric_value),
            "params": self.params,
            "compression_ratio": metric_value(self.compression_ratio),
        });
        if let Some(p) = self.psnr_unobserved {
            obj["psnr_unobserved"] = metric_value(p);
        }
        obj
    }
}

/// Sample mean and (n-1) standard deviation; std is 0 for a single sample.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
