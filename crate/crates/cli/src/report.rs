//! Machine-readable report types. Serialized field order is fixed by struct
//! declaration order; every report round-trips losslessly through JSON.

use ssta_core::{DensityReport, ErrorReport, MacCounter};

use crate::config::BenchConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// An externally measured wall-clock reference attached to some presets.
/// Informational only; no assertion in this harness depends on it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReferenceTiming {
    pub dense_s_per_step: f64,
    pub sparse_s_per_step: f64,
    pub speedup: f64,
    pub asserted: bool,
    pub note: String,
}

/// Output contract of `ssta bench`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub engine_version: String,
    pub timestamp: String,
    pub config: BenchConfig,
    pub dense_times_s: Option<Vec<f64>>,
    pub dense_median_s: Option<f64>,
    pub dense_mad_s: Option<f64>,
    pub sparse_times_s: Option<Vec<f64>>,
    pub sparse_median_s: Option<f64>,
    pub sparse_mad_s: Option<f64>,
    /// Density of the combined mask; absent when only dense ran.
    pub density: Option<DensityReport>,
    /// Instrumented kernel work; absent when only dense ran.
    pub sparse_macs_counted: Option<MacCounter>,
    /// Sparse vs dense on identical inputs; present iff mode = both.
    pub error: Option<ErrorReport>,
    pub reference_timing: Option<ReferenceTiming>,
}

/// Output contract of `ssta flops`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlopsReport {
    pub schema_version: u32,
    pub engine_version: String,
    pub config: BenchConfig,
    pub density: DensityReport,
    pub reference_timing: Option<ReferenceTiming>,
}

/// Output contract of `ssta mask`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaskReport {
    pub schema_version: u32,
    pub engine_version: String,
    pub config: BenchConfig,
    pub out_dir: String,
    pub files: Vec<String>,
    pub density: DensityReport,
}

/// Median of a non-empty sample (mean of the middle two for even sizes).
pub fn median(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median absolute deviation around the sample median.
pub fn median_abs_deviation(samples: &[f64]) -> f64 {
    let med = median(samples);
    let deviations: Vec<f64> = samples.iter().map(|x| (x - med).abs()).collect();
    median(&deviations)
}
