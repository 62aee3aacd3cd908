//! `ssta bench`: wall-clock timing of dense vs sparse attention on one
//! fixture, dense and sparse interleaved within each repeat.

use std::path::Path;
use std::time::Instant;

use ssta_core::{
    dense_attention, density, generate_fixture, mask_overhead_macs, ssta_attention,
    AttentionOutput, FixtureDistribution, Result, SstaResult, ENGINE_VERSION,
};

use crate::config::{check_memory, BenchConfig, CommandKind};
use crate::report::{median, median_abs_deviation, BenchReport, SCHEMA_VERSION};

/// Smallest representable sample; keeps reported times strictly positive on
/// coarse clocks.
const MIN_TIME_S: f64 = 1e-9;

pub fn run(config: &BenchConfig, out: Option<&Path>) -> Result<i32> {
    check_memory(config, CommandKind::Bench)?;
    let fixture = generate_fixture(
        &config.grid,
        config.seed,
        FixtureDistribution::StandardNormal,
    );

    let mut dense_times: Vec<f64> = Vec::new();
    let mut sparse_times: Vec<f64> = Vec::new();
    let mut last_dense: Option<AttentionOutput> = None;
    let mut last_sparse: Option<SstaResult> = None;

    for _ in 0..config.warmup {
        if config.mode.runs_dense() {
            last_dense = Some(dense_attention(&fixture, config.threads));
        }
        if config.mode.runs_sparse() {
            last_sparse = Some(ssta_attention(
                &fixture,
                &config.tiles,
                &config.ssta,
                config.threads,
            )?);
        }
    }
    for _ in 0..config.repeats {
        if config.mode.runs_dense() {
            let t0 = Instant::now();
            last_dense = Some(dense_attention(&fixture, config.threads));
            dense_times.push(t0.elapsed().as_secs_f64().max(MIN_TIME_S));
        }
        if config.mode.runs_sparse() {
            let t0 = Instant::now();
            last_sparse = Some(ssta_attention(
                &fixture,
                &config.tiles,
                &config.ssta,
                config.threads,
            )?);
            sparse_times.push(t0.elapsed().as_secs_f64().max(MIN_TIME_S));
        }
    }

    let density_report = match &last_sparse {
        Some(sparse) => {
            let overhead = mask_overhead_macs(&config.grid, &config.tiles, config.ssta.beta > 0.0)?;
            Some(density(
                &sparse.mask,
                &config.grid,
                &config.tiles,
                overhead,
            )?)
        }
        None => None,
    };
    let error = match (&last_sparse, &last_dense) {
        (Some(sparse), Some(dense)) => Some(ssta_core::compare(&sparse.output, dense)?),
        _ => None,
    };

    let report = BenchReport {
        schema_version: SCHEMA_VERSION,
        engine_version: ENGINE_VERSION.to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        config: config.clone(),
        dense_median_s: (!dense_times.is_empty()).then(|| median(&dense_times)),
        dense_mad_s: (!dense_times.is_empty()).then(|| median_abs_deviation(&dense_times)),
        dense_times_s: (!dense_times.is_empty()).then_some(dense_times),
        sparse_median_s: (!sparse_times.is_empty()).then(|| median(&sparse_times)),
        sparse_mad_s: (!sparse_times.is_empty()).then(|| median_abs_deviation(&sparse_times)),
        sparse_times_s: (!sparse_times.is_empty()).then_some(sparse_times),
        density: density_report,
        sparse_macs_counted: last_sparse.as_ref().map(|s| s.macs),
        error,
        reference_timing: config
            .preset
            .as_deref()
            .and_then(crate::presets::find)
            .and_then(|p| p.reference_timing()),
    };
    super::emit_json(&report, out)?;
    Ok(0)
}
