//! `ssta flops`: analytic density and work report without running attention.

use std::path::Path;

use ssta_core::{
    density, generate_fixture, mask_overhead_macs, ssta_masks, FixtureDistribution, Result,
    ENGINE_VERSION,
};

use crate::config::{check_memory, BenchConfig, CommandKind};
use crate::report::{FlopsReport, SCHEMA_VERSION};

pub fn run(config: &BenchConfig, out: Option<&Path>) -> Result<i32> {
    check_memory(config, CommandKind::Flops)?;
    let mut fixture = generate_fixture(
        &config.grid,
        config.seed,
        FixtureDistribution::StandardNormal,
    );
    let q = std::mem::take(&mut fixture.q);
    let k = std::mem::take(&mut fixture.k);
    drop(fixture);
    let masks = ssta_masks(&q, &k, &config.grid, &config.tiles, &config.ssta)?;

    let overhead = mask_overhead_macs(&config.grid, &config.tiles, config.ssta.beta > 0.0)?;
    let report = FlopsReport {
        schema_version: SCHEMA_VERSION,
        engine_version: ENGINE_VERSION.to_string(),
        config: config.clone(),
        density: density(&masks.combined, &config.grid, &config.tiles, overhead)?,
        reference_timing: config
            .preset
            .as_deref()
            .and_then(crate::presets::find)
            .and_then(|p| p.reference_timing()),
    };
    super::emit_json(&report, out)?;
    Ok(0)
}
