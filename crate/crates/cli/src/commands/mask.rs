//! `ssta mask`: export the selective, window, and combined masks as CSV
//! triplets and per-head PGM heatmaps.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ssta_core::{
    density, generate_fixture, mask_overhead_macs, ssta_masks, BlockMask, Error,
    FixtureDistribution, Result, ENGINE_VERSION,
};

use crate::config::{check_memory, BenchConfig, CommandKind};
use crate::report::{MaskReport, SCHEMA_VERSION};

pub fn run(config: &BenchConfig, out_dir: Option<&Path>) -> Result<i32> {
    check_memory(config, CommandKind::Mask)?;
    let dir: PathBuf = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;

    let mut fixture = generate_fixture(
        &config.grid,
        config.seed,
        FixtureDistribution::StandardNormal,
    );
    let q = std::mem::take(&mut fixture.q);
    let k = std::mem::take(&mut fixture.k);
    drop(fixture);
    let masks = ssta_masks(&q, &k, &config.grid, &config.tiles, &config.ssta)?;

    let mut files: Vec<String> = Vec::new();
    export(&masks.selective, "m_sel", &dir, &mut files)?;
    export(&masks.sta, "m_sta", &dir, &mut files)?;
    export(&masks.combined, "m_combined", &dir, &mut files)?;

    let overhead = mask_overhead_macs(&config.grid, &config.tiles, config.ssta.beta > 0.0)?;
    let report = MaskReport {
        schema_version: SCHEMA_VERSION,
        engine_version: ENGINE_VERSION.to_string(),
        config: config.clone(),
        out_dir: dir.display().to_string(),
        files,
        density: density(&masks.combined, &config.grid, &config.tiles, overhead)?,
    };
    super::emit_json(&report, None)?;
    Ok(0)
}

fn export(mask: &BlockMask, stem: &str, dir: &Path, files: &mut Vec<String>) -> Result<()> {
    let csv_name = format!("{stem}.csv");
    let csv_path = dir.join(&csv_name);
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    let mut w = BufWriter::new(File::create(&csv_path).map_err(io_err(&csv_path))?);
    mask.write_csv(&mut w).map_err(io_err(&csv_path))?;
    files.push(csv_name);

    for head in 0..mask.heads() {
        let pgm_name = if mask.heads() == 1 {
            format!("{stem}.pgm")
        } else {
            format!("{stem}_h{head:02}.pgm")
        };
        let pgm_path = dir.join(&pgm_name);
        let mut w = BufWriter::new(File::create(&pgm_path).map_err(io_err(&pgm_path))?);
        mask.write_pgm(head, &mut w).map_err(io_err(&pgm_path))?;
        files.push(pgm_name);
    }
    Ok(())
}
