//! Harness configuration: flag resolution, presets, and the memory guard.

use ssta_core::{
    CombineMode, Error, GridSpec, RedundancyNorm, Result, SstaConfig, TileSpec, WindowSpec,
};

/// Which attention paths a bench run times.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    Dense,
    Sparse,
    #[default]
    Both,
}

impl BenchMode {
    pub fn runs_dense(self) -> bool {
        matches!(self, BenchMode::Dense | BenchMode::Both)
    }

    pub fn runs_sparse(self) -> bool {
        matches!(self, BenchMode::Sparse | BenchMode::Both)
    }
}

/// Fully resolved harness configuration, echoed verbatim into reports.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BenchConfig {
    pub grid: GridSpec,
    pub tiles: TileSpec,
    pub ssta: SstaConfig,
    pub seed: u64,
    pub repeats: usize,
    pub warmup: usize,
    pub threads: usize,
    pub mode: BenchMode,
    pub preset: Option<String>,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.tiles.block_grid(&self.grid)?;
        self.ssta.validate()?;
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if self.ssta.beta > 0.0 && self.tiles.block_tokens() < 2 {
            return Err(Error::Config(
                "redundancy needs blocks of N >= 2 tokens; set beta = 0 or use larger tiles".into(),
            ));
        }
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.tiles
            .block_grid(&self.grid)
            .map(|bg| bg.count())
            .expect("validated config")
    }

    /// Command-line flags reproducing this configuration.
    pub fn repro_flags(&self) -> String {
        let m = match self.ssta.combine_mode {
            CombineMode::Intersection => "and",
            CombineMode::Union => "or",
        };
        let norm = match self.ssta.redundancy_norm {
            RedundancyNorm::Mean => "mean",
            RedundancyNorm::NMinusOne => "paper",
        };
        format!(
            "--grid {},{},{} --heads {} --head-dim {} --tiles {},{},{} --window {},{},{} \
             --topk {} --lambda {} --beta {} --mode {m} --force-self {} --redundancy-norm {norm} \
             --seed {} --threads {}",
            self.grid.frames,
            self.grid.height,
            self.grid.width,
            self.grid.heads,
            self.grid.head_dim,
            self.tiles.tile_t,
            self.tiles.tile_h,
            self.tiles.tile_w,
            self.ssta.window.w_t,
            self.ssta.window.w_h,
            self.ssta.window.w_w,
            self.ssta.top_k,
            self.ssta.lambda,
            self.ssta.beta,
            self.ssta.force_self_block,
            self.seed,
            self.threads,
        )
    }
}

/// Unresolved flag values as they arrive from the command line. `None`
/// means "not given": presets fill these first, then built-in defaults.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub grid: Option<(usize, usize, usize)>,
    pub heads: Option<usize>,
    pub head_dim: Option<usize>,
    pub tiles: Option<(usize, usize, usize)>,
    pub window: Option<(usize, usize, usize)>,
    pub topk: Option<usize>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub combine_mode: Option<CombineMode>,
    pub force_self: Option<bool>,
    pub redundancy_norm: Option<RedundancyNorm>,
    pub seed: u64,
    pub repeats: usize,
    pub warmup: usize,
    pub threads: usize,
    pub mode: BenchMode,
    pub preset: Option<String>,
}

impl RawConfig {
    pub fn resolve(self) -> Result<BenchConfig> {
        let preset = match &self.preset {
            Some(name) => Some(crate::presets::find(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset '{name}'; available: {}",
                    crate::presets::names().join(", ")
                ))
            })?),
            None => None,
        };

        let (grid_f, grid_h, grid_w) = self.grid.or(preset.map(|p| p.grid)).unwrap_or((8, 16, 16));
        let heads = self.heads.or(preset.map(|p| p.heads)).unwrap_or(4);
        let head_dim = self.head_dim.or(preset.map(|p| p.head_dim)).unwrap_or(64);
        let (tt, th, tw) = self.tiles.or(preset.map(|p| p.tiles)).unwrap_or((2, 4, 4));
        let (wt, wh, ww) = self
            .window
            .or(preset.map(|p| p.window))
            .unwrap_or((3, 3, 3));
        let topk = self.topk.or(preset.map(|p| p.topk)).unwrap_or(8);

        let grid = GridSpec::new(heads, grid_f, grid_h, grid_w, head_dim)?;
        let tiles = TileSpec::new(tt, th, tw)?;
        let window = WindowSpec::new(wt, wh, ww)?;
        let ssta = SstaConfig {
            lambda: self.lambda.unwrap_or(1.0),
            beta: self.beta.unwrap_or(1.0),
            top_k: topk,
            window,
            combine_mode: self.combine_mode.unwrap_or(CombineMode::Intersection),
            force_self_block: self.force_self.unwrap_or(true),
            redundancy_norm: self.redundancy_norm.unwrap_or(RedundancyNorm::Mean),
        };
        let config = BenchConfig {
            grid,
            tiles,
            ssta,
            seed: self.seed,
            repeats: self.repeats,
            warmup: self.warmup,
            threads: self.threads,
            mode: self.mode,
            preset: self.preset,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Which command is asking for memory; paths differ in how many tensor-sized
/// buffers they hold at once.
#[derive(Debug, Clone, Copy)]
pub enum CommandKind {
    Verify,
    Bench,
    Mask,
    Flops,
}

const MAX_ESTIMATED_BYTES: u64 = 10 << 30;

/// Refuse shapes whose working set clearly exceeds the guard, naming the
/// estimate. Masks and scores are counted alongside tensor copies.
pub fn check_memory(config: &BenchConfig, kind: CommandKind) -> Result<()> {
    let tensor = config.grid.elements() as u64 * 4;
    let heads = config.grid.heads as u64;
    let b = config.blocks() as u64;
    let d = config.grid.head_dim as u64;
    let pooled = 2 * heads * b * d * 8;
    let masks = (2 * heads + 1) * b * b;
    let scores = 3 * heads * b * b * 8;
    let estimate = match kind {
        // fixture + tile-major copies + dense/sparse/oracle outputs + scores
        CommandKind::Verify => 10 * tensor + pooled + masks + scores,
        CommandKind::Bench => 9 * tensor + pooled + masks + scores,
        // mask-only pipeline streams its scores
        CommandKind::Mask | CommandKind::Flops => 5 * tensor + pooled + masks,
    };
    if estimate > MAX_ESTIMATED_BYTES {
        return Err(Error::Config(format!(
            "estimated memory {:.1} GiB for this shape exceeds the {} GiB guard; \
             use a *-scaled preset or a smaller grid/heads/head-dim",
            estimate as f64 / (1u64 << 30) as f64,
            MAX_ESTIMATED_BYTES >> 30,
        )));
    }
    Ok(())
}

/// Parse "a,b,c" into a triple of positive integers.
pub fn parse_triple(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got '{s}'"));
    }
    let mut out = [0usize; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<usize>()
            .map_err(|e| format!("invalid component '{part}': {e}"))?;
    }
    Ok((out[0], out[1], out[2]))
}
