//! Shape presets modeling latent video grids under 16x spatial and 4x
//! temporal compression: a (frames, height, width) pixel video becomes a
//! ((frames-1)/4 + 1, height/16, width/16) token grid.
//!
//! Unscaled presets keep the production head layout (16 heads, head_dim
//! 128) and are meant for `flops` and `mask` analysis; timing them densely
//! is refused by the memory guard. The `*-scaled` variants shrink every
//! axis to desk scale so `bench` completes in seconds to minutes.

use crate::report::ReferenceTiming;

#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub grid: (usize, usize, usize),
    pub heads: usize,
    pub head_dim: usize,
    pub tiles: (usize, usize, usize),
    pub window: (usize, usize, usize),
    pub topk: usize,
    /// Externally measured (dense, sparse) seconds per step for the shape
    /// class this preset models, when such a measurement exists.
    pub reference_s_per_step: Option<(f64, f64)>,
}

impl Preset {
    pub fn reference_timing(&self) -> Option<ReferenceTiming> {
        self.reference_s_per_step
            .map(|(dense, sparse)| ReferenceTiming {
                dense_s_per_step: dense,
                sparse_s_per_step: sparse,
                speedup: dense / sparse,
                asserted: false,
                note: "externally measured full-pipeline seconds per diffusion step at the \
                   unscaled shape class (multi-GPU, full model); shown for context, \
                   never asserted by this harness"
                    .into(),
            })
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "480p-121f",
        description: "480x848 video, 121 frames -> 31x30x52 latent tokens (width 53 rounded to 52 for tiling)",
        grid: (31, 30, 52),
        heads: 16,
        head_dim: 128,
        tiles: (1, 5, 4),
        window: (3, 3, 3),
        topk: 32,
        reference_s_per_step: None,
    },
    Preset {
        name: "480p-241f",
        description: "480x848 video, 241 frames -> 61x30x52 latent tokens (width 53 rounded to 52 for tiling)",
        grid: (61, 30, 52),
        heads: 16,
        head_dim: 128,
        tiles: (1, 5, 4),
        window: (3, 3, 3),
        topk: 32,
        reference_s_per_step: None,
    },
    Preset {
        name: "720p-121f",
        description: "720x1280 video, 121 frames -> 31x45x80 latent tokens",
        grid: (31, 45, 80),
        heads: 16,
        head_dim: 128,
        tiles: (1, 5, 8),
        window: (3, 3, 3),
        topk: 64,
        reference_s_per_step: Some((2.0084, 1.5638)),
    },
    Preset {
        name: "720p-241f",
        description: "720x1280 video, 241 frames -> 61x45x80 latent tokens",
        grid: (61, 45, 80),
        heads: 16,
        head_dim: 128,
        tiles: (1, 5, 8),
        window: (3, 3, 3),
        topk: 64,
        reference_s_per_step: Some((5.5070, 2.9475)),
    },
    Preset {
        name: "720p-121f-scaled",
        description: "720p/121f grid scaled to desk size: 8x24x40 tokens, 2 heads, head_dim 64",
        grid: (8, 24, 40),
        heads: 2,
        head_dim: 64,
        tiles: (2, 6, 8),
        window: (3, 3, 3),
        topk: 16,
        reference_s_per_step: Some((2.0084, 1.5638)),
    },
    Preset {
        name: "720p-241f-scaled",
        description: "720p/241f grid scaled to desk size: 16x24x40 tokens, 2 heads, head_dim 64",
        grid: (16, 24, 40),
        heads: 2,
        head_dim: 64,
        tiles: (4, 6, 8),
        window: (3, 3, 3),
        topk: 16,
        reference_s_per_step: Some((5.5070, 2.9475)),
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}
