//! Shared shape definitions for the criterion benchmarks.

use ssta_core::{GridSpec, SstaConfig, TileSpec, WindowSpec};

pub struct BenchCase {
    pub name: &'static str,
    pub grid: GridSpec,
    pub tiles: TileSpec,
    pub cfg: SstaConfig,
}

/// 2048 tokens: the default verification shape with one head.
pub fn small() -> BenchCase {
    BenchCase {
        name: "8x16x16-h1-d32",
        grid: GridSpec::new(1, 8, 16, 16, 32).unwrap(),
        tiles: TileSpec::new(2, 4, 4).unwrap(),
        cfg: SstaConfig {
            top_k: 8,
            window: WindowSpec::new(3, 3, 3).unwrap(),
            ..SstaConfig::default()
        },
    }
}

/// 7680 tokens: half the desk-scale trend shape.
pub fn medium() -> BenchCase {
    BenchCase {
        name: "8x24x40-h1-d32",
        grid: GridSpec::new(1, 8, 24, 40, 32).unwrap(),
        tiles: TileSpec::new(2, 6, 8).unwrap(),
        cfg: SstaConfig {
            top_k: 16,
            window: WindowSpec::new(3, 3, 3).unwrap(),
            ..SstaConfig::default()
        },
    }
}
