//! Mask density, exact MAC accounting, error norms, and the analytic
//! speedup model tying density to attention work.
//!
//! Work is counted in MACs (one multiply-accumulate). Attention costs
//! 2*N^2*D MACs per set block pair per head: N^2*D for the QK^T scores and
//! the same for the probability-weighted V accumulation. Softmax
//! exponentials are tracked separately by the kernels and excluded here, so
//! the density = work identity is exact and integer-testable.

use crate::attention::AttentionOutput;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, TileSpec};
use crate::masking::BlockMask;

/// How much attention work a mask keeps, and what the mask itself cost.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DensityReport {
    /// Set (head, query block, key block) triples, broadcast across heads
    /// for head-independent masks.
    pub set_pairs: u64,
    /// heads * B * B.
    pub total_pairs: u64,
    /// set_pairs / total_pairs.
    pub density: f64,
    /// 2 * N^2 * D MACs per set pair.
    pub sparse_macs: u64,
    /// 2 * N^2 * D MACs per possible pair: the dense attention cost.
    pub dense_macs: u64,
    /// Cost of producing the mask: pooling, similarity, redundancy.
    pub mask_overhead_macs: u64,
    /// dense_macs / (sparse_macs + mask_overhead_macs).
    pub theoretical_speedup: f64,
}

/// MACs spent building the mask, counted exactly as the scoring loops run:
/// pooling touches every Q and K element once, similarity is one D-MAC dot
/// per (head, block, block) pair, and redundancy (when enabled) is a dot per
/// ordered token pair inside every key block.
pub fn mask_overhead_macs(grid: &GridSpec, tiles: &TileSpec, with_redundancy: bool) -> Result<u64> {
    let blocks = tiles.block_grid(grid)?.count() as u64;
    let n = tiles.block_tokens() as u64;
    let d = grid.head_dim as u64;
    let heads = grid.heads as u64;
    let tokens = grid.token_count() as u64;

    let pooling = 2 * heads * tokens * d;
    let similarity = heads * blocks * blocks * d;
    let redundancy = if with_redundancy {
        heads * blocks * n * (n - 1) * d
    } else {
        0
    };
    Ok(pooling + similarity + redundancy)
}

/// Exact density and work report for a mask over the given partition.
pub fn density(
    mask: &BlockMask,
    grid: &GridSpec,
    tiles: &TileSpec,
    mask_overhead_macs: u64,
) -> Result<DensityReport> {
    let blocks = tiles.block_grid(grid)?.count();
    if mask.blocks() != blocks {
        return Err(Error::shape(format!(
            "mask covers {} blocks but tiles/grid produce {blocks}",
            mask.blocks()
        )));
    }
    if mask.heads() != 1 && mask.heads() != grid.heads {
        return Err(Error::shape(format!(
            "mask has {} heads, grid has {}",
            mask.heads(),
            grid.heads
        )));
    }

    let broadcast = (grid.heads / mask.heads()) as u64;
    let set_pairs = mask.set_pairs() * broadcast;
    let total_pairs = grid.heads as u64 * (blocks * blocks) as u64;
    let n = tiles.block_tokens() as u64;
    let pair_macs = 2 * n * n * grid.head_dim as u64;
    let sparse_macs = set_pairs * pair_macs;
    let dense_macs = total_pairs * pair_macs;
    Ok(DensityReport {
        set_pairs,
        total_pairs,
        density: set_pairs as f64 / total_pairs as f64,
        sparse_macs,
        dense_macs,
        mask_overhead_macs,
        theoretical_speedup: dense_macs as f64 / (sparse_macs + mask_overhead_macs) as f64,
    })
}

/// Elementwise error norms between two outputs of the same shape.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorReport {
    pub max_abs: f64,
    pub mean_abs: f64,
    /// l2(a - b) / l2(b); 0 when both sides are identically zero.
    pub relative_l2: f64,
}

/// Compare tensor `a` against reference `b` with f64 accumulation.
pub fn compare(a: &AttentionOutput, b: &AttentionOutput) -> Result<ErrorReport> {
    if a.grid != b.grid {
        return Err(Error::shape("outputs have different grids"));
    }
    let mut max_abs = 0.0f64;
    let mut sum_abs = 0.0f64;
    let mut sum_sq_diff = 0.0f64;
    let mut sum_sq_ref = 0.0f64;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let diff = f64::from(x) - f64::from(y);
        max_abs = max_abs.max(diff.abs());
        sum_abs += diff.abs();
        sum_sq_diff += diff * diff;
        sum_sq_ref += f64::from(y) * f64::from(y);
    }
    let relative_l2 = if sum_sq_ref == 0.0 {
        if sum_sq_diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (sum_sq_diff / sum_sq_ref).sqrt()
    };
    Ok(ErrorReport {
        max_abs,
        mean_abs: sum_abs / a.data.len() as f64,
        relative_l2,
    })
}
