//! Block-sparse attention engine for 3D spatiotemporal token grids.
//!
//! The engine partitions a (frames, height, width) token grid into tiles,
//! scores key blocks by pooled query-key similarity minus intra-block
//! redundancy, keeps the top-k blocks per query block, intersects (or
//! unions) that selection with a sliding tile window, and runs block-sparse
//! attention over the surviving pairs with an online-softmax accumulator.
//! Dense and per-token masked oracles plus exact MAC accounting make the
//! pruning verifiable.

pub mod attention;
pub mod error;
pub mod fixture;
pub mod grid;
pub mod masking;
pub mod metrics;
mod numeric;

pub use attention::{
    block_sparse_attention, dense_attention, masked_oracle_attention, ssta_attention, ssta_masks,
    AttentionOutput, MacCounter, MaskSet, SparseResult, SstaResult,
};
pub use error::{Error, Result};
pub use fixture::{
    generate_fixture, read_fixture, write_fixture, AttentionInputs, FixtureDistribution,
};
pub use grid::{BlockCoord, BlockGrid, GridSpec, TilePermutation, TileSpec, WindowSpec};
pub use masking::{
    block_scores, combine_masks, importance_scores, pool_blocks, redundancy_scores,
    selective_mask_streamed, similarity_scores, sta_mask, topk_mask, BlockMask, BlockScores,
    CombineMode, MaskKind, PooledBlocks, RedundancyNorm, RedundancyScores, ScoreMatrix, SstaConfig,
};
pub use metrics::{compare, density, mask_overhead_macs, DensityReport, ErrorReport};

/// Engine version embedded in reports.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
