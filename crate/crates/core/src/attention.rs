//! Attention kernels: the dense baseline, a deliberately simple per-token
//! masked oracle, and the production block-sparse kernel.
//!
//! All kernels scale logits by 1/sqrt(D), subtract a running maximum before
//! exponentiation, and accumulate in f64. Reductions walk keys in ascending
//! tile-major order, so results are bitwise reproducible at any thread
//! count: rows never share state and each row is sequential inside.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixture::AttentionInputs;
use crate::grid::{GridSpec, TilePermutation, TileSpec};
use crate::masking::{
    block_scores, combine_masks, pool_blocks, selective_mask_streamed, sta_mask, topk_mask,
    BlockMask, BlockScores, MaskKind, SstaConfig,
};
use crate::numeric::dot_f32;

/// Attention output in canonical token order, shaped like Q.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub grid: GridSpec,
    pub data: Vec<f32>,
}

/// Exact work accounting for one kernel invocation. Score MACs cover the
/// QK^T dot products, output MACs the probability-weighted V accumulation;
/// exponentials are tracked separately and excluded from speedup math.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MacCounter {
    pub score_macs: u64,
    pub output_macs: u64,
    pub exps: u64,
}

impl MacCounter {
    pub fn total_macs(&self) -> u64 {
        self.score_macs + self.output_macs
    }
}

/// Output plus instrumentation of the block-sparse kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseResult {
    pub output: AttentionOutput,
    pub macs: MacCounter,
}

/// Everything the end-to-end pipeline produces: the attention output plus
/// the mask and scores that shaped it, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SstaResult {
    pub output: AttentionOutput,
    pub mask: BlockMask,
    pub scores: BlockScores,
    pub macs: MacCounter,
}

/// Run `body` once per `chunk`-sized output row. `threads` selects the
/// schedule: 1 = sequential (the bitwise reference), 0 = the global rayon
/// pool, n = a dedicated pool of n threads. Rows are disjoint, so every
/// schedule produces identical bytes.
fn for_rows<F>(out: &mut [f32], chunk: usize, threads: usize, body: F)
where
    F: Fn(usize, &mut [f32]) + Sync,
{
    if threads == 1 {
        for (idx, row) in out.chunks_mut(chunk).enumerate() {
            body(idx, row);
        }
    } else if threads == 0 {
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(idx, row)| body(idx, row));
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("failed to build thread pool");
        pool.install(|| {
            out.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(idx, row)| body(idx, row));
        });
    }
}

struct OnlineRow {
    max: f64,
    denom: f64,
}

impl OnlineRow {
    fn new() -> Self {
        OnlineRow {
            max: f64::NEG_INFINITY,
            denom: 0.0,
        }
    }

    /// Fold one (logit, value row) pair into the accumulator.
    #[inline]
    fn update(&mut self, logit: f64, value: &[f32], acc: &mut [f64]) {
        if logit > self.max {
            let rescale = (self.max - logit).exp();
            self.denom = self.denom * rescale + 1.0;
            for (a, &v) in acc.iter_mut().zip(value) {
                *a = *a * rescale + f64::from(v);
            }
            self.max = logit;
        } else {
            let weight = (logit - self.max).exp();
            self.denom += weight;
            for (a, &v) in acc.iter_mut().zip(value) {
                *a += weight * f64::from(v);
            }
        }
    }

    #[inline]
    fn finalize(&self, acc: &[f64], out: &mut [f32]) {
        let inv = 1.0 / self.denom;
        for (o, &a) in out.iter_mut().zip(acc) {
            *o = (a * inv) as f32;
        }
    }
}

/// Full softmax attention over every key: the quadratic reference baseline.
pub fn dense_attention(inputs: &AttentionInputs, threads: usize) -> AttentionOutput {
    let grid = inputs.grid;
    let tokens = grid.token_count();
    let d = grid.head_dim;
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = vec![0f32; grid.elements()];
    let (q, k, v) = (&inputs.q, &inputs.k, &inputs.v);

    for_rows(&mut out, d, threads, |idx, out_row| {
        let head = idx / tokens;
        let q_row = &q[idx * d..(idx + 1) * d];
        let base = head * tokens * d;
        let mut acc = vec![0.0f64; d];
        let mut row = OnlineRow::new();
        for j in 0..tokens {
            let k_row = &k[base + j * d..base + (j + 1) * d];
            let logit = scale * dot_f32(q_row, k_row);
            row.update(logit, &v[base + j * d..base + (j + 1) * d], &mut acc);
        }
        row.finalize(&acc, out_row);
    });
    AttentionOutput { grid, data: out }
}

fn check_mask(mask: &BlockMask, grid: &GridSpec, perm: &TilePermutation) -> Result<()> {
    if mask.kind() != MaskKind::Combined {
        return Err(Error::shape("attention requires a combined mask"));
    }
    let blocks = perm.block_grid().count();
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
    for head in 0..grid.heads {
        for block in 0..blocks {
            if mask.row(head, block).iter().all(|&b| !b) {
                return Err(Error::EmptyRow { head, block });
            }
        }
    }
    Ok(())
}

/// Per-token masked attention by direct summation: expand the block mask to
/// a token-level allowed set and evaluate softmax over the allowed logits in
/// two passes. Intentionally simple and slow; this is the correctness oracle
/// for the block-sparse kernel.
pub fn masked_oracle_attention(
    inputs: &AttentionInputs,
    mask: &BlockMask,
    tiles: &TileSpec,
) -> Result<AttentionOutput> {
    let grid = inputs.grid;
    let perm = TilePermutation::new(&grid, tiles)?;
    check_mask(mask, &grid, &perm)?;
    let tokens = grid.token_count();
    let d = grid.head_dim;
    let n = perm.block_tokens();
    let scale = 1.0 / (d as f64).sqrt();
    // Canonical token -> flat block index.
    let token_block: Vec<u32> = (0..tokens).map(|t| perm.forward()[t] / n as u32).collect();

    let mut out = vec![0f32; grid.elements()];
    let mut logits = vec![0.0f64; tokens];
    for head in 0..grid.heads {
        let base = head * tokens * d;
        for t in 0..tokens {
            let row = mask.row(head, token_block[t] as usize);
            let q_row = &inputs.q[base + t * d..base + (t + 1) * d];
            let mut max = f64::NEG_INFINITY;
            for j in 0..tokens {
                if !row[token_block[j] as usize] {
                    continue;
                }
                let k_row = &inputs.k[base + j * d..base + (j + 1) * d];
                logits[j] = scale * dot_f32(q_row, k_row);
                max = max.max(logits[j]);
            }
            let mut denom = 0.0f64;
            let mut acc = vec![0.0f64; d];
            for j in 0..tokens {
                if !row[token_block[j] as usize] {
                    continue;
                }
                let w = (logits[j] - max).exp();
                denom += w;
                let v_row = &inputs.v[base + j * d..base + (j + 1) * d];
                for (a, &v) in acc.iter_mut().zip(v_row) {
                    *a += w * f64::from(v);
                }
            }
            let out_row = &mut out[base + t * d..base + (t + 1) * d];
            for (o, &a) in out_row.iter_mut().zip(acc.iter()) {
                *o = (a / denom) as f32;
            }
        }
    }
    Ok(AttentionOutput { grid, data: out })
}

/// Block-sparse attention over the set pairs of a combined mask.
///
/// Inputs are permuted to tile-major order once, each (head, query block)
/// row streams its allowed key blocks through an online-softmax accumulator,
/// and the output is permuted back to canonical order. Masked-out block
/// pairs are never touched; the MAC counter proves it.
pub fn block_sparse_attention(
    inputs: &AttentionInputs,
    mask: &BlockMask,
    tiles: &TileSpec,
    threads: usize,
) -> Result<SparseResult> {
    let grid = inputs.grid;
    let perm = TilePermutation::new(&grid, tiles)?;
    check_mask(mask, &grid, &perm)?;
    let q_t = perm.to_tile_major(&inputs.q, grid.heads, grid.head_dim);
    let k_t = perm.to_tile_major(&inputs.k, grid.heads, grid.head_dim);
    let v_t = perm.to_tile_major(&inputs.v, grid.heads, grid.head_dim);
    Ok(sparse_on_tile_major(
        &q_t, &k_t, &v_t, &grid, &perm, mask, threads,
    ))
}

/// Kernel body over already tile-ordered tensors. The mask must have been
/// validated against the permutation.
fn sparse_on_tile_major(
    q_t: &[f32],
    k_t: &[f32],
    v_t: &[f32],
    grid: &GridSpec,
    perm: &TilePermutation,
    mask: &BlockMask,
    threads: usize,
) -> SparseResult {
    let tokens = grid.token_count();
    let d = grid.head_dim;
    let n = perm.block_tokens();
    let blocks = perm.block_grid().count();
    let scale = 1.0 / (d as f64).sqrt();

    let score_macs = AtomicU64::new(0);
    let output_macs = AtomicU64::new(0);
    let exps = AtomicU64::new(0);
    let pair_macs = (n * n * d) as u64;
    let pair_exps = (n * n) as u64;

    let mut out_t = vec![0f32; grid.elements()];
    for_rows(&mut out_t, n * d, threads, |idx, out_block| {
        let head = idx / blocks;
        let qb = idx % blocks;
        let base = head * tokens * d;
        let row = mask.row(head, qb);
        let q_block = &q_t[base + qb * n * d..base + (qb + 1) * n * d];

        let mut states: Vec<OnlineRow> = (0..n).map(|_| OnlineRow::new()).collect();
        let mut acc = vec![0.0f64; n * d];
        let mut visited = 0u64;
        for (kb, &set) in row.iter().enumerate() {
            if !set {
                continue;
            }
            visited += 1;
            let k_block = &k_t[base + kb * n * d..base + (kb + 1) * n * d];
            let v_block = &v_t[base + kb * n * d..base + (kb + 1) * n * d];
            for r in 0..n {
                let q_row = &q_block[r * d..(r + 1) * d];
                let state = &mut states[r];
                let acc_row = &mut acc[r * d..(r + 1) * d];
                for c in 0..n {
                    let logit = scale * dot_f32(q_row, &k_block[c * d..(c + 1) * d]);
                    state.update(logit, &v_block[c * d..(c + 1) * d], acc_row);
                }
            }
        }
        for r in 0..n {
            states[r].finalize(&acc[r * d..(r + 1) * d], &mut out_block[r * d..(r + 1) * d]);
        }
        score_macs.fetch_add(visited * pair_macs, Ordering::Relaxed);
        output_macs.fetch_add(visited * pair_macs, Ordering::Relaxed);
        exps.fetch_add(visited * pair_exps, Ordering::Relaxed);
    });

    let output = AttentionOutput {
        grid: *grid,
        data: perm.to_canonical(&out_t, grid.heads, grid.head_dim),
    };
    SparseResult {
        output,
        macs: MacCounter {
            score_macs: score_macs.into_inner(),
            output_macs: output_macs.into_inner(),
            exps: exps.into_inner(),
        },
    }
}

/// The end-to-end pipeline: partition, pool, score, select, window, combine,
/// then block-sparse attention.
pub fn ssta_attention(
    inputs: &AttentionInputs,
    tiles: &TileSpec,
    cfg: &SstaConfig,
    threads: usize,
) -> Result<SstaResult> {
    cfg.validate()?;
    let grid = inputs.grid;
    let perm = TilePermutation::new(&grid, tiles)?;
    let q_t = perm.to_tile_major(&inputs.q, grid.heads, grid.head_dim);
    let k_t = perm.to_tile_major(&inputs.k, grid.heads, grid.head_dim);

    let q_pooled = pool_blocks(&q_t, &grid, tiles)?;
    let k_pooled = pool_blocks(&k_t, &grid, tiles)?;
    let scores = block_scores(&q_pooled, &k_pooled, &k_t, &grid, tiles, cfg)?;
    let sel = topk_mask(&scores.importance, cfg.top_k)?;
    let sta = sta_mask(&grid, tiles, &cfg.window)?;
    let mask = combine_masks(&sel, &sta, cfg)?;
    check_mask(&mask, &grid, &perm)?;

    let v_t = perm.to_tile_major(&inputs.v, grid.heads, grid.head_dim);
    let result = sparse_on_tile_major(&q_t, &k_t, &v_t, &grid, &perm, &mask, threads);
    Ok(SstaResult {
        output: result.output,
        mask,
        scores,
        macs: result.macs,
    })
}

/// The selective, window, and combined masks of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub selective: BlockMask,
    pub sta: BlockMask,
    pub combined: BlockMask,
}

/// Mask-only pipeline over raw Q and K, streaming the selection row by row
/// so large block counts never materialize an (heads, B, B) score matrix.
/// Bit-identical to the masks produced by `ssta_attention`.
pub fn ssta_masks(
    q: &[f32],
    k: &[f32],
    grid: &GridSpec,
    tiles: &TileSpec,
    cfg: &SstaConfig,
) -> Result<MaskSet> {
    cfg.validate()?;
    if q.len() != grid.elements() || k.len() != grid.elements() {
        return Err(Error::shape("Q/K length does not match grid"));
    }
    let perm = TilePermutation::new(grid, tiles)?;
    let q_t = perm.to_tile_major(q, grid.heads, grid.head_dim);
    let q_pooled = pool_blocks(&q_t, grid, tiles)?;
    drop(q_t);
    let k_t = perm.to_tile_major(k, grid.heads, grid.head_dim);
    let k_pooled = pool_blocks(&k_t, grid, tiles)?;
    let redundancy = if cfg.beta == 0.0 {
        crate::masking::RedundancyScores::zeros(q_pooled.heads, q_pooled.blocks)
    } else {
        crate::masking::redundancy_scores(&k_t, grid, tiles, cfg.redundancy_norm)?
    };
    drop(k_t);
    let selective = selective_mask_streamed(&q_pooled, &k_pooled, &redundancy, cfg)?;
    let sta = sta_mask(grid, tiles, &cfg.window)?;
    let combined = combine_masks(&selective, &sta, cfg)?;
    Ok(MaskSet {
        selective,
        sta,
        combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{generate_fixture, FixtureDistribution};
    use crate::grid::WindowSpec;
    use crate::masking::CombineMode;

    fn max_abs_diff(a: &AttentionOutput, b: &AttentionOutput) -> f64 {
        a.data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| (f64::from(x) - f64::from(y)).abs())
            .fold(0.0, f64::max)
    }

    fn full_mask(heads: usize, blocks: usize) -> BlockMask {
        BlockMask::filled(MaskKind::Combined, heads, blocks, true)
    }

    #[test]
    fn dense_single_token_returns_v() {
        let grid = GridSpec::new(1, 1, 1, 1, 3).unwrap();
        let inputs = AttentionInputs::new(
            grid,
            vec![0.3, -0.7, 2.0],
            vec![1.0, 1.0, 1.0],
            vec![5.0, -6.0, 7.5],
        )
        .unwrap();
        let out = dense_attention(&inputs, 1);
        assert_eq!(out.data, inputs.v);
    }

    #[test]
    fn dense_equal_logits_average_values() {
        let grid = GridSpec::new(1, 2, 1, 1, 2).unwrap();
        // Identical keys give identical logits whatever Q is.
        let inputs = AttentionInputs::new(
            grid,
            vec![0.4, -1.0, 0.4, -1.0],
            vec![0.9, 0.2, 0.9, 0.2],
            vec![1.0, 3.0, 2.0, -5.0],
        )
        .unwrap();
        let out = dense_attention(&inputs, 1);
        for (got, want) in out.data.chunks(2).zip([[1.5f32, -1.0], [1.5, -1.0]]) {
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn dense_saturated_softmax_is_stable() {
        let grid = GridSpec::new(1, 2, 1, 1, 1).unwrap();
        // Logit gap of 1000 after scaling; output must equal the dominant V
        // without overflow.
        let inputs =
            AttentionInputs::new(grid, vec![1.0, 1.0], vec![1047.0, 47.0], vec![2.5, -9.0])
                .unwrap();
        let out = dense_attention(&inputs, 1);
        assert!(out.data.iter().all(|x| x.is_finite()));
        assert!((f64::from(out.data[0]) - 2.5).abs() <= 1e-6);
        assert!((f64::from(out.data[1]) - 2.5).abs() <= 1e-6);
    }

    #[test]
    fn oracle_with_full_mask_matches_dense() {
        let grid = GridSpec::new(2, 2, 2, 2, 8).unwrap();
        let tiles = TileSpec::new(1, 2, 2).unwrap();
        let inputs = generate_fixture(&grid, 1, FixtureDistribution::StandardNormal);
        let dense = dense_attention(&inputs, 1);
        let oracle = masked_oracle_attention(&inputs, &full_mask(2, 2), &tiles).unwrap();
        assert!(max_abs_diff(&dense, &oracle) <= 1e-6);
    }

    #[test]
    fn oracle_single_block_identity_mask_matches_dense() {
        let grid = GridSpec::new(1, 2, 2, 2, 4).unwrap();
        let tiles = TileSpec::new(2, 2, 2).unwrap();
        let inputs = generate_fixture(&grid, 2, FixtureDistribution::StandardNormal);
        let mask = BlockMask::from_bits(MaskKind::Combined, 1, 1, vec![true]).unwrap();
        let dense = dense_attention(&inputs, 1);
        let oracle = masked_oracle_attention(&inputs, &mask, &tiles).unwrap();
        assert!(max_abs_diff(&dense, &oracle) <= 1e-6);
    }

    #[test]
    fn oracle_identity_mask_keeps_attention_inside_blocks() {
        // 4-token grid split into two 2-token blocks; with an identity block
        // mask token 0 sees only tokens 0 and 1. Checked against a softmax
        // expanded by hand in f64.
        let grid = GridSpec::new(1, 2, 2, 1, 1).unwrap();
        let tiles = TileSpec::new(1, 2, 1).unwrap();
        let q = vec![1.0f32, 0.5, -0.25, 2.0];
        let k = vec![0.5f32, -1.0, 1.5, 0.75];
        let v = vec![10.0f32, 20.0, 30.0, 40.0];
        let inputs = AttentionInputs::new(grid, q.clone(), k.clone(), v.clone()).unwrap();
        let mask =
            BlockMask::from_bits(MaskKind::Combined, 1, 2, vec![true, false, false, true]).unwrap();
        let out = masked_oracle_attention(&inputs, &mask, &tiles).unwrap();

        let l0 = f64::from(q[0]) * f64::from(k[0]);
        let l1 = f64::from(q[0]) * f64::from(k[1]);
        let m = l0.max(l1);
        let (w0, w1) = ((l0 - m).exp(), (l1 - m).exp());
        let want = (w0 * 10.0 + w1 * 20.0) / (w0 + w1);
        assert!((f64::from(out.data[0]) - want).abs() <= 1e-6);
        // Token 2 lives in block 1 and must ignore blocks 0's values.
        let l2 = f64::from(q[2]) * f64::from(k[2]);
        let l3 = f64::from(q[2]) * f64::from(k[3]);
        let m2 = l2.max(l3);
        let (w2, w3) = ((l2 - m2).exp(), (l3 - m2).exp());
        let want2 = (w2 * 30.0 + w3 * 40.0) / (w2 + w3);
        assert!((f64::from(out.data[2]) - want2).abs() <= 1e-6);
    }

    #[test]
    fn sparse_full_mask_matches_dense() {
        let grid = GridSpec::new(2, 4, 2, 2, 8).unwrap();
        let tiles = TileSpec::new(2, 2, 2).unwrap();
        let inputs = generate_fixture(&grid, 3, FixtureDistribution::StandardNormal);
        let dense = dense_attention(&inputs, 1);
        let sparse = block_sparse_attention(&inputs, &full_mask(2, 2), &tiles, 1).unwrap();
        assert!(max_abs_diff(&dense, &sparse.output) <= 1e-5);
    }

    #[test]
    fn sparse_random_mask_matches_oracle() {
        let grid = GridSpec::new(2, 4, 4, 4, 16).unwrap();
        let tiles = TileSpec::new(2, 2, 2).unwrap();
        let blocks = 8;
        let inputs = generate_fixture(&grid, 4, FixtureDistribution::StandardNormal);
        // Deterministic pseudo-random mask with guaranteed diagonal.
        let mut bits = vec![false; grid.heads * blocks * blocks];
        let mut state = 0x9e3779b97f4a7c15u64;
        for (i, b) in bits.iter_mut().enumerate() {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            *b = (state >> 33) & 1 == 1 || (i / blocks) % blocks == i % blocks;
        }
        let mask = BlockMask::from_bits(MaskKind::Combined, grid.heads, blocks, bits).unwrap();
        let oracle = masked_oracle_attention(&inputs, &mask, &tiles).unwrap();
        let sparse = block_sparse_attention(&inputs, &mask, &tiles, 1).unwrap();
        assert!(max_abs_diff(&oracle, &sparse.output) <= 1e-5);
    }

    #[test]
    fn sparse_half_density_counts_half_the_dense_macs() {
        let grid = GridSpec::new(1, 4, 4, 4, 8).unwrap();
        let tiles = TileSpec::new(2, 2, 2).unwrap();
        let blocks = 8usize;
        let n = tiles.block_tokens();
        let inputs = generate_fixture(&grid, 5, FixtureDistribution::StandardNormal);
        // Exactly half the bits set in every row.
        let mut bits = vec![false; blocks * blocks];
        for i in 0..blocks {
            for j in 0..blocks / 2 {
                bits[i * blocks + (i + j) % blocks] = true;
            }
        }
        let mask = BlockMask::from_bits(MaskKind::Combined, 1, blocks, bits).unwrap();
        let result = block_sparse_attention(&inputs, &mask, &tiles, 1).unwrap();
        let dense_macs = (grid.heads * blocks * blocks * 2 * n * n * grid.head_dim) as u64;
        assert_eq!(result.macs.total_macs(), dense_macs / 2);
        assert_eq!(result.macs.exps, (mask.set_pairs() * (n * n) as u64));
    }

    #[test]
    fn ssta_degenerates_to_dense_with_vacuous_masks() {
        let grid = GridSpec::new(2, 4, 4, 2, 8).unwrap();
        let tiles = TileSpec::new(2, 2, 2).unwrap();
        let bg = tiles.block_grid(&grid).unwrap();
        let inputs = generate_fixture(&grid, 6, FixtureDistribution::StandardNormal);
        let cfg = SstaConfig {
            top_k: bg.count(),
            window: WindowSpec::full_for(&bg),
            ..SstaConfig::default()
        };
        let result = ssta_attention(&inputs, &tiles, &cfg, 1).unwrap();
        assert_eq!(
            result.mask.set_pairs(),
            (grid.heads * bg.count() * bg.count()) as u64
        );
        let dense = dense_attention(&inputs, 1);
        assert!(max_abs_diff(&dense, &result.output) <= 1e-5);
    }

    #[test]
    fn ssta_clustered_blocks_select_themselves() {
        // Each block carries its own strong orthogonal direction in both Q
        // and K, so with a zero-radius window and k = 1 the combined mask is
        // the identity and every token attends only its own block.
        let grid = GridSpec::new(1, 4, 2, 1, 4).unwrap();
        let tiles = TileSpec::new(2, 1, 1).unwrap();
        let bg = tiles.block_grid(&grid).unwrap();
        let blocks = bg.count();
        assert_eq!(blocks, 4);
        let perm = TilePermutation::new(&grid, &tiles).unwrap();
        let d = grid.head_dim;
        let mut q = vec![0f32; grid.elements()];
        let mut k = vec![0f32; grid.elements()];
        let mut v = vec![0f32; grid.elements()];
        for b in 0..blocks {
            for (slot_in_block, &tok) in perm.block_token_ids(b).iter().enumerate() {
                let at = tok as usize * d;
                q[at + b] = 8.0;
                k[at + b] = 8.0;
                // Small asymmetric perturbation so nothing ties.
                q[at + (b + 1) % d] = 0.01 * (slot_in_block as f32 + 1.0);
                v[at] = b as f32 + 1.0;
                v[at + 1] = tok as f32;
            }
        }
        let inputs = AttentionInputs::new(grid, q, k, v).unwrap();
        let cfg = SstaConfig {
            lambda: 1.0,
            beta: 0.0,
            top_k: 1,
            window: WindowSpec::new(1, 1, 1).unwrap(),
            combine_mode: CombineMode::Intersection,
            force_self_block: true,
            redundancy_norm: crate::masking::RedundancyNorm::Mean,
        };
        let result = ssta_attention(&inputs, &tiles, &cfg, 1).unwrap();
        for i in 0..blocks {
            for j in 0..blocks {
                assert_eq!(result.mask.get(0, i, j), i == j, "mask at ({i},{j})");
            }
        }
        // Independent per-block local attention oracle.
        let scale = 1.0 / (d as f64).sqrt();
        for b in 0..blocks {
            let ids = perm.block_token_ids(b);
            for &ti in ids {
                let q_row = &inputs.q[ti as usize * d..(ti as usize + 1) * d];
                let mut max = f64::NEG_INFINITY;
                let logits: Vec<f64> = ids
                    .iter()
                    .map(|&tj| {
                        let l = scale
                            * dot_f32(q_row, &inputs.k[tj as usize * d..(tj as usize + 1) * d]);
                        max = max.max(l);
                        l
                    })
                    .collect();
                let mut denom = 0.0;
                let mut acc = vec![0.0f64; d];
                for (&tj, &l) in ids.iter().zip(&logits) {
                    let w = (l - max).exp();
                    denom += w;
                    for (a, &vv) in acc
                        .iter_mut()
                        .zip(&inputs.v[tj as usize * d..(tj as usize + 1) * d])
                    {
                        *a += w * f64::from(vv);
                    }
                }
                for (x, &a) in acc.iter().enumerate() {
                    let want = a / denom;
                    let got = f64::from(result.output.data[ti as usize * d + x]);
                    assert!((got - want).abs() <= 1e-6, "token {ti} dim {x}");
                }
            }
        }
    }

    #[test]
    fn ssta_runs_are_bitwise_deterministic() {
        let grid = GridSpec::new(2, 4, 4, 4, 8).unwrap();
        let tiles = TileSpec::new(2, 2, 2).unwrap();
        let inputs = generate_fixture(&grid, 7, FixtureDistribution::StandardNormal);
        let cfg = SstaConfig::default();
        let a = ssta_attention(&inputs, &tiles, &cfg, 1).unwrap();
        let b = ssta_attention(&inputs, &tiles, &cfg, 1).unwrap();
        assert_eq!(a.output.data, b.output.data);
        assert_eq!(a.mask, b.mask);
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let grid = GridSpec::new(2, 4, 4, 4, 8).unwrap();
        let tiles = TileSpec::new(2, 2, 2).unwrap();
        let inputs = generate_fixture(&grid, 8, FixtureDistribution::StandardNormal);
        let cfg = SstaConfig::default();
        let single = ssta_attention(&inputs, &tiles, &cfg, 1).unwrap();
        let multi = ssta_attention(&inputs, &tiles, &cfg, 4).unwrap();
        assert_eq!(single.output.data, multi.output.data);
        assert_eq!(single.mask, multi.mask);
        assert_eq!(single.macs, multi.macs);
    }

    #[test]
    fn mask_block_count_mismatch_is_rejected() {
        let grid = GridSpec::new(1, 4, 2, 2, 4).unwrap();
        let tiles = TileSpec::new(2, 2, 2).unwrap();
        let inputs = generate_fixture(&grid, 9, FixtureDistribution::StandardNormal);
        let mask = full_mask(1, 3);
        let err = block_sparse_attention(&inputs, &mask, &tiles, 1).unwrap_err();
        assert!(err.to_string().contains("blocks"), "{err}");
    }

    #[test]
    fn empty_row_is_reported_with_location() {
        let grid = GridSpec::new(1, 2, 2, 1, 2).unwrap();
        let tiles = TileSpec::new(1, 2, 1).unwrap();
        let inputs = generate_fixture(&grid, 10, FixtureDistribution::StandardNormal);
        let mask = BlockMask::from_bits(MaskKind::Combined, 1, 2, vec![true, false, false, false])
            .unwrap();
        let err = block_sparse_attention(&inputs, &mask, &tiles, 1).unwrap_err();
        assert!(
            matches!(err, Error::EmptyRow { head: 0, block: 1 }),
            "{err}"
        );
        let err = masked_oracle_attention(&inputs, &mask, &tiles).unwrap_err();
        assert!(
            matches!(err, Error::EmptyRow { head: 0, block: 1 }),
            "{err}"
        );
    }

    #[test]
    fn outputs_stay_inside_attended_value_bounds() {
        let grid = GridSpec::new(2, 4, 4, 2, 8).unwrap();
        let tiles = TileSpec::new(2, 2, 2).unwrap();
        let inputs = generate_fixture(&grid, 11, FixtureDistribution::StandardNormal);
        let cfg = SstaConfig::default();
        let result = ssta_attention(&inputs, &tiles, &cfg, 1).unwrap();
        let perm = TilePermutation::new(&grid, &tiles).unwrap();
        let tokens = grid.token_count();
        let d = grid.head_dim;
        let n = perm.block_tokens();
        for head in 0..grid.heads {
            let base = head * tokens * d;
            for t in 0..tokens {
                let qb = perm.forward()[t] as usize / n;
                let row = result.mask.row(head, qb);
                for x in 0..d {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for (kb, &set) in row.iter().enumerate() {
                        if !set {
                            continue;
                        }
                        for &tj in perm.block_token_ids(kb) {
                            let v = f64::from(inputs.v[base + tj as usize * d + x]);
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    let got = f64::from(result.output.data[base + t * d + x]);
                    assert!(
                        got >= lo - 1e-6 && got <= hi + 1e-6,
                        "head {head} token {t} dim {x}: {got} outside [{lo}, {hi}]"
                    );
                }
            }
        }
    }

    #[test]
    fn permutation_roundtrip_leaves_dense_output_unchanged() {
        let grid = GridSpec::new(2, 4, 2, 2, 8).unwrap();
        let tiles = TileSpec::new(2, 2, 1).unwrap();
        let perm = TilePermutation::new(&grid, &tiles).unwrap();
        let inputs = generate_fixture(&grid, 12, FixtureDistribution::StandardNormal);
        let roundtrip = AttentionInputs::new(
            grid,
            perm.to_canonical(
                &perm.to_tile_major(&inputs.q, grid.heads, grid.head_dim),
                grid.heads,
                grid.head_dim,
            ),
            perm.to_canonical(
                &perm.to_tile_major(&inputs.k, grid.heads, grid.head_dim),
                grid.heads,
                grid.head_dim,
            ),
            perm.to_canonical(
                &perm.to_tile_major(&inputs.v, grid.heads, grid.head_dim),
                grid.heads,
                grid.head_dim,
            ),
        )
        .unwrap();
        assert_eq!(
            dense_attention(&inputs, 1).data,
            dense_attention(&roundtrip, 1).data
        );
    }

    #[test]
    fn mask_only_pipeline_matches_full_pipeline() {
        let grid = GridSpec::new(2, 4, 4, 4, 8).unwrap();
        let tiles = TileSpec::new(2, 2, 2).unwrap();
        let inputs = generate_fixture(&grid, 13, FixtureDistribution::StandardNormal);
        let cfg = SstaConfig::default();
        let full = ssta_attention(&inputs, &tiles, &cfg, 1).unwrap();
        let masks = ssta_masks(&inputs.q, &inputs.k, &grid, &tiles, &cfg).unwrap();
        assert_eq!(full.mask, masks.combined);
    }
}
