//! Block mask generation: pooled similarity scores, intra-block redundancy,
//! top-k selection, the sliding tile window, and their combination.
//!
//! All score arithmetic runs in f64 with fixed ascending iteration order, so
//! masks are reproducible bit-for-bit regardless of thread count.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, TilePermutation, TileSpec, WindowSpec};
use crate::numeric::{dot_f32, dot_f64};

/// How the selective and window masks are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    /// Keep block pairs present in both masks.
    Intersection,
    /// Keep block pairs present in either mask.
    Union,
}

/// Normalization of the intra-block redundancy sum over the N*(N-1) ordered
/// token pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RedundancyNorm {
    /// Divide by N*(N-1): the mean pairwise dot product. Scale-stable across
    /// tile sizes.
    #[serde(rename = "mean")]
    Mean,
    /// Divide by N-1 only, leaving the sum over tokens in place. Equals the
    /// mean variant times N, so the difference is absorbable into beta.
    #[serde(rename = "paper")]
    NMinusOne,
}

/// Tunables for selective and sliding tile mask generation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SstaConfig {
    pub lambda: f64,
    pub beta: f64,
    pub top_k: usize,
    pub window: WindowSpec,
    pub combine_mode: CombineMode,
    pub force_self_block: bool,
    pub redundancy_norm: RedundancyNorm,
}

impl Default for SstaConfig {
    fn default() -> Self {
        SstaConfig {
            lambda: 1.0,
            beta: 1.0,
            top_k: 8,
            window: WindowSpec {
                w_t: 3,
                w_h: 3,
                w_w: 3,
            },
            combine_mode: CombineMode::Intersection,
            force_self_block: true,
            redundancy_norm: RedundancyNorm::Mean,
        }
    }
}

impl SstaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config("lambda must be finite and >= 0"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config("beta must be finite and >= 0"));
        }
        if self.lambda == 0.0 && self.beta == 0.0 {
            return Err(Error::config(
                "lambda and beta cannot both be 0; importance would be constant",
            ));
        }
        if self.top_k == 0 {
            return Err(Error::config("top_k must be >= 1"));
        }
        WindowSpec::new(self.window.w_t, self.window.w_h, self.window.w_w)?;
        Ok(())
    }
}

/// Mean token vector of every block: shape (heads, B, head_dim), f64.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledBlocks {
    pub heads: usize,
    pub blocks: usize,
    pub head_dim: usize,
    pub data: Vec<f64>,
}

impl PooledBlocks {
    pub fn representative(&self, head: usize, block: usize) -> &[f64] {
        let d = self.head_dim;
        let at = (head * self.blocks + block) * d;
        &self.data[at..at + d]
    }
}

/// Query-key block similarity or block importance: shape (heads, B, B), f64.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub heads: usize,
    pub blocks: usize,
    pub data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn zeros(heads: usize, blocks: usize) -> Self {
        ScoreMatrix {
            heads,
            blocks,
            data: vec![0.0; heads * blocks * blocks],
        }
    }

    pub fn at(&self, head: usize, query: usize, key: usize) -> f64 {
        self.data[(head * self.blocks + query) * self.blocks + key]
    }

    pub fn row(&self, head: usize, query: usize) -> &[f64] {
        let b = self.blocks;
        let at = (head * b + query) * b;
        &self.data[at..at + b]
    }

    fn row_mut(&mut self, head: usize, query: usize) -> &mut [f64] {
        let b = self.blocks;
        let at = (head * b + query) * b;
        &mut self.data[at..at + b]
    }
}

/// Per-key-block redundancy: shape (heads, B), f64.
#[derive(Debug, Clone, PartialEq)]
pub struct RedundancyScores {
    pub heads: usize,
    pub blocks: usize,
    pub data: Vec<f64>,
}

impl RedundancyScores {
    pub fn zeros(heads: usize, blocks: usize) -> Self {
        RedundancyScores {
            heads,
            blocks,
            data: vec![0.0; heads * blocks],
        }
    }

    pub fn at(&self, head: usize, block: usize) -> f64 {
        self.data[head * self.blocks + block]
    }

    pub fn row(&self, head: usize) -> &[f64] {
        &self.data[head * self.blocks..(head + 1) * self.blocks]
    }
}

/// All three score tensors of the selection step.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockScores {
    pub similarity: ScoreMatrix,
    pub redundancy: RedundancyScores,
    pub importance: ScoreMatrix,
}

/// Mean-pool each block of a tile-ordered tensor into one representative
/// vector per (head, block). Accumulation is f64 over ascending token order.
pub fn pool_blocks(tile_major: &[f32], grid: &GridSpec, tiles: &TileSpec) -> Result<PooledBlocks> {
    let block_grid = tiles.block_grid(grid)?;
    let blocks = block_grid.count();
    let n = tiles.block_tokens();
    let d = grid.head_dim;
    let tokens = grid.token_count();
    if tile_major.len() != grid.elements() {
        return Err(Error::shape(format!(
            "tensor has {} elements, grid requires {}",
            tile_major.len(),
            grid.elements()
        )));
    }

    let mut data = vec![0.0f64; grid.heads * blocks * d];
    let inv_n = 1.0 / n as f64;
    for head in 0..grid.heads {
        let head_base = head * tokens * d;
        for b in 0..blocks {
            let rep = &mut data[(head * blocks + b) * d..(head * blocks + b + 1) * d];
            for slot in b * n..(b + 1) * n {
                let tok = &tile_major[head_base + slot * d..head_base + (slot + 1) * d];
                for (acc, &x) in rep.iter_mut().zip(tok) {
                    *acc += f64::from(x);
                }
            }
            for acc in rep.iter_mut() {
                *acc *= inv_n;
            }
        }
    }
    Ok(PooledBlocks {
        heads: grid.heads,
        blocks,
        head_dim: d,
        data,
    })
}

/// Similarity of every (query block, key block) pair: the plain dot product
/// of pooled representatives, no logit scaling.
pub fn similarity_scores(q_pooled: &PooledBlocks, k_pooled: &PooledBlocks) -> Result<ScoreMatrix> {
    if (q_pooled.heads, q_pooled.blocks, q_pooled.head_dim)
        != (k_pooled.heads, k_pooled.blocks, k_pooled.head_dim)
    {
        return Err(Error::shape("pooled Q and K shapes disagree"));
    }
    let (heads, blocks) = (q_pooled.heads, q_pooled.blocks);
    let mut scores = ScoreMatrix::zeros(heads, blocks);
    for head in 0..heads {
        for i in 0..blocks {
            let q = q_pooled.representative(head, i);
            let row = scores.row_mut(head, i);
            for (j, out) in row.iter_mut().enumerate() {
                *out = dot_f64(q, k_pooled.representative(head, j));
            }
        }
    }
    Ok(scores)
}

/// Intra-block redundancy of K: for each key block, the sum of dot products
/// over its N*(N-1) ordered token pairs, normalized per `norm`. Runs on raw
/// tokens of the tile-ordered tensor.
pub fn redundancy_scores(
    k_tile_major: &[f32],
    grid: &GridSpec,
    tiles: &TileSpec,
    norm: RedundancyNorm,
) -> Result<RedundancyScores> {
    let block_grid = tiles.block_grid(grid)?;
    let blocks = block_grid.count();
    let n = tiles.block_tokens();
    let d = grid.head_dim;
    let tokens = grid.token_count();
    if k_tile_major.len() != grid.elements() {
        return Err(Error::shape("K length does not match grid"));
    }
    if n < 2 {
        return Err(Error::config(
            "redundancy needs blocks of N >= 2 tokens; set beta = 0 or use larger tiles",
        ));
    }

    let denom = match norm {
        RedundancyNorm::Mean => (n * (n - 1)) as f64,
        RedundancyNorm::NMinusOne => (n - 1) as f64,
    };
    let mut out = RedundancyScores::zeros(grid.heads, blocks);
    for head in 0..grid.heads {
        let head_base = head * tokens * d;
        for b in 0..blocks {
            let block = &k_tile_major[head_base + b * n * d..head_base + (b + 1) * n * d];
            let mut sum = 0.0f64;
            for i in 0..n {
                let ti = &block[i * d..(i + 1) * d];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    sum += dot_f32(ti, &block[j * d..(j + 1) * d]);
                }
            }
            out.data[head * blocks + b] = sum / denom;
        }
    }
    Ok(out)
}

/// Block importance: lambda * similarity - beta * redundancy, with the
/// redundancy of each key block broadcast down its column.
pub fn importance_scores(
    similarity: &ScoreMatrix,
    redundancy: &RedundancyScores,
    lambda: f64,
    beta: f64,
) -> Result<ScoreMatrix> {
    if (similarity.heads, similarity.blocks) != (redundancy.heads, redundancy.blocks) {
        return Err(Error::shape("similarity and redundancy shapes disagree"));
    }
    let (heads, blocks) = (similarity.heads, similarity.blocks);
    let mut importance = ScoreMatrix::zeros(heads, blocks);
    for head in 0..heads {
        let red = redundancy.row(head);
        for i in 0..blocks {
            let sim = similarity.row(head, i);
            let row = importance.row_mut(head, i);
            for j in 0..blocks {
                row[j] = lambda * sim[j] - beta * red[j];
            }
        }
    }
    Ok(importance)
}

/// Compute all selection scores for pooled Q/K plus raw tile-ordered K.
/// With beta == 0 the redundancy pass is skipped and reported as zeros, and
/// single-token blocks are allowed.
pub fn block_scores(
    q_pooled: &PooledBlocks,
    k_pooled: &PooledBlocks,
    k_tile_major: &[f32],
    grid: &GridSpec,
    tiles: &TileSpec,
    cfg: &SstaConfig,
) -> Result<BlockScores> {
    cfg.validate()?;
    let similarity = similarity_scores(q_pooled, k_pooled)?;
    let redundancy = if cfg.beta == 0.0 {
        RedundancyScores::zeros(similarity.heads, similarity.blocks)
    } else {
        redundancy_scores(k_tile_major, grid, tiles, cfg.redundancy_norm)?
    };
    let importance = importance_scores(&similarity, &redundancy, cfg.lambda, cfg.beta)?;
    Ok(BlockScores {
        similarity,
        redundancy,
        importance,
    })
}

/// Role of a block mask; combined masks are the only kind attention accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Selective,
    Sta,
    Combined,
}

/// Boolean matrix over (query block, key block) pairs, per head. The sliding
/// tile mask is head-independent and stored with heads == 1; `get` broadcasts
/// it across heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMask {
    kind: MaskKind,
    heads: usize,
    blocks: usize,
    bits: Vec<bool>,
}

impl BlockMask {
    pub fn filled(kind: MaskKind, heads: usize, blocks: usize, value: bool) -> Self {
        BlockMask {
            kind,
            heads,
            blocks,
            bits: vec![value; heads * blocks * blocks],
        }
    }

    pub fn from_bits(kind: MaskKind, heads: usize, blocks: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != heads * blocks * blocks {
            return Err(Error::shape(format!(
                "mask bits have length {}, expected heads*B*B = {}",
                bits.len(),
                heads * blocks * blocks
            )));
        }
        Ok(BlockMask {
            kind,
            heads,
            blocks,
            bits,
        })
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    /// Stored head count; 1 for head-independent masks.
    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn get(&self, head: usize, query: usize, key: usize) -> bool {
        let h = if self.heads == 1 { 0 } else { head };
        self.bits[(h * self.blocks + query) * self.blocks + key]
    }

    pub fn set(&mut self, head: usize, query: usize, key: usize, value: bool) {
        let h = if self.heads == 1 { 0 } else { head };
        self.bits[(h * self.blocks + query) * self.blocks + key] = value;
    }

    /// One (query block) row of key-block bits.
    pub fn row(&self, head: usize, query: usize) -> &[bool] {
        let h = if self.heads == 1 { 0 } else { head };
        let b = self.blocks;
        &self.bits[(h * b + query) * b..(h * b + query + 1) * b]
    }

    pub fn row_count(&self, head: usize, query: usize) -> usize {
        self.row(head, query).iter().filter(|&&x| x).count()
    }

    /// Total set bits across stored heads.
    pub fn set_pairs(&self) -> u64 {
        self.bits.iter().filter(|&&x| x).count() as u64
    }

    /// CSV of set bits as `head,query_block,key_block` triplets, ascending.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "head,query_block,key_block")?;
        for head in 0..self.heads {
            for i in 0..self.blocks {
                for (j, &set) in self.row(head, i).iter().enumerate() {
                    if set {
                        writeln!(w, "{head},{i},{j}")?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Binary PGM heatmap of one head: B x B pixels, set bits white.
    pub fn write_pgm(&self, head: usize, w: &mut impl Write) -> std::io::Result<()> {
        let b = self.blocks;
        writeln!(w, "P5")?;
        writeln!(w, "{b} {b}")?;
        writeln!(w, "255")?;
        let mut row_bytes = vec![0u8; b];
        for i in 0..b {
            for (px, &set) in row_bytes.iter_mut().zip(self.row(head, i)) {
                *px = if set { 255 } else { 0 };
            }
            w.write_all(&row_bytes)?;
        }
        Ok(())
    }
}

/// Indices of the `k` largest scores in `row`, ties broken by lower index.
/// Returned indices are in selection order (best first).
fn topk_row(row: &[f64], k: usize, scratch: &mut Vec<usize>) -> usize {
    scratch.clear();
    scratch.extend(0..row.len());
    let k = k.min(row.len());
    scratch.sort_unstable_by(|&a, &b| {
        row[b]
            .partial_cmp(&row[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    scratch.truncate(k);
    k
}

/// Keep the top-k key blocks per (head, query block) row of the importance
/// matrix. Every row ends up with exactly min(k, B) set bits.
pub fn topk_mask(importance: &ScoreMatrix, k: usize) -> Result<BlockMask> {
    if k == 0 {
        return Err(Error::config("top_k must be >= 1"));
    }
    let (heads, blocks) = (importance.heads, importance.blocks);
    let mut mask = BlockMask::filled(MaskKind::Selective, heads, blocks, false);
    let mut scratch = Vec::with_capacity(blocks);
    for head in 0..heads {
        for i in 0..blocks {
            topk_row(importance.row(head, i), k, &mut scratch);
            for &j in scratch.iter() {
                mask.set(head, i, j, true);
            }
        }
    }
    Ok(mask)
}

/// Selective mask computed one query-block row at a time, without
/// materializing the (heads, B, B) score matrices. Produces exactly the same
/// bits as `topk_mask` over `importance_scores` / `similarity_scores`.
pub fn selective_mask_streamed(
    q_pooled: &PooledBlocks,
    k_pooled: &PooledBlocks,
    redundancy: &RedundancyScores,
    cfg: &SstaConfig,
) -> Result<BlockMask> {
    if (q_pooled.heads, q_pooled.blocks, q_pooled.head_dim)
        != (k_pooled.heads, k_pooled.blocks, k_pooled.head_dim)
    {
        return Err(Error::shape("pooled Q and K shapes disagree"));
    }
    if (redundancy.heads, redundancy.blocks) != (q_pooled.heads, q_pooled.blocks) {
        return Err(Error::shape(
            "redundancy shape disagrees with pooled blocks",
        ));
    }
    let (heads, blocks) = (q_pooled.heads, q_pooled.blocks);
    let mut mask = BlockMask::filled(MaskKind::Selective, heads, blocks, false);
    let mut row = vec![0.0f64; blocks];
    let mut scratch = Vec::with_capacity(blocks);
    for head in 0..heads {
        let red = redundancy.row(head);
        for i in 0..blocks {
            let q = q_pooled.representative(head, i);
            for j in 0..blocks {
                row[j] =
                    cfg.lambda * dot_f64(q, k_pooled.representative(head, j)) - cfg.beta * red[j];
            }
            topk_row(&row, cfg.top_k, &mut scratch);
            for &j in scratch.iter() {
                mask.set(head, i, j, true);
            }
        }
    }
    Ok(mask)
}

/// Sliding tile window mask: block j is visible from block i iff their block
/// coordinates differ by at most the window radius on every axis. Windows
/// truncate at grid boundaries; no wraparound.
pub fn sta_mask(grid: &GridSpec, tiles: &TileSpec, window: &WindowSpec) -> Result<BlockMask> {
    WindowSpec::new(window.w_t, window.w_h, window.w_w)?;
    let block_grid = tiles.block_grid(grid)?;
    let blocks = block_grid.count();
    let (rt, rh, rw) = window.radii();
    let mut mask = BlockMask::filled(MaskKind::Sta, 1, blocks, false);
    for i in 0..blocks {
        let a = block_grid.unflatten(i);
        for j in 0..blocks {
            let b = block_grid.unflatten(j);
            let inside =
                a.bt.abs_diff(b.bt) <= rt && a.bh.abs_diff(b.bh) <= rh && a.bw.abs_diff(b.bw) <= rw;
            if inside {
                mask.set(0, i, j, true);
            }
        }
    }
    Ok(mask)
}

/// Merge the selective and window masks. Intersection keeps pairs present in
/// both, union pairs present in either; `force_self_block` then sets each
/// query block's own diagonal bit.
pub fn combine_masks(sel: &BlockMask, sta: &BlockMask, cfg: &SstaConfig) -> Result<BlockMask> {
    if sel.kind != MaskKind::Selective || sta.kind != MaskKind::Sta {
        return Err(Error::shape(
            "combine_masks expects a selective and a sta mask",
        ));
    }
    if sel.blocks != sta.blocks {
        return Err(Error::shape(format!(
            "mask block counts disagree: selective has {}, sta has {}",
            sel.blocks, sta.blocks
        )));
    }
    let (heads, blocks) = (sel.heads, sel.blocks);
    let mut combined = BlockMask::filled(MaskKind::Combined, heads, blocks, false);
    for head in 0..heads {
        for i in 0..blocks {
            for j in 0..blocks {
                let bit = match cfg.combine_mode {
                    CombineMode::Intersection => sel.get(head, i, j) && sta.get(head, i, j),
                    CombineMode::Union => sel.get(head, i, j) || sta.get(head, i, j),
                };
                if bit {
                    combined.set(head, i, j, true);
                }
            }
            if cfg.force_self_block {
                combined.set(head, i, i, true);
            }
        }
    }
    Ok(combined)
}

/// Combined mask for a grid/tiles/config triple from already-pooled inputs.
/// This is the full selection pipeline minus attention itself.
pub fn build_combined_mask(
    q_pooled: &PooledBlocks,
    k_pooled: &PooledBlocks,
    redundancy: &RedundancyScores,
    grid: &GridSpec,
    tiles: &TileSpec,
    cfg: &SstaConfig,
) -> Result<BlockMask> {
    let sel = selective_mask_streamed(q_pooled, k_pooled, redundancy, cfg)?;
    let sta = sta_mask(grid, tiles, &cfg.window)?;
    combine_masks(&sel, &sta, cfg)
}

/// Pool a canonical-layout tensor by routing it through the tile permutation.
pub fn pool_canonical(
    canonical: &[f32],
    grid: &GridSpec,
    tiles: &TileSpec,
    perm: &TilePermutation,
) -> Result<PooledBlocks> {
    let tile_major = perm.to_tile_major(canonical, grid.heads, grid.head_dim);
    pool_blocks(&tile_major, grid, tiles)
}
