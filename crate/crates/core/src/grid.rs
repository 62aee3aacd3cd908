//! Spatiotemporal grid geometry: token grids, tile partitions, block
//! coordinates, and the tile-major token permutation.
//!
//! Canonical token order is frame-major: token index `(t*H + h)*W + w`.
//! Tensors are stored head-major with the head dimension innermost, so the
//! element offset of `(head, token, d)` is `(head*tokens + token)*D + d`.

use crate::error::{Error, Result};

/// Shape of one attention problem: a 3D token grid replicated per head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub heads: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub head_dim: usize,
}

impl GridSpec {
    pub fn new(
        heads: usize,
        frames: usize,
        height: usize,
        width: usize,
        head_dim: usize,
    ) -> Result<Self> {
        let spec = GridSpec {
            heads,
            frames,
            height,
            width,
            head_dim,
        };
        for (name, v) in [
            ("heads", heads),
            ("frames", frames),
            ("height", height),
            ("width", width),
            ("head_dim", head_dim),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        // Reject grids whose element count cannot be addressed.
        spec.checked_elements()?;
        if spec.token_count() > u32::MAX as usize {
            return Err(Error::config("token count exceeds u32 index range"));
        }
        Ok(spec)
    }

    pub fn token_count(&self) -> usize {
        self.frames * self.height * self.width
    }

    /// Elements in one tensor (Q, K, or V).
    pub fn elements(&self) -> usize {
        self.heads * self.token_count() * self.head_dim
    }

    fn checked_elements(&self) -> Result<usize> {
        self.frames
            .checked_mul(self.height)
            .and_then(|v| v.checked_mul(self.width))
            .and_then(|v| v.checked_mul(self.heads))
            .and_then(|v| v.checked_mul(self.head_dim))
            .and_then(|v| v.checked_mul(std::mem::size_of::<f32>()))
            .filter(|&bytes| bytes <= isize::MAX as usize)
            .map(|bytes| bytes / std::mem::size_of::<f32>())
            .ok_or_else(|| Error::config("grid dimensions overflow addressable memory"))
    }

    pub fn token_index(&self, t: usize, h: usize, w: usize) -> usize {
        debug_assert!(t < self.frames && h < self.height && w < self.width);
        (t * self.height + h) * self.width + w
    }

    pub fn token_coords(&self, index: usize) -> (usize, usize, usize) {
        let w = index % self.width;
        let rest = index / self.width;
        (rest / self.height, rest % self.height, w)
    }
}

/// Tile extents of the 3D block partition. Every axis must divide the grid
/// exactly; non-divisible configurations are rejected, not padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TileSpec {
    pub tile_t: usize,
    pub tile_h: usize,
    pub tile_w: usize,
}

impl TileSpec {
    pub fn new(tile_t: usize, tile_h: usize, tile_w: usize) -> Result<Self> {
        if tile_t == 0 || tile_h == 0 || tile_w == 0 {
            return Err(Error::config("tile extents must be >= 1"));
        }
        Ok(TileSpec {
            tile_t,
            tile_h,
            tile_w,
        })
    }

    /// Tokens per block (N).
    pub fn block_tokens(&self) -> usize {
        self.tile_t * self.tile_h * self.tile_w
    }

    /// Validate divisibility against a grid and return the block-grid extents.
    /// The error names the first offending axis and the nearest valid extents.
    pub fn block_grid(&self, grid: &GridSpec) -> Result<BlockGrid> {
        let axes = [
            ("t", "frames", grid.frames, self.tile_t),
            ("h", "height", grid.height, self.tile_h),
            ("w", "width", grid.width, self.tile_w),
        ];
        for (axis, name, extent, tile) in axes {
            if extent % tile != 0 {
                let lower = (extent / tile).max(1) * tile;
                let upper = lower + tile;
                return Err(Error::config(format!(
                    "tile does not divide grid on axis {axis}: tile_{axis}={tile}, {name}={extent} \
                     (nearest valid {name}: {lower} or {upper})"
                )));
            }
        }
        Ok(BlockGrid {
            t: grid.frames / self.tile_t,
            h: grid.height / self.tile_h,
            w: grid.width / self.tile_w,
        })
    }

    /// Round each grid axis to the nearest positive multiple of the tile,
    /// preferring the larger extent on ties. Heads and head_dim pass through.
    pub fn nearest_valid_grid(&self, grid: &GridSpec) -> GridSpec {
        fn round(extent: usize, tile: usize) -> usize {
            let lower = (extent / tile).max(1) * tile;
            let upper = lower + tile;
            if extent.saturating_sub(lower) < upper - extent {
                lower
            } else {
                upper
            }
        }
        GridSpec {
            heads: grid.heads,
            frames: round(grid.frames, self.tile_t),
            height: round(grid.height, self.tile_h),
            width: round(grid.width, self.tile_w),
            head_dim: grid.head_dim,
        }
    }
}

/// Extents of the block grid: blocks per axis after tiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl BlockGrid {
    /// Total block count (B).
    pub fn count(&self) -> usize {
        self.t * self.h * self.w
    }

    pub fn flatten(&self, bt: usize, bh: usize, bw: usize) -> usize {
        debug_assert!(bt < self.t && bh < self.h && bw < self.w);
        (bt * self.h + bh) * self.w + bw
    }

    pub fn unflatten(&self, flat: usize) -> BlockCoord {
        let bw = flat % self.w;
        let rest = flat / self.w;
        BlockCoord {
            bt: rest / self.h,
            bh: rest % self.h,
            bw,
            flat,
        }
    }
}

/// A block position in both coordinate forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockCoord {
    pub bt: usize,
    pub bh: usize,
    pub bw: usize,
    pub flat: usize,
}

/// Sliding window extents measured in blocks. Components are odd so the
/// window is centered on the query block; components larger than
/// `2*extent - 1` behave as a full axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WindowSpec {
    pub w_t: usize,
    pub w_h: usize,
    pub w_w: usize,
}

impl WindowSpec {
    pub fn new(w_t: usize, w_h: usize, w_w: usize) -> Result<Self> {
        for (axis, v) in [("t", w_t), ("h", w_h), ("w", w_w)] {
            if v == 0 {
                return Err(Error::config(format!(
                    "window component {axis} must be >= 1"
                )));
            }
            if v % 2 == 0 {
                return Err(Error::config(format!(
                    "window component {axis} must be odd, got {v}"
                )));
            }
        }
        Ok(WindowSpec { w_t, w_h, w_w })
    }

    /// Per-axis half widths `(w - 1) / 2`.
    pub fn radii(&self) -> (usize, usize, usize) {
        (self.w_t / 2, self.w_h / 2, self.w_w / 2)
    }

    /// The smallest window covering every axis of `blocks` fully.
    pub fn full_for(blocks: &BlockGrid) -> WindowSpec {
        WindowSpec {
            w_t: 2 * blocks.t - 1,
            w_h: 2 * blocks.h - 1,
            w_w: 2 * blocks.w - 1,
        }
    }
}

/// Bijection between canonical token order and tile-major token order.
///
/// In tile-major order the N tokens of block `b` occupy the contiguous slot
/// range `[b*N, (b+1)*N)`, sorted by ascending canonical index within the
/// block.
#[derive(Debug, Clone)]
pub struct TilePermutation {
    block_grid: BlockGrid,
    block_tokens: usize,
    forward: Vec<u32>,
    inverse: Vec<u32>,
}

impl TilePermutation {
    pub fn new(grid: &GridSpec, tiles: &TileSpec) -> Result<Self> {
        let block_grid = tiles.block_grid(grid)?;
        let n = tiles.block_tokens();
        let tokens = grid.token_count();
        let mut forward = vec![0u32; tokens];
        let mut inverse = vec![0u32; tokens];
        let mut idx = 0usize;
        for t in 0..grid.frames {
            for h in 0..grid.height {
                for w in 0..grid.width {
                    let block =
                        block_grid.flatten(t / tiles.tile_t, h / tiles.tile_h, w / tiles.tile_w);
                    let local = ((t % tiles.tile_t) * tiles.tile_h + h % tiles.tile_h)
                        * tiles.tile_w
                        + w % tiles.tile_w;
                    let slot = block * n + local;
                    forward[idx] = slot as u32;
                    inverse[slot] = idx as u32;
                    idx += 1;
                }
            }
        }
        Ok(TilePermutation {
            block_grid,
            block_tokens: n,
            forward,
            inverse,
        })
    }

    pub fn block_grid(&self) -> BlockGrid {
        self.block_grid
    }

    /// Tokens per block (N).
    pub fn block_tokens(&self) -> usize {
        self.block_tokens
    }

    pub fn token_count(&self) -> usize {
        self.forward.len()
    }

    /// Canonical token index -> tile-major slot.
    pub fn forward(&self) -> &[u32] {
        &self.forward
    }

    /// Tile-major slot -> canonical token index.
    pub fn inverse(&self) -> &[u32] {
        &self.inverse
    }

    /// Canonical token ids of block `flat`, ascending.
    pub fn block_token_ids(&self, flat: usize) -> &[u32] {
        let n = self.block_tokens;
        &self.inverse[flat * n..(flat + 1) * n]
    }

    /// Reorder a head-major tensor from canonical to tile-major token order.
    pub fn to_tile_major(&self, src: &[f32], heads: usize, head_dim: usize) -> Vec<f32> {
        self.permute(src, heads, head_dim, &self.forward)
    }

    /// Reorder a head-major tensor from tile-major back to canonical order.
    pub fn to_canonical(&self, src: &[f32], heads: usize, head_dim: usize) -> Vec<f32> {
        self.permute(src, heads, head_dim, &self.inverse)
    }

    fn permute(&self, src: &[f32], heads: usize, head_dim: usize, map: &[u32]) -> Vec<f32> {
        let tokens = self.forward.len();
        assert_eq!(
            src.len(),
            heads * tokens * head_dim,
            "tensor length mismatch"
        );
        let mut dst = vec![0f32; src.len()];
        for head in 0..heads {
            let base = head * tokens * head_dim;
            for (i, &slot) in map.iter().enumerate() {
                let s = base + i * head_dim;
                let d = base + slot as usize * head_dim;
                dst[d..d + head_dim].copy_from_slice(&src[s..s + head_dim]);
            }
        }
        dst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(f: usize, h: usize, w: usize) -> GridSpec {
        GridSpec::new(1, f, h, w, 1).unwrap()
    }

    #[test]
    fn rejects_zero_extents() {
        assert!(GridSpec::new(0, 1, 1, 1, 1).is_err());
        assert!(TileSpec::new(1, 0, 1).is_err());
    }

    #[test]
    fn block_split_along_t_keeps_planes_contiguous() {
        // 2x2x2 grid, tiles (1,2,2): block 0 is the t=0 plane, block 1 the
        // t=1 plane, each holding its four tokens in canonical order.
        let g = grid(2, 2, 2);
        let tiles = TileSpec::new(1, 2, 2).unwrap();
        let perm = TilePermutation::new(&g, &tiles).unwrap();
        assert_eq!(perm.block_grid().count(), 2);
        let block0: Vec<u32> = perm.block_token_ids(0).to_vec();
        let expect0: Vec<u32> = [(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1)]
            .iter()
            .map(|&(t, h, w)| g.token_index(t, h, w) as u32)
            .collect();
        assert_eq!(block0, expect0);
        let block1: Vec<u32> = perm.block_token_ids(1).to_vec();
        assert_eq!(block1, vec![4, 5, 6, 7]);
    }

    #[test]
    fn block_split_along_w_interleaves() {
        // 2x2x2 grid, tiles (2,2,1): two blocks, one per w column.
        // Enumerated by hand from the canonical layout.
        let g = grid(2, 2, 2);
        let tiles = TileSpec::new(2, 2, 1).unwrap();
        let perm = TilePermutation::new(&g, &tiles).unwrap();
        assert_eq!(perm.forward(), &[0, 4, 1, 5, 2, 6, 3, 7]);
        assert_eq!(perm.block_token_ids(0), &[0, 2, 4, 6]);
        assert_eq!(perm.block_token_ids(1), &[1, 3, 5, 7]);
    }

    #[test]
    fn unit_tiles_are_identity() {
        let g = grid(2, 3, 4);
        let perm = TilePermutation::new(&g, &TileSpec::new(1, 1, 1).unwrap()).unwrap();
        let identity: Vec<u32> = (0..g.token_count() as u32).collect();
        assert_eq!(perm.forward(), identity.as_slice());
        assert_eq!(perm.inverse(), identity.as_slice());
    }

    #[test]
    fn forward_then_inverse_is_identity() {
        let g = grid(4, 6, 2);
        let perm = TilePermutation::new(&g, &TileSpec::new(2, 3, 2).unwrap()).unwrap();
        for i in 0..g.token_count() {
            assert_eq!(perm.inverse()[perm.forward()[i] as usize] as usize, i);
        }
    }

    #[test]
    fn non_divisible_tiles_name_the_axis() {
        let g = grid(8, 16, 16);
        let err = TileSpec::new(3, 4, 4).unwrap().block_grid(&g).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("axis t"), "{msg}");
        assert!(msg.contains("frames=8"), "{msg}");
    }

    #[test]
    fn nearest_valid_grid_rounds_each_axis() {
        let g = GridSpec::new(2, 8, 15, 11, 4).unwrap();
        let tiles = TileSpec::new(3, 4, 5).unwrap();
        let fixed = tiles.nearest_valid_grid(&g);
        assert_eq!((fixed.frames, fixed.height, fixed.width), (9, 16, 10));
        assert!(tiles.block_grid(&fixed).is_ok());
    }

    #[test]
    fn block_coord_roundtrip() {
        let bg = BlockGrid { t: 3, h: 4, w: 5 };
        for flat in 0..bg.count() {
            let c = bg.unflatten(flat);
            assert_eq!(bg.flatten(c.bt, c.bh, c.bw), flat);
            assert_eq!(c.flat, flat);
        }
    }

    #[test]
    fn window_rejects_even_components() {
        assert!(WindowSpec::new(2, 1, 1).is_err());
        assert!(WindowSpec::new(1, 0, 1).is_err());
        assert!(WindowSpec::new(3, 5, 1).is_ok());
    }

    #[test]
    fn permute_tensor_roundtrip() {
        let g = GridSpec::new(2, 2, 2, 2, 3).unwrap();
        let tiles = TileSpec::new(2, 1, 2).unwrap();
        let perm = TilePermutation::new(&g, &tiles).unwrap();
        let src: Vec<f32> = (0..g.elements()).map(|i| i as f32).collect();
        let tiled = perm.to_tile_major(&src, g.heads, g.head_dim);
        let back = perm.to_canonical(&tiled, g.heads, g.head_dim);
        assert_eq!(src, back);
    }
}
