//! `ssta verify`: the property suite at one configured shape.

use std::io::Write;

use ssta_core::{
    dense_attention, density, generate_fixture, masked_oracle_attention, sta_mask, topk_mask,
    FixtureDistribution, Result, SstaConfig, TilePermutation, WindowSpec,
};

use crate::config::{check_memory, BenchConfig, CommandKind};

const ORACLE_TOL: f64 = 1e-5;
const DENSE_TOL: f64 = 1e-5;
const CONVEXITY_SLACK: f64 = 1e-6;

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name,
            passed,
            detail: detail.into(),
        }
    }
}

/// Run every check and print one line per check plus a summary. Returns the
/// process exit code: 0 iff all checks passed.
pub fn run(config: &BenchConfig, corrupt_mask: bool, out: &mut impl Write) -> Result<i32> {
    check_memory(config, CommandKind::Verify)?;
    let grid = config.grid;
    let tiles = config.tiles;
    let cfg = config.ssta;
    let threads = config.threads;
    let perm = TilePermutation::new(&grid, &tiles)?;
    let block_grid = perm.block_grid();
    let blocks = block_grid.count();

    let fixture = generate_fixture(&grid, config.seed, FixtureDistribution::StandardNormal);
    let result = ssta_core::ssta_attention(&fixture, &tiles, &cfg, threads)?;

    // The mask all downstream checks reason about. The corruption hook flips
    // one bit after attention already ran, so work accounting and oracle
    // comparison must both detect the lie.
    let mut mask = result.mask.clone();
    if corrupt_mask {
        let j = blocks - 1;
        mask.set(0, 0, j, !mask.get(0, 0, j));
    }

    let mut checks: Vec<Check> = Vec::new();

    let refixture = generate_fixture(&grid, config.seed, FixtureDistribution::StandardNormal);
    checks.push(Check::new(
        "fixture_determinism",
        refixture == fixture,
        format!("seed {} regenerated bitwise", config.seed),
    ));

    let roundtrip_ok =
        (0..grid.token_count()).all(|i| perm.inverse()[perm.forward()[i] as usize] as usize == i);
    checks.push(Check::new(
        "permutation_roundtrip",
        roundtrip_ok,
        format!("{} tokens", grid.token_count()),
    ));

    let sta = sta_mask(&grid, &tiles, &cfg.window)?;
    let (rt, rh, rw) = cfg.window.radii();
    let mut sta_ok = true;
    for i in 0..blocks {
        let a = block_grid.unflatten(i);
        for j in 0..blocks {
            let b = block_grid.unflatten(j);
            let want =
                a.bt.abs_diff(b.bt) <= rt && a.bh.abs_diff(b.bh) <= rh && a.bw.abs_diff(b.bw) <= rw;
            if sta.get(0, i, j) != want {
                sta_ok = false;
            }
        }
    }
    checks.push(Check::new(
        "sta_bruteforce",
        sta_ok,
        format!("{} pairs", blocks * blocks),
    ));

    let symmetric = (0..blocks).all(|i| (0..blocks).all(|j| sta.get(0, i, j) == sta.get(0, j, i)));
    checks.push(Check::new(
        "sta_symmetric",
        symmetric,
        "mask equals its transpose",
    ));

    let selective = topk_mask(&result.scores.importance, cfg.top_k)?;
    let want_bits = cfg.top_k.min(blocks);
    let cardinality_ok =
        (0..grid.heads).all(|h| (0..blocks).all(|i| selective.row_count(h, i) == want_bits));
    checks.push(Check::new(
        "selective_cardinality",
        cardinality_ok,
        format!("min(k, B) = {want_bits} bits per row"),
    ));

    let nonempty = (0..grid.heads).all(|h| (0..blocks).all(|i| mask.row_count(h, i) >= 1));
    checks.push(Check::new(
        "combined_rows_nonempty",
        nonempty,
        "every row attends somewhere",
    ));

    match masked_oracle_attention(&fixture, &mask, &tiles) {
        Ok(oracle) => {
            let err = ssta_core::compare(&result.output, &oracle)?;
            checks.push(Check::new(
                "oracle_equivalence",
                err.max_abs <= ORACLE_TOL,
                format!("max_abs {:.3e} (tol {ORACLE_TOL:.0e})", err.max_abs),
            ));
        }
        Err(e) => checks.push(Check::new(
            "oracle_equivalence",
            false,
            format!("oracle failed: {e}"),
        )),
    }

    let degenerate_cfg = SstaConfig {
        top_k: blocks,
        window: WindowSpec::full_for(&block_grid),
        ..cfg
    };
    let degenerate = ssta_core::ssta_attention(&fixture, &tiles, &degenerate_cfg, threads)?;
    let dense = dense_attention(&fixture, threads);
    let dense_err = ssta_core::compare(&degenerate.output, &dense)?;
    checks.push(Check::new(
        "dense_degeneration",
        dense_err.max_abs <= DENSE_TOL
            && degenerate.mask.set_pairs() == (grid.heads * blocks * blocks) as u64,
        format!(
            "k=B full window: max_abs {:.3e} (tol {DENSE_TOL:.0e})",
            dense_err.max_abs
        ),
    ));

    let analytic = density(&mask, &grid, &tiles, 0)?;
    checks.push(Check::new(
        "mac_exactness",
        analytic.sparse_macs == result.macs.total_macs(),
        format!(
            "counted {} vs density*dense {} (rho {:.4})",
            result.macs.total_macs(),
            analytic.sparse_macs,
            analytic.density
        ),
    ));

    checks.push(convexity_check(&fixture, &result, &perm));

    let rerun = ssta_core::ssta_attention(&fixture, &tiles, &cfg, threads)?;
    checks.push(Check::new(
        "determinism_bitwise",
        rerun.output.data == result.output.data && rerun.mask == result.mask,
        "same seed reruns bit-for-bit",
    ));

    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        writeln!(
            out,
            "{} {:<24} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        )
        .map_err(write_err)?;
    }
    writeln!(
        out,
        "verify: {} ({}/{} checks) at {}",
        if failed == 0 { "PASS" } else { "FAIL" },
        checks.len() - failed,
        checks.len(),
        config.repro_flags(),
    )
    .map_err(write_err)?;
    Ok(if failed == 0 { 0 } else { 1 })
}

fn write_err(source: std::io::Error) -> ssta_core::Error {
    ssta_core::Error::Io {
        path: "<stdout>".into(),
        source,
    }
}

fn convexity_check(
    fixture: &ssta_core::AttentionInputs,
    result: &ssta_core::SstaResult,
    perm: &TilePermutation,
) -> Check {
    let grid = fixture.grid;
    let d = grid.head_dim;
    let n = perm.block_tokens();
    let tokens = grid.token_count();
    let blocks = perm.block_grid().count();
    let mut worst = 0.0f64;
    for head in 0..grid.heads {
        let base = head * tokens * d;
        for qb in 0..blocks {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for (kb, &set) in result.mask.row(head, qb).iter().enumerate() {
                if !set {
                    continue;
                }
                for &tok in perm.block_token_ids(kb) {
                    let at = base + tok as usize * d;
                    for x in 0..d {
                        let v = f64::from(fixture.v[at + x]);
                        lo[x] = lo[x].min(v);
                        hi[x] = hi[x].max(v);
                    }
                }
            }
            for &tok in perm.block_token_ids(qb) {
                let at = base + tok as usize * d;
                for x in 0..d {
                    let o = f64::from(result.output.data[at + x]);
                    worst = worst.max(lo[x] - o).max(o - hi[x]);
                }
            }
        }
    }
    let n_note = n; // block size recorded for context in the detail line
    Check::new(
        "convexity_bounds",
        worst <= CONVEXITY_SLACK,
        format!("worst excursion {worst:.3e} (slack {CONVEXITY_SLACK:.0e}, N={n_note})"),
    )
}
