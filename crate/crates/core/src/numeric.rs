//! Shared reduction primitives. Dot products accumulate in f64 over a fixed
//! four-lane split (lane = index mod 4, lanes combined pairwise), so results
//! are identical on every platform and thread count while the lanes break
//! the serial dependency chain that would otherwise pin throughput.

macro_rules! lane_dot {
    ($a:expr, $b:expr, $load:expr) => {{
        let a = $a;
        let b = $b;
        debug_assert_eq!(a.len(), b.len());
        let mut lanes = [0.0f64; 4];
        let mut chunks_a = a.chunks_exact(4);
        let mut chunks_b = b.chunks_exact(4);
        for (ca, cb) in chunks_a.by_ref().zip(chunks_b.by_ref()) {
            for i in 0..4 {
                lanes[i] += $load(ca[i]) * $load(cb[i]);
            }
        }
        for (i, (&x, &y)) in chunks_a
            .remainder()
            .iter()
            .zip(chunks_b.remainder())
            .enumerate()
        {
            lanes[i] += $load(x) * $load(y);
        }
        (lanes[0] + lanes[1]) + (lanes[2] + lanes[3])
    }};
}

#[inline]
pub(crate) fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    lane_dot!(a, b, |x: f64| x)
}

#[inline]
pub(crate) fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    lane_dot!(a, b, f64::from)
}
