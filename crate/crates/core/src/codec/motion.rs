//! Integer-pel motion search and motion-vector difference costing.

use crate::codec::entropy::{se_len, ue_len};
use crate::image::Plane;
use crate::mvscale::{scale_component, MotionVector};

/// Rounds a quarter-pel component to whole pels, half away from zero.
pub fn qpel_to_pel(v: i32) -> i32 {
    scale_component(v, 1, 4).0
}

/// Sum of absolute differences between a block of `cur` at `(cx, cy)` and
/// the displaced block of `refp`, with edge replication outside the
/// reference.
pub fn sad_block(
    cur: &Plane,
    cx: usize,
    cy: usize,
    bw: usize,
    bh: usize,
    refp: &Plane,
    dx: i32,
    dy: i32,
) -> u64 {
    let mut acc = 0u64;
    for y in 0..bh {
        for x in 0..bw {
            let c = cur.get(cx + x, cy + y) as i64;
            let r = refp.get_clamped(
                (cx + x) as isize + dx as isize,
                (cy + y) as isize + dy as isize,
            ) as i64;
            acc += (c - r).unsigned_abs();
        }
    }
    acc
}

/// Signaling bits of `mv` under the best predictor choice: the candidate
/// index is charged only when two candidates exist; ties keep the smaller
/// index.
pub fn mvd_bits(mv: MotionVector, mvps: &[MotionVector]) -> (u64, u8) {
    let mut best_bits = u64::MAX;
    let mut best_idx = 0u8;
    for (i, p) in mvps.iter().enumerate() {
        let mut bits = se_len((mv.x - p.x) as i64) + se_len((mv.y - p.y) as i64);
        if mvps.len() == 2 {
            bits += ue_len(i as u64);
        }
        if bits < best_bits {
            best_bits = bits;
            best_idx = i as u8;
        }
    }
    (best_bits, best_idx)
}

#[derive(Debug, Clone, Copy)]
pub struct RefSearchResult {
    /// Chosen vector in quarter-pel units (always whole pels).
    pub mv: MotionVector,
    pub mvp_idx: u8,
    pub sad: u64,
    pub cost: u64,
}

/// Full integer-pel search in a square window around the first predictor.
/// Cost is `256*SAD + lambda*(mvd bits + fixed_bits)`; ties keep the
/// earlier candidate in raster order.
pub fn search_ref(
    cur: &Plane,
    cx: usize,
    cy: usize,
    bw: usize,
    bh: usize,
    refp: &Plane,
    mvps: &[MotionVector],
    range: i32,
    lambda_motion_x256: u64,
    fixed_bits: u64,
) -> RefSearchResult {
    let center = MotionVector::new(qpel_to_pel(mvps[0].x), qpel_to_pel(mvps[0].y));
    let mut best: Option<RefSearchResult> = None;
    for dy in -range..=range {
        for dx in -range..=range {
            let pel_x = center.x + dx;
            let pel_y = center.y + dy;
            let mv = MotionVector::new(pel_x * 4, pel_y * 4);
            let sad = sad_block(cur, cx, cy, bw, bh, refp, pel_x, pel_y);
            let (bits, mvp_idx) = mvd_bits(mv, mvps);
            let cost = 256 * sad + lambda_motion_x256 * (bits + fixed_bits);
            if best.is_none_or(|b| cost < b.cost) {
                best = Some(RefSearchResult {
                    mv,
                    mvp_idx,
                    sad,
                    cost,
                });
            }
        }
    }
    best.expect("search window is never empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_from_fn(w: usize, h: usize, f: impl Fn(usize, usize) -> u16) -> Plane {
        let mut p = Plane::new(w, h);
        for y in 0..h {
            for x in 0..w {
                p.set(x, y, f(x, y));
            }
        }
        p
    }

    fn texture(x: isize, y: isize) -> u16 {
        let v = (x * 31 + y * 17) ^ ((x >> 2) * 97) ^ ((y >> 1) * 13);
        (v & 0xff) as u16
    }

    #[test]
    fn finds_exact_shift() {
        // Reference is the current frame translated by (3, -2).
        let cur = plane_from_fn(48, 48, |x, y| texture(x as isize, y as isize));
        let refp = plane_from_fn(48, 48, |x, y| texture(x as isize - 3, y as isize + 2));
        let r = search_ref(
            &cur,
            16,
            16,
            16,
            16,
            &refp,
            &[MotionVector::ZERO],
            8,
            100,
            1,
        );
        assert_eq!(r.mv, MotionVector::new(3 * 4, -2 * 4));
        assert_eq!(r.sad, 0);
    }

    #[test]
    fn range_zero_returns_rounded_predictor() {
        let cur = plane_from_fn(32, 32, |x, y| texture(x as isize, y as isize));
        let refp = plane_from_fn(32, 32, |x, y| texture(x as isize + 5, y as isize));
        let mvp = MotionVector::new(9, -6); // 2.25 and -1.5 pels
        let r = search_ref(&cur, 0, 0, 16, 16, &refp, &[mvp], 0, 100, 1);
        assert_eq!(r.mv, MotionVector::new(2 * 4, -2 * 4));
    }

    #[test]
    fn larger_range_never_costs_more() {
        let cur = plane_from_fn(64, 64, |x, y| texture(x as isize * 3, y as isize));
        for seed in 0..8isize {
            let refp = plane_from_fn(64, 64, |x, y| {
                texture(x as isize * 3 + seed, y as isize - seed / 2)
            });
            let mut prev = u64::MAX;
            for range in 0..=4 {
                let r = search_ref(
                    &cur,
                    16,
                    16,
                    16,
                    16,
                    &refp,
                    &[MotionVector::new(2, 2)],
                    range,
                    435,
                    3,
                );
                assert!(r.cost <= prev, "range {range} seed {seed}");
                prev = r.cost;
            }
        }
    }

    #[test]
    fn mvd_bits_prefers_cheaper_candidate() {
        let mv = MotionVector::new(8, 0);
        let (bits_one, idx_one) = mvd_bits(mv, &[MotionVector::new(8, 0)]);
        assert_eq!((bits_one, idx_one), (2, 0));
        let (_, idx) = mvd_bits(mv, &[MotionVector::new(-4, 4), MotionVector::new(8, 0)]);
        assert_eq!(idx, 1);
        // Identical candidates: the smaller index wins on the tie.
        let (_, idx) = mvd_bits(mv, &[MotionVector::new(8, 0), MotionVector::new(8, 0)]);
        assert_eq!(idx, 0);
    }
}
