//! Spatial-coordinate motion-vector scaling.
//!
//! When a neighboring or collocated block points at a different reference
//! view than the current block, its motion vector is rescaled per axis by
//! the ratio of view displacements. All arithmetic is exact integer
//! rational with round-half-away-from-zero, so results are bit-identical
//! across platforms.

use serde::{Deserialize, Serialize};

use crate::view_grid::ViewCoord;

pub const MV_MIN: i32 = -(1 << 15);
pub const MV_MAX: i32 = (1 << 15) - 1;

/// A motion vector in quarter-pel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MotionVector {
    pub x: i32,
    pub y: i32,
}

impl MotionVector {
    pub fn new(x: i32, y: i32) -> Self {
        MotionVector { x, y }
    }

    pub const ZERO: MotionVector = MotionVector { x: 0, y: 0 };
}

/// The view coordinates driving a scaling operation.
///
/// `cur` is the current block's view, `cur_ref` the reference view the
/// current block points at, `donor_ref` the reference view of the donor
/// (neighboring or collocated) block, and `colocated` the collocated view
/// itself, present only for temporal scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalingAnchors {
    pub cur: ViewCoord,
    pub cur_ref: ViewCoord,
    pub donor_ref: ViewCoord,
    pub colocated: Option<ViewCoord>,
}

/// A scaled vector plus per-axis flags marking components that were copied
/// unscaled because a displacement was zero. Predictors use the flags only
/// to deprioritize such candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaledMv {
    pub mv: MotionVector,
    pub x_copied: bool,
    pub y_copied: bool,
}

impl ScaledMv {
    pub fn any_copied(&self) -> bool {
        self.x_copied || self.y_copied
    }
}

/// Scales one component by the exact rational `num/den`, rounding half
/// away from zero and clamping to the representable range. A zero
/// numerator or denominator copies the component unscaled.
pub fn scale_component(v: i32, num: i32, den: i32) -> (i32, bool) {
    if num == 0 || den == 0 {
        return (v, true);
    }
    let p = v as i64 * num as i64;
    let q = den as i64;
    let (pa, qa) = (p.abs(), q.abs());
    let mag = (2 * pa + qa) / (2 * qa);
    let sign = if (p < 0) != (q < 0) { -1 } else { 1 };
    (
        (sign * mag).clamp(MV_MIN as i64, MV_MAX as i64) as i32,
        false,
    )
}

/// Scales a spatial neighbor's motion vector onto the current block's
/// reference: per axis, the donor component is multiplied by the ratio of
/// the current displacement to the donor displacement, both measured from
/// the current view.
pub fn scale_spatial(mv: MotionVector, anchors: &ScalingAnchors) -> ScaledMv {
    debug_assert!(anchors.colocated.is_none());
    let (x, x_copied) = scale_component(
        mv.x,
        anchors.cur_ref.x - anchors.cur.x,
        anchors.donor_ref.x - anchors.cur.x,
    );
    let (y, y_copied) = scale_component(
        mv.y,
        anchors.cur_ref.y - anchors.cur.y,
        anchors.donor_ref.y - anchors.cur.y,
    );
    ScaledMv {
        mv: MotionVector::new(x, y),
        x_copied,
        y_copied,
    }
}

/// Scales a collocated block's motion vector onto the current block's
/// reference: the donor displacement is measured from the collocated view
/// to its own reference.
pub fn scale_temporal(mv: MotionVector, anchors: &ScalingAnchors) -> ScaledMv {
    let colocated = anchors
        .colocated
        .expect("temporal scaling requires a collocated coordinate");
    let (x, x_copied) = scale_component(
        mv.x,
        anchors.cur_ref.x - anchors.cur.x,
        anchors.donor_ref.x - colocated.x,
    );
    let (y, y_copied) = scale_component(
        mv.y,
        anchors.cur_ref.y - anchors.cur.y,
        anchors.donor_ref.y - colocated.y,
    );
    ScaledMv {
        mv: MotionVector::new(x, y),
        x_copied,
        y_copied,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spatial(cur: (i32, i32), cur_ref: (i32, i32), donor_ref: (i32, i32)) -> ScalingAnchors {
        ScalingAnchors {
            cur: ViewCoord::new(cur.0, cur.1),
            cur_ref: ViewCoord::new(cur_ref.0, cur_ref.1),
            donor_ref: ViewCoord::new(donor_ref.0, donor_ref.1),
            colocated: None,
        }
    }

    #[test]
    fn spatial_halving() {
        let anchors = spatial((0, 0), (2, 1), (4, 2));
        let s = scale_spatial(MotionVector::new(8, -4), &anchors);
        assert_eq!(s.mv, MotionVector::new(4, -2));
        assert!(!s.any_copied());
    }

    #[test]
    fn same_column_copies_x() {
        // cur_ref in the same column as cur: x displacement is zero.
        let anchors = spatial((3, 0), (3, 2), (5, 4));
        let s = scale_spatial(MotionVector::new(7, 8), &anchors);
        assert_eq!(s.mv.x, 7);
        assert!(s.x_copied);
        assert_eq!(s.mv.y, 4);
        assert!(!s.y_copied);
    }

    #[test]
    fn zero_donor_displacement_copies() {
        let anchors = spatial((3, 3), (5, 5), (3, 3));
        let s = scale_spatial(MotionVector::new(-6, 9), &anchors);
        assert_eq!(s.mv, MotionVector::new(-6, 9));
        assert!(s.x_copied && s.y_copied);
    }

    #[test]
    fn temporal_fixture() {
        let anchors = ScalingAnchors {
            cur: ViewCoord::new(0, 0),
            cur_ref: ViewCoord::new(1, 2),
            donor_ref: ViewCoord::new(4, 4),
            colocated: Some(ViewCoord::new(1, 1)),
        };
        // x: 6 * 1/3 = 2; y: 6 * 2/3 = 4.
        let s = scale_temporal(MotionVector::new(6, 6), &anchors);
        assert_eq!(s.mv, MotionVector::new(2, 4));
        assert!(!s.any_copied());
    }

    #[test]
    fn temporal_degenerate_copies_x() {
        let anchors = ScalingAnchors {
            cur: ViewCoord::new(0, 0),
            cur_ref: ViewCoord::new(2, 2),
            donor_ref: ViewCoord::new(5, 4),
            colocated: Some(ViewCoord::new(5, 1)),
        };
        let s = scale_temporal(MotionVector::new(6, 6), &anchors);
        assert!(s.x_copied);
        assert_eq!(s.mv.x, 6);
        assert_eq!(s.mv.y, 4);
    }

    #[test]
    fn identity_when_displacements_match() {
        let anchors = spatial((1, -2), (4, 1), (4, 1));
        for mv in [
            MotionVector::new(13, -27),
            MotionVector::new(0, 5),
            MotionVector::new(-32768, 32767),
        ] {
            let s = scale_spatial(mv, &anchors);
            assert_eq!(s.mv, mv);
            assert!(!s.any_copied());
        }
    }

    #[test]
    fn rounding_half_away_from_zero() {
        // 3/2 rounds to 2, -3/2 rounds to -2.
        assert_eq!(scale_component(3, 1, 2), (2, false));
        assert_eq!(scale_component(-3, 1, 2), (-2, false));
        assert_eq!(scale_component(3, -1, 2), (-2, false));
        assert_eq!(scale_component(5, 1, 4), (1, false));
        assert_eq!(scale_component(5, 3, 4), (4, false));
    }

    #[test]
    fn clamps_to_range() {
        let (v, copied) = scale_component(30000, 6, 1);
        assert_eq!(v, MV_MAX);
        assert!(!copied);
        let (v, _) = scale_component(-30000, 6, 1);
        assert_eq!(v, MV_MIN);
    }

    #[test]
    fn axis_independence() {
        // Changing only y inputs leaves the x output untouched.
        let mv = MotionVector::new(9, 5);
        let a = spatial((0, 0), (2, 1), (3, 2));
        let base = scale_spatial(mv, &a);
        for dy in [-3, -1, 2, 4] {
            let b = spatial((0, dy), (2, 1 + dy), (3, 2 - dy));
            let s = scale_spatial(mv, &b);
            assert_eq!(s.mv.x, base.mv.x);
        }
    }

    #[test]
    fn sign_rule() {
        for (v, num, den) in [(8, 2, 4), (8, -2, 4), (-8, 2, 4), (-8, -2, -4), (7, 3, -5)] {
            let (out, _) = scale_component(v, num, den);
            if out != 0 {
                let expect = (v as i64).signum() * (num as i64).signum() * (den as i64).signum();
                assert_eq!(out.signum() as i64, expect, "v={v} num={num} den={den}");
            }
        }
    }
}
