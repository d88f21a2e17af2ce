//! Integer block transform and dead-zone quantization.
//!
//! The basis is a rounded type-II cosine transform scaled by 64*sqrt(N),
//! so a forward pass through `T . X . T'` carries a gain of 2^(12+log2 N)
//! per dimension. The quantizer step is 2^((qp-4)/6) expressed exactly as
//! a shifted 20-bit mantissa; all paths are pure integer arithmetic, so
//! encoder and decoder reconstructions agree bit for bit.

use crate::error::{Error, Result};

const T4: [i32; 16] = [
    64, 64, 64, 64, 84, 35, -35, -84, 64, -64, -64, 64, 35, -84, 84, -35,
];
const T8: [i32; 64] = [
    64, 64, 64, 64, 64, 64, 64, 64, 89, 75, 50, 18, -18, -50, -75, -89, 84, 35, -35, -84, -84, -35,
    35, 84, 75, -18, -89, -50, 50, 89, 18, -75, 64, -64, -64, 64, 64, -64, -64, 64, 50, -89, 18,
    75, -75, -18, 89, -50, 35, -84, 84, -35, -35, 84, -84, 35, 18, -50, 75, -89, 89, -75, 50, -18,
];
const T16: [i32; 256] = [
    64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 90, 87, 80, 70, 57, 43, 26, 9,
    -9, -26, -43, -57, -70, -80, -87, -90, 89, 75, 50, 18, -18, -50, -75, -89, -89, -75, -50, -18,
    18, 50, 75, 89, 87, 57, 9, -43, -80, -90, -70, -26, 26, 70, 90, 80, 43, -9, -57, -87, 84, 35,
    -35, -84, -84, -35, 35, 84, 84, 35, -35, -84, -84, -35, 35, 84, 80, 9, -70, -87, -26, 57, 90,
    43, -43, -90, -57, 26, 87, 70, -9, -80, 75, -18, -89, -50, 50, 89, 18, -75, -75, 18, 89, 50,
    -50, -89, -18, 75, 70, -43, -87, 9, 90, 26, -80, -57, 57, 80, -26, -90, -9, 87, 43, -70, 64,
    -64, -64, 64, 64, -64, -64, 64, 64, -64, -64, 64, 64, -64, -64, 64, 57, -80, -26, 90, -9, -87,
    43, 70, -70, -43, 87, 9, -90, 26, 80, -57, 50, -89, 18, 75, -75, -18, 89, -50, -50, 89, -18,
    -75, 75, 18, -89, 50, 43, -90, 57, 26, -87, 70, 9, -80, 80, -9, -70, 87, -26, -57, 90, -43, 35,
    -84, 84, -35, -35, 84, -84, 35, 35, -84, 84, -35, -35, 84, -84, 35, 26, -70, 90, -80, 43, 9,
    -57, 87, -87, 57, -9, -43, 80, -90, 70, -26, 18, -50, 75, -89, 89, -75, 50, -18, -18, 50, -75,
    89, -89, 75, -50, 18, 9, -26, 43, -57, 70, -80, 87, -90, 90, -87, 80, -70, 57, -43, 26, -9,
];
const T32: [i32; 1024] = [
    64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64, 64,
    64, 64, 64, 64, 64, 64, 64, 64, 90, 90, 88, 85, 82, 78, 73, 67, 61, 54, 47, 39, 30, 22, 13, 4,
    -4, -13, -22, -30, -39, -47, -54, -61, -67, -73, -78, -82, -85, -88, -90, -90, 90, 87, 80, 70,
    57, 43, 26, 9, -9, -26, -43, -57, -70, -80, -87, -90, -90, -87, -80, -70, -57, -43, -26, -9, 9,
    26, 43, 57, 70, 80, 87, 90, 90, 82, 67, 47, 22, -4, -30, -54, -73, -85, -90, -88, -78, -61,
    -39, -13, 13, 39, 61, 78, 88, 90, 85, 73, 54, 30, 4, -22, -47, -67, -82, -90, 89, 75, 50, 18,
    -18, -50, -75, -89, -89, -75, -50, -18, 18, 50, 75, 89, 89, 75, 50, 18, -18, -50, -75, -89,
    -89, -75, -50, -18, 18, 50, 75, 89, 88, 67, 30, -13, -54, -82, -90, -78, -47, -4, 39, 73, 90,
    85, 61, 22, -22, -61, -85, -90, -73, -39, 4, 47, 78, 90, 82, 54, 13, -30, -67, -88, 87, 57, 9,
    -43, -80, -90, -70, -26, 26, 70, 90, 80, 43, -9, -57, -87, -87, -57, -9, 43, 80, 90, 70, 26,
    -26, -70, -90, -80, -43, 9, 57, 87, 85, 47, -13, -67, -90, -73, -22, 39, 82, 88, 54, -4, -61,
    -90, -78, -30, 30, 78, 90, 61, 4, -54, -88, -82, -39, 22, 73, 90, 67, 13, -47, -85, 84, 35,
    -35, -84, -84, -35, 35, 84, 84, 35, -35, -84, -84, -35, 35, 84, 84, 35, -35, -84, -84, -35, 35,
    84, 84, 35, -35, -84, -84, -35, 35, 84, 82, 22, -54, -90, -61, 13, 78, 85, 30, -47, -90, -67,
    4, 73, 88, 39, -39, -88, -73, -4, 67, 90, 47, -30, -85, -78, -13, 61, 90, 54, -22, -82, 80, 9,
    -70, -87, -26, 57, 90, 43, -43, -90, -57, 26, 87, 70, -9, -80, -80, -9, 70, 87, 26, -57, -90,
    -43, 43, 90, 57, -26, -87, -70, 9, 80, 78, -4, -82, -73, 13, 85, 67, -22, -88, -61, 30, 90, 54,
    -39, -90, -47, 47, 90, 39, -54, -90, -30, 61, 88, 22, -67, -85, -13, 73, 82, 4, -78, 75, -18,
    -89, -50, 50, 89, 18, -75, -75, 18, 89, 50, -50, -89, -18, 75, 75, -18, -89, -50, 50, 89, 18,
    -75, -75, 18, 89, 50, -50, -89, -18, 75, 73, -30, -90, -22, 78, 67, -39, -90, -13, 82, 61, -47,
    -88, -4, 85, 54, -54, -85, 4, 88, 47, -61, -82, 13, 90, 39, -67, -78, 22, 90, 30, -73, 70, -43,
    -87, 9, 90, 26, -80, -57, 57, 80, -26, -90, -9, 87, 43, -70, -70, 43, 87, -9, -90, -26, 80, 57,
    -57, -80, 26, 90, 9, -87, -43, 70, 67, -54, -78, 39, 85, -22, -90, 4, 90, 13, -88, -30, 82, 47,
    -73, -61, 61, 73, -47, -82, 30, 88, -13, -90, -4, 90, 22, -85, -39, 78, 54, -67, 64, -64, -64,
    64, 64, -64, -64, 64, 64, -64, -64, 64, 64, -64, -64, 64, 64, -64, -64, 64, 64, -64, -64, 64,
    64, -64, -64, 64, 64, -64, -64, 64, 61, -73, -47, 82, 30, -88, -13, 90, -4, -90, 22, 85, -39,
    -78, 54, 67, -67, -54, 78, 39, -85, -22, 90, 4, -90, 13, 88, -30, -82, 47, 73, -61, 57, -80,
    -26, 90, -9, -87, 43, 70, -70, -43, 87, 9, -90, 26, 80, -57, -57, 80, 26, -90, 9, 87, -43, -70,
    70, 43, -87, -9, 90, -26, -80, 57, 54, -85, -4, 88, -47, -61, 82, 13, -90, 39, 67, -78, -22,
    90, -30, -73, 73, 30, -90, 22, 78, -67, -39, 90, -13, -82, 61, 47, -88, 4, 85, -54, 50, -89,
    18, 75, -75, -18, 89, -50, -50, 89, -18, -75, 75, 18, -89, 50, 50, -89, 18, 75, -75, -18, 89,
    -50, -50, 89, -18, -75, 75, 18, -89, 50, 47, -90, 39, 54, -90, 30, 61, -88, 22, 67, -85, 13,
    73, -82, 4, 78, -78, -4, 82, -73, -13, 85, -67, -22, 88, -61, -30, 90, -54, -39, 90, -47, 43,
    -90, 57, 26, -87, 70, 9, -80, 80, -9, -70, 87, -26, -57, 90, -43, -43, 90, -57, -26, 87, -70,
    -9, 80, -80, 9, 70, -87, 26, 57, -90, 43, 39, -88, 73, -4, -67, 90, -47, -30, 85, -78, 13, 61,
    -90, 54, 22, -82, 82, -22, -54, 90, -61, -13, 78, -85, 30, 47, -90, 67, 4, -73, 88, -39, 35,
    -84, 84, -35, -35, 84, -84, 35, 35, -84, 84, -35, -35, 84, -84, 35, 35, -84, 84, -35, -35, 84,
    -84, 35, 35, -84, 84, -35, -35, 84, -84, 35, 30, -78, 90, -61, 4, 54, -88, 82, -39, -22, 73,
    -90, 67, -13, -47, 85, -85, 47, 13, -67, 90, -73, 22, 39, -82, 88, -54, -4, 61, -90, 78, -30,
    26, -70, 90, -80, 43, 9, -57, 87, -87, 57, -9, -43, 80, -90, 70, -26, -26, 70, -90, 80, -43,
    -9, 57, -87, 87, -57, 9, 43, -80, 90, -70, 26, 22, -61, 85, -90, 73, -39, -4, 47, -78, 90, -82,
    54, -13, -30, 67, -88, 88, -67, 30, 13, -54, 82, -90, 78, -47, 4, 39, -73, 90, -85, 61, -22,
    18, -50, 75, -89, 89, -75, 50, -18, -18, 50, -75, 89, -89, 75, -50, 18, 18, -50, 75, -89, 89,
    -75, 50, -18, -18, 50, -75, 89, -89, 75, -50, 18, 13, -39, 61, -78, 88, -90, 85, -73, 54, -30,
    4, 22, -47, 67, -82, 90, -90, 82, -67, 47, -22, -4, 30, -54, 73, -85, 90, -88, 78, -61, 39,
    -13, 9, -26, 43, -57, 70, -80, 87, -90, 90, -87, 80, -70, 57, -43, 26, -9, -9, 26, -43, 57,
    -70, 80, -87, 90, -90, 87, -80, 70, -57, 43, -26, 9, 4, -13, 22, -30, 39, -47, 54, -61, 67,
    -73, 78, -82, 85, -88, 90, -90, 90, -90, 88, -85, 82, -78, 73, -67, 61, -54, 47, -39, 30, -22,
    13, -4,
];

/// Mantissa of 2^(m/6) in 20 fractional bits, for m in 0..6.
const STEP_MANTISSA: [u64; 6] = [1048576, 1176987, 1321123, 1482910, 1664511, 1868350];

/// Frozen first-column energy of each basis, checked by the impulse test.
pub const BASIS_GAIN: [(usize, i64); 4] = [(4, 16473), (8, 32843), (16, 65667), (32, 131398)];

/// Supported transform sizes.
pub fn basis(n: usize) -> Result<&'static [i32]> {
    match n {
        4 => Ok(&T4),
        8 => Ok(&T8),
        16 => Ok(&T16),
        32 => Ok(&T32),
        _ => Err(Error::Config(format!("unsupported transform size {n}"))),
    }
}

fn log2_size(n: usize) -> u32 {
    n.trailing_zeros()
}

/// Forward 2-D transform of an n x n residual block, full precision.
pub fn forward(block: &[i32], n: usize) -> Result<Vec<i64>> {
    let t = basis(n)?;
    debug_assert_eq!(block.len(), n * n);
    // tmp = T . X
    let mut tmp = vec![0i64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i64;
            for k in 0..n {
                acc += t[i * n + k] as i64 * block[k * n + j] as i64;
            }
            tmp[i * n + j] = acc;
        }
    }
    // out = tmp . T'
    let mut out = vec![0i64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i64;
            for k in 0..n {
                acc += tmp[i * n + k] * t[j * n + k] as i64;
            }
            out[i * n + j] = acc;
        }
    }
    Ok(out)
}

/// Inverse 2-D transform back to residual scale.
pub fn inverse(coeffs: &[i64], n: usize) -> Result<Vec<i32>> {
    let t = basis(n)?;
    debug_assert_eq!(coeffs.len(), n * n);
    let shift = 2 * (12 + log2_size(n));
    let round = 1i64 << (shift - 1);
    // tmp = T' . Y
    let mut tmp = vec![0i64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i64;
            for k in 0..n {
                acc += t[k * n + i] as i64 * coeffs[k * n + j];
            }
            tmp[i * n + j] = acc;
        }
    }
    let mut out = vec![0i32; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i64;
            for k in 0..n {
                acc += tmp[i * n + k] * t[k * n + j] as i64;
            }
            out[i * n + j] = ((acc + round) >> shift) as i32;
        }
    }
    Ok(out)
}

/// Exact quantizer step for a transform size: `num / 2^20` equals
/// `2^(12 + log2 n) * 2^((qp-4)/6)`.
fn step_numerator(qp: u8, n: usize) -> u64 {
    let e = qp as i32 - 4;
    let k = e.div_euclid(6);
    let m = e.rem_euclid(6) as usize;
    let a = 12 + log2_size(n) as i32 + k;
    debug_assert!(a >= 0);
    STEP_MANTISSA[m] << a
}

/// Dead-zone uniform quantization of forward-transform output. The
/// rounding offset is a third of the step for intra blocks and a sixth
/// for inter blocks.
pub fn quantize(coeffs: &[i64], qp: u8, n: usize, intra: bool) -> Vec<i32> {
    let num = step_numerator(qp, n) as i128;
    let offset = if intra { num / 3 } else { num / 6 };
    coeffs
        .iter()
        .map(|&y| {
            let mag = (y.unsigned_abs() as i128) << 20;
            let q = ((mag + offset) / num) as i64;
            (if y < 0 { -q } else { q }) as i32
        })
        .collect()
}

/// Reconstructs transform coefficients from quantized levels.
pub fn dequantize(levels: &[i32], qp: u8, n: usize) -> Vec<i64> {
    let num = step_numerator(qp, n) as i128;
    levels
        .iter()
        .map(|&q| {
            let mag = (q.unsigned_abs() as i128 * num + (1 << 19)) >> 20;
            if q < 0 {
                -(mag as i64)
            } else {
                mag as i64
            }
        })
        .collect()
}

/// Forward transform plus quantization.
pub fn transform_quantize(residual: &[i32], qp: u8, n: usize, intra: bool) -> Result<Vec<i32>> {
    Ok(quantize(&forward(residual, n)?, qp, n, intra))
}

/// Dequantization plus inverse transform.
pub fn dequantize_inverse(levels: &[i32], qp: u8, n: usize) -> Result<Vec<i32>> {
    inverse(&dequantize(levels, qp, n), n)
}

/// Diagonal zig-zag scan order of an n x n block.
pub fn zigzag(n: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(n * n);
    for d in 0..(2 * n - 1) {
        if d % 2 == 0 {
            // Up-right diagonal.
            let y0 = d.min(n - 1);
            let x0 = d - y0;
            let (mut x, mut y) = (x0 as isize, y0 as isize);
            while y >= 0 && (x as usize) < n {
                order.push(y as usize * n + x as usize);
                x += 1;
                y -= 1;
            }
        } else {
            let x0 = d.min(n - 1);
            let y0 = d - x0;
            let (mut x, mut y) = (x0 as isize, y0 as isize);
            while x >= 0 && (y as usize) < n {
                order.push(y as usize * n + x as usize);
                x -= 1;
                y += 1;
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_residual(n: usize, seed: u64, amp: i32) -> Vec<i32> {
        let mut v = seed | 1;
        (0..n * n)
            .map(|_| {
                v = v
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((v >> 33) as i32 % (2 * amp + 1)) - amp
            })
            .collect()
    }

    #[test]
    fn zero_residual_round_trip() {
        for n in [4, 8, 16, 32] {
            let zero = vec![0i32; n * n];
            let q = transform_quantize(&zero, 20, n, true).unwrap();
            assert!(q.iter().all(|&v| v == 0));
            let back = dequantize_inverse(&q, 20, n).unwrap();
            assert!(back.iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn impulse_energy_matches_frozen_gain() {
        for &(n, gain) in &BASIS_GAIN {
            let t = basis(n).unwrap();
            let computed: i64 = (0..n).map(|i| (t[i * n] as i64).pow(2)).sum();
            assert_eq!(computed, gain, "size {n}");
            // Within 1% of the ideal orthonormal gain 2^(12 + log2 n).
            let ideal = 1i64 << (12 + log2_size(n));
            assert!((computed - ideal).abs() * 100 < ideal, "size {n}");
            // Forward transform of a unit impulse at the origin carries
            // exactly that first-column energy in its first column.
            let mut block = vec![0i32; n * n];
            block[0] = 1;
            let f = forward(&block, n).unwrap();
            assert_eq!(f[0], (t[0] as i64) * (t[0] as i64));
        }
    }

    #[test]
    fn qp0_is_near_lossless() {
        for n in [8usize, 16] {
            for seed in 1..20u64 {
                let res = pseudo_residual(n, seed, 32);
                let q = transform_quantize(&res, 0, n, seed % 2 == 0).unwrap();
                let back = dequantize_inverse(&q, 0, n).unwrap();
                let max_err = res
                    .iter()
                    .zip(&back)
                    .map(|(a, b)| (a - b).abs())
                    .max()
                    .unwrap();
                assert!(max_err <= 1, "n={n} seed={seed} err={max_err}");
            }
        }
    }

    #[test]
    fn reconstruction_error_bounded_by_step() {
        // The dead-zone quantizer absorbs at most one step of error per
        // coefficient; after the inverse that stays within a couple of
        // steps in the sample domain.
        for qp in [15u8, 20, 25, 30] {
            let n = 16;
            let res = pseudo_residual(n, 7 + qp as u64, 400);
            let q = transform_quantize(&res, qp, n, false).unwrap();
            let back = dequantize_inverse(&q, qp, n).unwrap();
            let step = 2f64.powf((qp as f64 - 4.0) / 6.0);
            let max_err = res
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .max()
                .unwrap() as f64;
            assert!(
                max_err <= 2.0 * step + 1.0,
                "qp={qp} err={max_err} step={step}"
            );
        }
    }

    #[test]
    fn higher_qp_never_increases_levels() {
        let n = 16;
        let res = pseudo_residual(n, 99, 500);
        let mut prev: Option<u64> = None;
        for qp in [15u8, 20, 25, 30] {
            let q = transform_quantize(&res, qp, n, false).unwrap();
            let energy: u64 = q.iter().map(|&v| v.unsigned_abs() as u64).sum();
            if let Some(p) = prev {
                assert!(energy <= p, "qp={qp}");
            }
            prev = Some(energy);
        }
    }

    #[test]
    fn zigzag_is_permutation_and_starts_diagonally() {
        for n in [4usize, 8, 16] {
            let z = zigzag(n);
            let mut sorted = z.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..n * n).collect::<Vec<_>>());
            assert_eq!(z[0], 0);
            assert_eq!(z[1], 1); // (0,1) first on the odd diagonal
            assert_eq!(z[2], n); // then (1,0)
        }
    }

    #[test]
    fn rejects_unsupported_size() {
        assert!(basis(12).is_err());
        assert!(transform_quantize(&[0; 36], 20, 6, true).is_err());
    }
}
