//! Quality metrics, Bjontegaard delta-rate computation, QP-ladder sweeps
//! and the 1-D pseudo-sequence anchor.

use serde::{Deserialize, Serialize};

use crate::codec::{self, CodecConfig, EncodeResult, Structure};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::view_grid::ViewGrid;

/// PSNR of one comparison. Infinite values mean a lossless match and are
/// reported as such.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PsnrReport {
    pub psnr_y: f64,
    pub psnr_u: f64,
    pub psnr_v: f64,
    /// Weighted composite `(6*Y + U + V) / 8`.
    pub psnr_yuv: f64,
}

impl PsnrReport {
    pub fn lossless(&self) -> bool {
        self.psnr_y.is_infinite() && self.psnr_u.is_infinite() && self.psnr_v.is_infinite()
    }
}

fn plane_sq_err(a: &crate::image::Plane, b: &crate::image::Plane) -> (u64, u64) {
    let sq = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    (sq, a.data.len() as u64)
}

fn psnr_from_sq(sq: u64, count: u64, bit_depth: u8) -> f64 {
    if sq == 0 {
        return f64::INFINITY;
    }
    let max = ((1u32 << bit_depth) - 1) as f64;
    let mse = sq as f64 / count as f64;
    10.0 * (max * max / mse).log10()
}

fn compose_yuv(y: f64, u: f64, v: f64) -> f64 {
    (6.0 * y + u + v) / 8.0
}

/// MSE-based PSNR between two images of identical layout.
pub fn psnr(reference: &Image, test: &Image) -> Result<PsnrReport> {
    if !reference.same_layout(test) {
        return Err(Error::Dimension(
            "images differ in dimensions, bit depth or chroma format".into(),
        ));
    }
    let mut per_plane = [0f64; 3];
    for pi in 0..3 {
        let (sq, count) = plane_sq_err(&reference.planes[pi], &test.planes[pi]);
        per_plane[pi] = psnr_from_sq(sq, count, reference.bit_depth);
    }
    Ok(PsnrReport {
        psnr_y: per_plane[0],
        psnr_u: per_plane[1],
        psnr_v: per_plane[2],
        psnr_yuv: compose_yuv(per_plane[0], per_plane[1], per_plane[2]),
    })
}

/// Pooled PSNR over all views of two grids: squared error and sample
/// counts accumulate per plane before the log.
pub fn psnr_grid(reference: &ViewGrid, test: &ViewGrid) -> Result<PsnrReport> {
    if reference.views.len() != test.views.len() {
        return Err(Error::Dimension("grids have different view counts".into()));
    }
    let mut sq = [0u64; 3];
    let mut count = [0u64; 3];
    for (a, b) in reference.views.iter().zip(&test.views) {
        if !a.same_layout(b) {
            return Err(Error::Dimension("view layouts differ".into()));
        }
        for pi in 0..3 {
            let (s, c) = plane_sq_err(&a.planes[pi], &b.planes[pi]);
            sq[pi] += s;
            count[pi] += c;
        }
    }
    let bd = reference.bit_depth();
    let y = psnr_from_sq(sq[0], count[0], bd);
    let u = psnr_from_sq(sq[1], count[1], bd);
    let v = psnr_from_sq(sq[2], count[2], bd);
    Ok(PsnrReport {
        psnr_y: y,
        psnr_u: u,
        psnr_v: v,
        psnr_yuv: compose_yuv(y, u, v),
    })
}

/// One rate-distortion sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RdPoint {
    pub qp: u8,
    /// Total stream size in bits.
    pub bitrate: u64,
    pub psnr_y: f64,
    pub psnr_yuv: f64,
}

/// Rate-distortion samples over a QP ladder, sorted by QP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RdCurve {
    pub structure: String,
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    /// `(psnr, log10 bitrate)` pairs using the luma or composite metric.
    fn samples(&self, yuv: bool) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(self.points.len());
        for p in &self.points {
            let psnr = if yuv { p.psnr_yuv } else { p.psnr_y };
            if !psnr.is_finite() {
                return Err(Error::Evaluation(
                    "lossless points cannot enter a BD-rate fit".into(),
                ));
            }
            if p.bitrate == 0 {
                return Err(Error::Evaluation("zero bitrate sample".into()));
            }
            out.push((psnr, (p.bitrate as f64).log10()));
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(out)
    }

    /// Asserts the fixture property that bitrate falls as QP rises.
    pub fn check_monotone(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if w[1].qp > w[0].qp && w[1].bitrate >= w[0].bitrate {
                return Err(Error::Evaluation(format!(
                    "bitrate did not decrease from QP {} to {}",
                    w[0].qp, w[1].qp
                )));
            }
        }
        Ok(())
    }
}

/// Curve-fitting flavor for the delta-rate computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BdMethod {
    /// Single cubic polynomial fit of log-rate over PSNR.
    #[default]
    Cubic,
    /// Piecewise cubic hermite (monotone slopes), for sensitivity checks.
    PiecewiseCubic,
}

/// Cubic least-squares fit of y(x), centered for conditioning.
struct CubicFit {
    x0: f64,
    c: [f64; 4],
}

impl CubicFit {
    fn fit(samples: &[(f64, f64)]) -> Result<CubicFit> {
        let n = samples.len();
        if n < 4 {
            return Err(Error::Evaluation(format!(
                "need at least 4 points for a cubic fit, got {n}"
            )));
        }
        let x0 = samples.iter().map(|s| s.0).sum::<f64>() / n as f64;
        // Normal equations A'A c = A'y over [1, x, x^2, x^3].
        let mut ata = [[0f64; 4]; 4];
        let mut aty = [0f64; 4];
        for &(x, y) in samples {
            let xc = x - x0;
            let pows = [1.0, xc, xc * xc, xc * xc * xc];
            for i in 0..4 {
                aty[i] += pows[i] * y;
                for j in 0..4 {
                    ata[i][j] += pows[i] * pows[j];
                }
            }
        }
        let c = solve4(ata, aty)?;
        Ok(CubicFit { x0, c })
    }

    /// Definite integral over [lo, hi].
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let anti = |x: f64| {
            let xc = x - self.x0;
            self.c[0] * xc
                + self.c[1] * xc * xc / 2.0
                + self.c[2] * xc * xc * xc / 3.0
                + self.c[3] * xc * xc * xc * xc / 4.0
        };
        anti(hi) - anti(lo)
    }

    #[cfg(test)]
    fn eval(&self, x: f64) -> f64 {
        let xc = x - self.x0;
        self.c[0] + self.c[1] * xc + self.c[2] * xc * xc + self.c[3] * xc * xc * xc
    }
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Result<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::Evaluation("degenerate rate-distortion fit".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0f64; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Monotone piecewise-cubic hermite interpolant (Fritsch-Carlson slopes).
struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ms: Vec<f64>,
}

impl Pchip {
    fn fit(samples: &[(f64, f64)]) -> Result<Pchip> {
        let n = samples.len();
        if n < 4 {
            return Err(Error::Evaluation(format!(
                "need at least 4 points for a piecewise fit, got {n}"
            )));
        }
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        if h.iter().any(|&d| d <= 0.0) {
            return Err(Error::Evaluation("duplicate PSNR samples".into()));
        }
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut ms = vec![0f64; n];
        ms[0] = delta[0];
        ms[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                ms[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                ms[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        Ok(Pchip { xs, ys, ms })
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = self.xs[..n - 1]
            .iter()
            .rposition(|&x0| x >= x0)
            .unwrap_or(0);
        let h = self.xs[i + 1] - self.xs[i];
        let t = ((x - self.xs[i]) / h).clamp(0.0, 1.0);
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ms[i] + h01 * self.ys[i + 1] + h11 * h * self.ms[i + 1]
    }

    /// Composite Simpson integration.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let steps = 1024usize;
        let h = (hi - lo) / steps as f64;
        let mut acc = self.eval(lo) + self.eval(hi);
        for k in 1..steps {
            let x = lo + k as f64 * h;
            acc += self.eval(x) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }
}

fn bd_rate_from_samples(a: &[(f64, f64)], b: &[(f64, f64)], method: BdMethod) -> Result<f64> {
    let lo = a[0].0.max(b[0].0);
    let hi = a[a.len() - 1].0.min(b[b.len() - 1].0);
    if lo >= hi {
        return Err(Error::Evaluation(format!(
            "PSNR ranges do not overlap ({lo:.3} >= {hi:.3})"
        )));
    }
    let avg_diff = match method {
        BdMethod::Cubic => {
            let fa = CubicFit::fit(a)?;
            let fb = CubicFit::fit(b)?;
            (fb.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo)
        }
        BdMethod::PiecewiseCubic => {
            let fa = Pchip::fit(a)?;
            let fb = Pchip::fit(b)?;
            (fb.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo)
        }
    };
    Ok((10f64.powf(avg_diff) - 1.0) * 100.0)
}

/// Average bitrate difference of `curve_b` against `curve_a` over their
/// common PSNR range, in percent; negative means `curve_b` is cheaper.
pub fn bd_rate(curve_a: &RdCurve, curve_b: &RdCurve, yuv: bool, method: BdMethod) -> Result<f64> {
    let a = curve_a.samples(yuv)?;
    let b = curve_b.samples(yuv)?;
    bd_rate_from_samples(&a, &b, method)
}

/// One sweep job result with its reproduction data.
#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub curve: RdCurve,
    /// Per-point coded stream sizes in bytes, by QP.
    pub stream_bytes: Vec<(u8, u64)>,
}

/// Encodes, decodes and measures the grid once per ladder QP. Points run
/// on up to `jobs` worker threads; results are ordered by QP regardless.
///
/// With `lenslet` present, quality is measured on the whole recomposed
/// raster (removed cells copied from the original, hence error-free)
/// instead of pooled over views.
pub fn sweep(
    grid: &ViewGrid,
    structure: Structure,
    ladder: &[u8],
    cfg: &CodecConfig,
    jobs: usize,
    lenslet: Option<&Image>,
) -> Result<SweepOutcome> {
    if ladder.is_empty() {
        return Err(Error::Config("QP ladder is empty".into()));
    }
    let jobs = jobs.max(1).min(ladder.len());
    let mut results: Vec<Option<Result<(RdPoint, u64)>>> =
        (0..ladder.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<(RdPoint, u64)>>>> = (0..ladder.len())
        .map(|_| std::sync::Mutex::new(None))
        .collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= ladder.len() {
                    break;
                }
                let r = sweep_point(grid, structure, ladder[i], cfg, lenslet);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    for (i, slot) in slots.into_iter().enumerate() {
        results[i] = slot.into_inner().unwrap();
    }
    let mut points = Vec::with_capacity(ladder.len());
    let mut sizes = Vec::with_capacity(ladder.len());
    for r in results {
        let (point, bytes) = r.expect("every slot filled")?;
        points.push(point);
        sizes.push((point.qp, bytes));
    }
    points.sort_by_key(|p| p.qp);
    sizes.sort_by_key(|s| s.0);
    Ok(SweepOutcome {
        curve: RdCurve {
            structure: structure.to_string(),
            points,
        },
        stream_bytes: sizes,
    })
}

fn sweep_point(
    grid: &ViewGrid,
    structure: Structure,
    qp: u8,
    cfg: &CodecConfig,
    lenslet: Option<&Image>,
) -> Result<(RdPoint, u64)> {
    let cfg = CodecConfig { qp, ..cfg.clone() };
    let enc = codec::encode_grid(grid, structure, &cfg)?;
    let dec = codec::decode_sequence(&enc.bytes)?;
    // The decoded grid must reproduce the encoder reconstruction.
    for (id, img) in &enc.recon {
        let got = dec.frames.get(id);
        if got != Some(img) {
            return Err(Error::Evaluation(format!(
                "decoder mismatch at frame {id}, QP {qp}"
            )));
        }
    }
    let report = match lenslet {
        Some(original) => {
            let recomposed = crate::view_grid::recompose(&dec.grid, original)?;
            psnr(original, &recomposed)?
        }
        None => psnr_grid(grid, &dec.grid)?,
    };
    Ok((
        RdPoint {
            qp,
            bitrate: enc.total_bits(),
            psnr_y: report.psnr_y,
            psnr_yuv: report.psnr_yuv,
        },
        enc.bytes.len() as u64,
    ))
}

/// Codes the grid as a 1-D pseudo sequence (the anchor structure) at one
/// QP, returning the stream and its rate-distortion point.
pub fn anchor_1d(grid: &ViewGrid, cfg: &CodecConfig) -> Result<(EncodeResult, RdPoint)> {
    let enc = codec::encode_grid(grid, Structure::OneD, cfg)?;
    let dec = codec::decode_sequence(&enc.bytes)?;
    let report = psnr_grid(grid, &dec.grid)?;
    let point = RdPoint {
        qp: cfg.qp,
        bitrate: enc.total_bits(),
        psnr_y: report.psnr_y,
        psnr_yuv: report.psnr_yuv,
    };
    Ok((enc, point))
}

/// A/B comparison of the 2-D structure against the 1-D anchor.
#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub curve_2d: RdCurve,
    pub curve_1d: RdCurve,
    /// BD-rate of 2-D against the anchor; negative means 2-D is cheaper.
    pub bd_rate_y: f64,
    pub bd_rate_yuv: f64,
}

pub fn compare(
    grid: &ViewGrid,
    ladder: &[u8],
    cfg: &CodecConfig,
    jobs: usize,
    lenslet: Option<&Image>,
    method: BdMethod,
) -> Result<CompareReport> {
    let two_d = sweep(grid, Structure::TwoD, ladder, cfg, jobs, lenslet)?;
    let one_d = sweep(grid, Structure::OneD, ladder, cfg, jobs, lenslet)?;
    let bd_y = bd_rate(&one_d.curve, &two_d.curve, false, method)?;
    let bd_yuv = bd_rate(&one_d.curve, &two_d.curve, true, method)?;
    Ok(CompareReport {
        curve_2d: two_d.curve,
        curve_1d: one_d.curve,
        bd_rate_y: bd_y,
        bd_rate_yuv: bd_yuv,
    })
}

fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// CSV rows in the schema `image,structure,qp,bits,psnr_y,psnr_yuv`.
pub fn curve_to_csv(image: &str, curve: &RdCurve) -> String {
    let mut out = String::from("image,structure,qp,bits,psnr_y,psnr_yuv\n");
    for p in &curve.points {
        out.push_str(&format!(
            "{image},{},{},{},{},{}\n",
            curve.structure,
            p.qp,
            p.bitrate,
            fmt_psnr(p.psnr_y),
            fmt_psnr(p.psnr_yuv),
        ));
    }
    out
}

/// Gnuplot-compatible rate-distortion data: bitrate and PSNR columns.
pub fn curve_to_plot_data(curve: &RdCurve) -> String {
    let mut out = String::from("# bits psnr_y psnr_yuv\n");
    for p in &curve.points {
        out.push_str(&format!(
            "{} {} {}\n",
            p.bitrate,
            fmt_psnr(p.psnr_y),
            fmt_psnr(p.psnr_yuv)
        ));
    }
    out
}
