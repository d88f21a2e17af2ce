//! A simplified block-based hybrid codec for pseudo-sequence light-field
//! compression.
//!
//! Frames are coded in schedule order: the first frame intra (DC
//! prediction only), the rest as inter frames with distance-ordered
//! reference lists, integer-pel motion search, predictor scaling across
//! views, an integer cosine transform with dead-zone quantization and
//! exponential-Golomb entropy coding. The decoder reproduces the encoder
//! reconstruction sample-exactly.

pub mod bitstream;
pub mod entropy;
pub mod motion;
pub mod transform;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ChromaFormat, Image, Plane};
use crate::mvscale::{
    scale_component, scale_spatial, scale_temporal, MotionVector, ScaledMv, ScalingAnchors,
};
use crate::reflists;
use crate::scheduler::{self, CodingSchedule, SequenceSchedule};
use crate::view_grid::{assign_poc, GridCell, GridGeometry, ViewCoord, ViewGrid};

use bitstream::{FramePayload, StreamHeader};
use entropy::{BitCounter, BitReader, BitSink, BitWriter};

/// `0.85 * 2^((qp-12)/3)` in 8.8 fixed point, per QP.
const LAMBDA_MODE_X256: [u64; 52] = [
    14, 17, 22, 27, 34, 43, 54, 69, 86, 109, 137, 173, 218, 274, 345, 435, 548, 691, 870, 1097,
    1382, 1741, 2193, 2763, 3482, 4387, 5527, 6963, 8773, 11053, 13926, 17546, 22107, 27853, 35092,
    44214, 55706, 70185, 88427, 111411, 140369, 176854, 222822, 280739, 353709, 445645, 561477,
    707417, 891290, 1122955, 1414834, 1782579,
];

/// Square root of the mode lambda, same fixed point.
const LAMBDA_MOTION_X256: [u64; 52] = [
    59, 66, 74, 83, 94, 105, 118, 132, 149, 167, 187, 210, 236, 265, 297, 334, 375, 421, 472, 530,
    595, 668, 749, 841, 944, 1060, 1189, 1335, 1499, 1682, 1888, 2119, 2379, 2670, 2997, 3364,
    3776, 4239, 4758, 5341, 5995, 6729, 7553, 8478, 9516, 10681, 11989, 13457, 15105, 16955, 19031,
    21362,
];

/// Which pseudo-sequence structure a stream was coded with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "1d")]
    OneD,
}

impl Structure {
    pub fn parse(s: &str) -> Result<Structure> {
        match s.to_ascii_lowercase().as_str() {
            "2d" => Ok(Structure::TwoD),
            "1d" => Ok(Structure::OneD),
            other => Err(Error::Config(format!("unknown structure {other:?}"))),
        }
    }
}

impl std::fmt::Display for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Structure::TwoD => "2d",
            Structure::OneD => "1d",
        })
    }
}

/// Serialization order of the 1-D anchor sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AnchorOrder {
    #[default]
    #[serde(rename = "serpentine")]
    Serpentine,
    #[serde(rename = "raster")]
    Raster,
}

/// Encoder configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Luma block size; chroma blocks are half this for 4:2:0.
    pub block_size: u32,
    /// Integer-pel search window radius around the predictor.
    pub search_range: u32,
    /// Intra QP; inter frames add a class- or depth-based offset.
    pub qp: u8,
    /// Reference list length.
    pub n_per_list: u32,
    /// QP offsets for anchor, row-reference, immediate and non-reference
    /// frames of the 2-D structure.
    pub class_qp_offsets: [u8; 4],
    /// GOP size of the 1-D anchor structure.
    pub gop_1d: u32,
    /// View serialization order of the 1-D anchor.
    pub anchor_order: AnchorOrder,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            block_size: 16,
            search_range: 8,
            qp: 20,
            n_per_list: 4,
            class_qp_offsets: [1, 2, 3, 4],
            gop_1d: 16,
            anchor_order: AnchorOrder::Serpentine,
        }
    }
}

impl CodecConfig {
    pub fn with_qp(qp: u8) -> Self {
        CodecConfig {
            qp,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.block_size, 8 | 16 | 32) {
            return Err(Error::Config(format!(
                "block size must be 8, 16 or 32, got {}",
                self.block_size
            )));
        }
        if self.search_range > 64 {
            return Err(Error::Config("search range above 64".into()));
        }
        if self.qp > 51 {
            return Err(Error::Config(format!("QP {} out of range", self.qp)));
        }
        if self.n_per_list == 0 || self.n_per_list > 16 {
            return Err(Error::Config("n_per_list must be in 1..=16".into()));
        }
        if self.gop_1d == 0 || !self.gop_1d.is_power_of_two() {
            return Err(Error::Config(
                "anchor GOP size must be a power of two".into(),
            ));
        }
        Ok(())
    }

    fn lambda_mode_x256(&self, qp: u8) -> u64 {
        LAMBDA_MODE_X256[qp.min(51) as usize]
    }

    fn lambda_motion_x256(&self, qp: u8) -> u64 {
        LAMBDA_MOTION_X256[qp.min(51) as usize]
    }
}

/// How motion-vector predictors are rescaled between references.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalingKind {
    /// Per-axis view-coordinate scaling of the 2-D structure.
    Spatial,
    /// Both components scaled by the display-distance ratio, the standard
    /// 1-D behavior.
    PocRatio,
}

/// One frame of the resolved coding plan.
#[derive(Debug, Clone)]
struct PlanFrame {
    id: u32,
    intra: bool,
    qp: u8,
    list0: Vec<u32>,
    list1: Vec<u32>,
    /// Frame ids kept in the buffer after this frame is coded.
    retain_after: Vec<u32>,
    coord: ViewCoord,
}

struct CodingPlan {
    scaling: ScalingKind,
    frames: Vec<PlanFrame>,
    coords: BTreeMap<u32, ViewCoord>,
}

fn plan_from_schedule(schedule: &CodingSchedule, cfg: &CodecConfig) -> Result<CodingPlan> {
    let mut coords = BTreeMap::new();
    for f in &schedule.frames {
        coords.insert(f.poc, f.coord);
    }
    let mut frames = Vec::with_capacity(schedule.order.len());
    for (p, &poc) in schedule.order.iter().enumerate() {
        let sf = schedule.frame(poc)?;
        let intra = p == 0;
        let qp = if intra {
            cfg.qp
        } else {
            let off = cfg.class_qp_offsets[sf.class as usize];
            (cfg.qp as u32 + off as u32).min(51) as u8
        };
        let retain_after = match schedule.order.get(p + 1) {
            Some(&next) => schedule.frame(next)?.rps.clone(),
            None => Vec::new(),
        };
        if !intra && sf.list0.is_empty() {
            return Err(Error::Scheduling(format!(
                "inter frame {poc} has empty reference lists"
            )));
        }
        frames.push(PlanFrame {
            id: poc,
            intra,
            qp,
            list0: sf.list0.clone(),
            list1: sf.list1.clone(),
            retain_after,
            coord: sf.coord,
        });
    }
    Ok(CodingPlan {
        scaling: ScalingKind::Spatial,
        frames,
        coords,
    })
}

/// Reference lists of the 1-D structure: forward frames are earlier in
/// display order, backward later; both sorted by display distance with a
/// short side borrowing from the other.
fn lists_1d(cur: u32, available: &[u32], n: usize) -> (Vec<u32>, Vec<u32>) {
    let mut forward: Vec<u32> = available.iter().copied().filter(|&a| a < cur).collect();
    let mut backward: Vec<u32> = available.iter().copied().filter(|&a| a > cur).collect();
    forward.sort_by_key(|&a| (cur - a, a));
    backward.sort_by_key(|&a| (a - cur, a));
    let fill = |native: &[u32], other: &[u32]| {
        let mut l: Vec<u32> = native.iter().copied().take(n).collect();
        for &p in other {
            if l.len() >= n {
                break;
            }
            if !l.contains(&p) {
                l.push(p);
            }
        }
        l
    };
    (fill(&forward, &backward), fill(&backward, &forward))
}

fn plan_from_sequence(seq: &SequenceSchedule, cfg: &CodecConfig) -> Result<CodingPlan> {
    let mut coords = BTreeMap::new();
    for id in 0..seq.len {
        coords.insert(id, ViewCoord::new(id as i32, 0));
    }
    let mut frames = Vec::with_capacity(seq.order.len());
    for (p, &id) in seq.order.iter().enumerate() {
        let intra = p == 0;
        let rps = &seq.rps[id as usize];
        let (list0, list1) = if intra {
            (Vec::new(), Vec::new())
        } else {
            if rps.is_empty() {
                return Err(Error::Scheduling(format!(
                    "inter frame {id} has no references"
                )));
            }
            lists_1d(id, rps, cfg.n_per_list as usize)
        };
        let retain_after = match seq.order.get(p + 1) {
            Some(&next) => seq.rps[next as usize].clone(),
            None => Vec::new(),
        };
        let qp = if intra {
            cfg.qp
        } else {
            (cfg.qp as u32 + seq.qp_offset(id) as u32).min(51) as u8
        };
        frames.push(PlanFrame {
            id,
            intra,
            qp,
            list0,
            list1,
            retain_after,
            coord: ViewCoord::new(id as i32, 0),
        });
    }
    Ok(CodingPlan {
        scaling: ScalingKind::PocRatio,
        frames,
        coords,
    })
}

/// Cells of the grid in 1-D anchor serialization order.
pub fn sequence_cells(geom: &GridGeometry, order: AnchorOrder) -> Vec<GridCell> {
    let mut out = Vec::with_capacity(geom.view_count() as usize);
    for r in 0..geom.rows {
        let reverse = order == AnchorOrder::Serpentine && r % 2 == 1;
        let cols: Vec<u32> = if reverse {
            (0..geom.cols).rev().collect()
        } else {
            (0..geom.cols).collect()
        };
        for c in cols {
            let cell = GridCell::new(r, c);
            if geom.contains(cell) {
                out.push(cell);
            }
        }
    }
    out
}

/// Motion data of one coded block.
#[derive(Debug, Clone, Copy)]
struct BlockMotion {
    ref_id: u32,
    mv: MotionVector,
}

/// A decoded frame retained for reference.
struct DecodedFrame {
    img: Image,
    motion: Vec<Option<BlockMotion>>,
}

/// Parsed block syntax, shared by the encoder's rate estimation, the
/// writer and the reader.
#[derive(Debug, Clone)]
struct BlockSyntax {
    intra: bool,
    inter: Option<InterSyntax>,
    /// Per-plane (zero run, level) pairs in zig-zag order.
    coeffs: [Vec<(u32, i32)>; 3],
}

#[derive(Debug, Clone, Copy)]
struct InterSyntax {
    list: u8,
    ref_idx: u32,
    mvp_count: u8,
    mvp_idx: u8,
    mvd: (i32, i32),
    /// Resolved vector, not signaled.
    mv: MotionVector,
}

fn write_block<S: BitSink>(sink: &mut S, syn: &BlockSyntax, frame_intra: bool) {
    if !frame_intra {
        sink.put_ue(if syn.intra { 1 } else { 0 });
    }
    if let Some(i) = &syn.inter {
        sink.put_ue(i.list as u64);
        sink.put_ue(i.ref_idx as u64);
        if i.mvp_count == 2 {
            sink.put_ue(i.mvp_idx as u64);
        }
        sink.put_se(i.mvd.0 as i64);
        sink.put_se(i.mvd.1 as i64);
    }
    for plane in &syn.coeffs {
        sink.put_ue(plane.len() as u64);
        for &(run, level) in plane {
            sink.put_ue(run as u64);
            sink.put_ue(level.unsigned_abs() as u64 - 1);
            sink.put_bit(u32::from(level < 0));
        }
    }
}

fn block_bits(syn: &BlockSyntax, frame_intra: bool) -> u64 {
    let mut c = BitCounter::default();
    write_block(&mut c, syn, frame_intra);
    c.bits
}

/// Converts dense zig-zag levels to (run, level) pairs.
fn levels_to_runs(levels: &[i32], zigzag: &[usize]) -> Vec<(u32, i32)> {
    let mut out = Vec::new();
    let mut run = 0u32;
    for &pos in zigzag {
        let v = levels[pos];
        if v == 0 {
            run += 1;
        } else {
            out.push((run, v));
            run = 0;
        }
    }
    out
}

/// Expands (run, level) pairs back to dense raster-order levels.
fn runs_to_levels(
    runs: &[(u32, i32)],
    zigzag: &[usize],
    n: usize,
    offset: u64,
) -> Result<Vec<i32>> {
    let mut out = vec![0i32; n * n];
    let mut pos = 0usize;
    for &(run, level) in runs {
        pos += run as usize;
        if pos >= zigzag.len() {
            return Err(Error::decode(offset, "coefficient run past block end"));
        }
        out[zigzag[pos]] = level;
        pos += 1;
    }
    Ok(out)
}

/// Per-plane block geometry for one frame layout.
struct PlaneLayout {
    /// Padded plane dimensions.
    width: usize,
    height: usize,
    /// Block size in this plane.
    n: usize,
    zigzag: Vec<usize>,
}

struct FrameLayout {
    planes: [PlaneLayout; 3],
    blocks_x: usize,
    blocks_y: usize,
    bit_depth: u8,
    chroma: ChromaFormat,
}

impl FrameLayout {
    fn new(
        width: usize,
        height: usize,
        bit_depth: u8,
        chroma: ChromaFormat,
        block_size: usize,
    ) -> Self {
        let s = chroma.subsample();
        let nc = block_size / s;
        let (cw, ch) = chroma.chroma_dims(width, height);
        let luma = PlaneLayout {
            width: width.next_multiple_of(block_size),
            height: height.next_multiple_of(block_size),
            n: block_size,
            zigzag: transform::zigzag(block_size),
        };
        let blocks_x = luma.width / block_size;
        let blocks_y = luma.height / block_size;
        // Chroma planes pad to the same block count as luma.
        let mk_chroma = || PlaneLayout {
            width: blocks_x * nc,
            height: blocks_y * nc,
            n: nc,
            zigzag: transform::zigzag(nc),
        };
        let planes = [luma, mk_chroma(), mk_chroma()];
        debug_assert!(planes[1].width >= cw && planes[1].height >= ch);
        FrameLayout {
            planes,
            blocks_x,
            blocks_y,
            bit_depth,
            chroma,
        }
    }

    fn block_index(&self, bx: usize, by: usize) -> usize {
        by * self.blocks_x + bx
    }
}

/// Pads a plane to exactly the layout dimensions with edge replication.
fn pad_to(plane: &Plane, width: usize, height: usize) -> Plane {
    if plane.width == width && plane.height == height {
        return plane.clone();
    }
    let mut out = Plane::new(width, height);
    for y in 0..height {
        let sy = y.min(plane.height - 1);
        for x in 0..width {
            let sx = x.min(plane.width - 1);
            out.set(x, y, plane.get(sx, sy));
        }
    }
    out
}

/// Shared state while coding one frame, on either side of the codec.
struct FrameCoder<'a> {
    layout: &'a FrameLayout,
    cfg: &'a CodecConfig,
    plan: &'a CodingPlan,
    frame: &'a PlanFrame,
    dpb: &'a BTreeMap<u32, DecodedFrame>,
    /// Padded original planes; encoder only.
    orig: Option<[Plane; 3]>,
    /// Padded reconstruction, built block by block.
    recon: [Plane; 3],
    motion: Vec<Option<BlockMotion>>,
}

impl<'a> FrameCoder<'a> {
    fn new(
        layout: &'a FrameLayout,
        cfg: &'a CodecConfig,
        plan: &'a CodingPlan,
        frame: &'a PlanFrame,
        dpb: &'a BTreeMap<u32, DecodedFrame>,
        orig: Option<&Image>,
    ) -> Self {
        let recon = [
            Plane::new(layout.planes[0].width, layout.planes[0].height),
            Plane::new(layout.planes[1].width, layout.planes[1].height),
            Plane::new(layout.planes[2].width, layout.planes[2].height),
        ];
        let orig = orig.map(|img| {
            [
                pad_to(
                    &img.planes[0],
                    layout.planes[0].width,
                    layout.planes[0].height,
                ),
                pad_to(
                    &img.planes[1],
                    layout.planes[1].width,
                    layout.planes[1].height,
                ),
                pad_to(
                    &img.planes[2],
                    layout.planes[2].width,
                    layout.planes[2].height,
                ),
            ]
        });
        FrameCoder {
            layout,
            cfg,
            plan,
            frame,
            dpb,
            orig,
            recon,
            motion: vec![None; layout.blocks_x * layout.blocks_y],
        }
    }

    fn max_value(&self) -> i32 {
        (1 << self.layout.bit_depth) - 1
    }

    fn ref_frame(&self, id: u32) -> Result<&'a DecodedFrame> {
        self.dpb
            .get(&id)
            .ok_or_else(|| Error::Scheduling(format!("reference {id} absent from the buffer")))
    }

    fn list(&self, which: u8) -> &[u32] {
        if which == 0 {
            &self.frame.list0
        } else {
            &self.frame.list1
        }
    }

    /// Scales a donor vector onto the current target reference.
    fn scale_donor(
        &self,
        mv: MotionVector,
        donor_ref: u32,
        colocated: Option<u32>,
        target_ref: u32,
    ) -> ScaledMv {
        let coord_of = |id: u32| self.plan.coords[&id];
        match self.plan.scaling {
            ScalingKind::Spatial => {
                let anchors = ScalingAnchors {
                    cur: self.frame.coord,
                    cur_ref: coord_of(target_ref),
                    donor_ref: coord_of(donor_ref),
                    colocated: colocated.map(coord_of),
                };
                match colocated {
                    Some(_) => scale_temporal(mv, &anchors),
                    None => scale_spatial(mv, &anchors),
                }
            }
            ScalingKind::PocRatio => {
                let num = coord_of(target_ref).x - self.frame.coord.x;
                let den = match colocated {
                    Some(c) => coord_of(donor_ref).x - coord_of(c).x,
                    None => coord_of(donor_ref).x - self.frame.coord.x,
                };
                let (x, cx) = scale_component(mv.x, num, den);
                let (y, cy) = scale_component(mv.y, num, den);
                ScaledMv {
                    mv: MotionVector::new(x, y),
                    x_copied: cx,
                    y_copied: cy,
                }
            }
        }
    }

    /// Predictor candidates for a block and target reference: left and
    /// above neighbors (rescaled when they point elsewhere), then the
    /// collocated block of the first backward reference; copies are
    /// deprioritized, duplicates removed, at most two kept, zero appended
    /// when short.
    fn predict_mv(&self, bx: usize, by: usize, target_ref: u32) -> Vec<MotionVector> {
        let mut cands: Vec<(MotionVector, bool)> = Vec::with_capacity(3);
        {
            let mut push_spatial = |m: &BlockMotion| {
                if m.ref_id == target_ref {
                    cands.push((m.mv, false));
                } else {
                    let s = self.scale_donor(m.mv, m.ref_id, None, target_ref);
                    cands.push((s.mv, s.any_copied()));
                }
            };
            if bx > 0 {
                if let Some(m) = &self.motion[self.layout.block_index(bx - 1, by)] {
                    push_spatial(m);
                }
            }
            if by > 0 {
                if let Some(m) = &self.motion[self.layout.block_index(bx, by - 1)] {
                    push_spatial(m);
                }
            }
        }
        if let Some(&col_id) = self.frame.list1.first() {
            if let Ok(col) = self.ref_frame(col_id) {
                if let Some(m) = &col.motion[self.layout.block_index(bx, by)] {
                    let s = self.scale_donor(m.mv, m.ref_id, Some(col_id), target_ref);
                    cands.push((s.mv, s.any_copied()));
                }
            }
        }
        cands.sort_by_key(|&(_, copied)| copied);
        let mut out: Vec<MotionVector> = Vec::with_capacity(2);
        for (mv, _) in cands {
            if !out.contains(&mv) {
                out.push(mv);
            }
        }
        out.truncate(2);
        if out.len() < 2 {
            out.push(MotionVector::ZERO);
            if out.len() == 2 && out[0] == out[1] {
                out.truncate(1);
            }
        }
        out
    }

    /// DC prediction from the reconstructed row above and column left of
    /// the block; mid-gray when neither exists.
    fn dc_pred(&self, pi: usize, bx: usize, by: usize) -> u16 {
        let n = self.layout.planes[pi].n;
        let plane = &self.recon[pi];
        let x0 = bx * n;
        let y0 = by * n;
        let mut sum = 0u64;
        let mut count = 0u64;
        if y0 > 0 {
            for x in x0..x0 + n {
                sum += plane.get(x, y0 - 1) as u64;
                count += 1;
            }
        }
        if x0 > 0 {
            for y in y0..y0 + n {
                sum += plane.get(x0 - 1, y) as u64;
                count += 1;
            }
        }
        match (sum + count / 2).checked_div(count) {
            Some(dc) => dc as u16,
            None => 1 << (self.layout.bit_depth - 1),
        }
    }

    /// Whole-pel displacement of a plane for a luma quarter-pel vector.
    fn plane_displacement(&self, pi: usize, mv: MotionVector) -> (i32, i32) {
        if pi == 0 {
            debug_assert!(mv.x % 4 == 0 && mv.y % 4 == 0);
            (mv.x / 4, mv.y / 4)
        } else {
            let den = 4 * self.layout.chroma.subsample() as i32;
            (
                scale_component(mv.x, 1, den).0,
                scale_component(mv.y, 1, den).0,
            )
        }
    }

    /// Prediction samples for one plane-block under the given syntax.
    fn predict_block(
        &self,
        pi: usize,
        bx: usize,
        by: usize,
        syn: &BlockSyntax,
    ) -> Result<Vec<u16>> {
        let n = self.layout.planes[pi].n;
        let mut pred = vec![0u16; n * n];
        match &syn.inter {
            None => {
                let dc = self.dc_pred(pi, bx, by);
                pred.fill(dc);
            }
            Some(i) => {
                let ref_id = *self
                    .list(i.list)
                    .get(i.ref_idx as usize)
                    .ok_or_else(|| Error::Scheduling("reference index out of range".into()))?;
                let refp = &self.ref_frame(ref_id)?.img.planes[pi];
                let (dx, dy) = self.plane_displacement(pi, i.mv);
                let x0 = (bx * n) as isize;
                let y0 = (by * n) as isize;
                for y in 0..n {
                    for x in 0..n {
                        pred[y * n + x] = refp.get_clamped(
                            x0 + x as isize + dx as isize,
                            y0 + y as isize + dy as isize,
                        );
                    }
                }
            }
        }
        Ok(pred)
    }

    /// Reconstructs all three plane-blocks of a block under `syn`.
    fn reconstruct(&self, bx: usize, by: usize, syn: &BlockSyntax) -> Result<[Vec<u16>; 3]> {
        let max = self.max_value();
        let mut out: [Vec<u16>; 3] = Default::default();
        for pi in 0..3 {
            let lay = &self.layout.planes[pi];
            let pred = self.predict_block(pi, bx, by, syn)?;
            let levels = runs_to_levels(&syn.coeffs[pi], &lay.zigzag, lay.n, 0)?;
            let res = transform::dequantize_inverse(&levels, self.frame.qp, lay.n)?;
            out[pi] = pred
                .iter()
                .zip(&res)
                .map(|(&p, &r)| (p as i32 + r).clamp(0, max) as u16)
                .collect();
        }
        Ok(out)
    }

    fn commit(&mut self, bx: usize, by: usize, syn: &BlockSyntax, recon: [Vec<u16>; 3]) {
        for pi in 0..3 {
            let n = self.layout.planes[pi].n;
            let x0 = bx * n;
            let y0 = by * n;
            for y in 0..n {
                for x in 0..n {
                    self.recon[pi].set(x0 + x, y0 + y, recon[pi][y * n + x]);
                }
            }
        }
        let idx = self.layout.block_index(bx, by);
        self.motion[idx] = syn.inter.as_ref().map(|i| BlockMotion {
            ref_id: self.list(i.list)[i.ref_idx as usize],
            mv: i.mv,
        });
    }

    /// Quantized (run, level) pairs for every plane given predictions.
    fn code_residuals(&self, bx: usize, by: usize, syn: &mut BlockSyntax) -> Result<()> {
        let orig = self.orig.as_ref().expect("encoder side");
        for pi in 0..3 {
            let lay = &self.layout.planes[pi];
            let pred = self.predict_block(pi, bx, by, syn)?;
            let n = lay.n;
            let x0 = bx * n;
            let y0 = by * n;
            let mut residual = vec![0i32; n * n];
            for y in 0..n {
                for x in 0..n {
                    residual[y * n + x] =
                        orig[pi].get(x0 + x, y0 + y) as i32 - pred[y * n + x] as i32;
                }
            }
            let levels = transform::transform_quantize(&residual, self.frame.qp, n, syn.intra)?;
            syn.coeffs[pi] = levels_to_runs(&levels, &lay.zigzag);
        }
        Ok(())
    }

    /// Distortion of a candidate reconstruction against the original.
    fn ssd(&self, bx: usize, by: usize, recon: &[Vec<u16>; 3]) -> u64 {
        let orig = self.orig.as_ref().expect("encoder side");
        let mut acc = 0u64;
        for pi in 0..3 {
            let n = self.layout.planes[pi].n;
            let x0 = bx * n;
            let y0 = by * n;
            for y in 0..n {
                for x in 0..n {
                    let d = orig[pi].get(x0 + x, y0 + y) as i64 - recon[pi][y * n + x] as i64;
                    acc += (d * d) as u64;
                }
            }
        }
        acc
    }

    /// Builds and costs the intra candidate.
    fn eval_intra(&self, bx: usize, by: usize) -> Result<(BlockSyntax, [Vec<u16>; 3], u64)> {
        let mut syn = BlockSyntax {
            intra: true,
            inter: None,
            coeffs: Default::default(),
        };
        self.code_residuals(bx, by, &mut syn)?;
        let recon = self.reconstruct(bx, by, &syn)?;
        let d = self.ssd(bx, by, &recon);
        let r = block_bits(&syn, self.frame.intra);
        let j = 256 * d + self.cfg.lambda_mode_x256(self.frame.qp) * r;
        Ok((syn, recon, j))
    }

    /// Motion search over both lists, then the full inter candidate.
    fn eval_inter(
        &self,
        bx: usize,
        by: usize,
    ) -> Result<Option<(BlockSyntax, [Vec<u16>; 3], u64)>> {
        let orig = self.orig.as_ref().expect("encoder side");
        let n = self.layout.planes[0].n;
        let (x0, y0) = (bx * n, by * n);
        let lambda_motion = self.cfg.lambda_motion_x256(self.frame.qp);
        let mut best: Option<(u8, u32, motion::RefSearchResult, Vec<MotionVector>)> = None;
        for list in 0..2u8 {
            for (ref_idx, &ref_id) in self.list(list).iter().enumerate() {
                let mvps = self.predict_mv(bx, by, ref_id);
                let refp = &self.ref_frame(ref_id)?.img.planes[0];
                let fixed_bits = entropy::ue_len(list as u64) + entropy::ue_len(ref_idx as u64);
                let r = motion::search_ref(
                    &orig[0],
                    x0,
                    y0,
                    n,
                    n,
                    refp,
                    &mvps,
                    self.cfg.search_range as i32,
                    lambda_motion,
                    fixed_bits,
                );
                if best.as_ref().is_none_or(|(_, _, b, _)| r.cost < b.cost) {
                    best = Some((list, ref_idx as u32, r, mvps));
                }
            }
        }
        let Some((list, ref_idx, sr, mvps)) = best else {
            return Ok(None);
        };
        let mvp = mvps[sr.mvp_idx as usize];
        let mut syn = BlockSyntax {
            intra: false,
            inter: Some(InterSyntax {
                list,
                ref_idx,
                mvp_count: mvps.len() as u8,
                mvp_idx: sr.mvp_idx,
                mvd: (sr.mv.x - mvp.x, sr.mv.y - mvp.y),
                mv: sr.mv,
            }),
            coeffs: Default::default(),
        };
        self.code_residuals(bx, by, &mut syn)?;
        let recon = self.reconstruct(bx, by, &syn)?;
        let d = self.ssd(bx, by, &recon);
        let r = block_bits(&syn, self.frame.intra);
        let j = 256 * d + self.cfg.lambda_mode_x256(self.frame.qp) * r;
        Ok(Some((syn, recon, j)))
    }

    /// Encodes every block of the frame.
    fn encode(&mut self, w: &mut BitWriter) -> Result<()> {
        for by in 0..self.layout.blocks_y {
            for bx in 0..self.layout.blocks_x {
                let (syn, recon) = if self.frame.intra {
                    let (syn, recon, _) = self.eval_intra(bx, by)?;
                    (syn, recon)
                } else {
                    let intra = self.eval_intra(bx, by)?;
                    match self.eval_inter(bx, by)? {
                        Some(inter) if inter.2 < intra.2 => (inter.0, inter.1),
                        _ => (intra.0, intra.1),
                    }
                };
                write_block(w, &syn, self.frame.intra);
                self.commit(bx, by, &syn, recon);
            }
        }
        Ok(())
    }

    /// Parses and reconstructs every block of the frame.
    fn decode(&mut self, r: &mut BitReader) -> Result<()> {
        for by in 0..self.layout.blocks_y {
            for bx in 0..self.layout.blocks_x {
                let syn = self.read_block(r, bx, by)?;
                let recon = self.reconstruct(bx, by, &syn)?;
                self.commit(bx, by, &syn, recon);
            }
        }
        Ok(())
    }

    fn read_block(&self, r: &mut BitReader, bx: usize, by: usize) -> Result<BlockSyntax> {
        let intra = if self.frame.intra {
            true
        } else {
            r.get_ue()? == 1
        };
        let inter = if intra {
            None
        } else {
            let list = r.get_ue()? as u8;
            if list > 1 {
                return Err(Error::decode(r.byte_offset(), "invalid list index"));
            }
            let ref_idx = r.get_ue()? as u32;
            let ref_id = *self
                .list(list)
                .get(ref_idx as usize)
                .ok_or_else(|| Error::decode(r.byte_offset(), "reference index out of range"))?;
            let mvps = self.predict_mv(bx, by, ref_id);
            let mvp_idx = if mvps.len() == 2 {
                let idx = r.get_ue()?;
                if idx > 1 {
                    return Err(Error::decode(r.byte_offset(), "invalid predictor index"));
                }
                idx as u8
            } else {
                0
            };
            let mvd_x = r.get_se()?;
            let mvd_y = r.get_se()?;
            if mvd_x.abs() > (1 << 20) || mvd_y.abs() > (1 << 20) {
                return Err(Error::decode(r.byte_offset(), "motion vector out of range"));
            }
            let mvp = mvps[mvp_idx as usize];
            Some(InterSyntax {
                list,
                ref_idx,
                mvp_count: mvps.len() as u8,
                mvp_idx,
                mvd: (mvd_x as i32, mvd_y as i32),
                mv: MotionVector::new(mvp.x + mvd_x as i32, mvp.y + mvd_y as i32),
            })
        };
        let mut coeffs: [Vec<(u32, i32)>; 3] = Default::default();
        for (pi, plane) in coeffs.iter_mut().enumerate() {
            let lay = &self.layout.planes[pi];
            let nsig = r.get_ue()? as usize;
            if nsig > lay.n * lay.n {
                return Err(Error::decode(r.byte_offset(), "too many coefficients"));
            }
            let mut total = 0usize;
            for _ in 0..nsig {
                let run = r.get_ue()? as u32;
                let mag = r.get_ue()? + 1;
                if mag > (1 << 24) {
                    return Err(Error::decode(r.byte_offset(), "coefficient out of range"));
                }
                let sign = r.get_bit()?;
                total += run as usize + 1;
                if total > lay.n * lay.n {
                    return Err(Error::decode(
                        r.byte_offset(),
                        "coefficient run past block end",
                    ));
                }
                plane.push((run, if sign == 1 { -(mag as i32) } else { mag as i32 }));
            }
        }
        Ok(BlockSyntax {
            intra,
            inter,
            coeffs,
        })
    }

    /// Final reconstruction at the original dimensions.
    fn into_frame(self, width: usize, height: usize) -> (Image, Vec<Option<BlockMotion>>) {
        let (cw, ch) = self.layout.chroma.chroma_dims(width, height);
        let img = Image {
            planes: [
                self.recon[0].cropped(width, height),
                self.recon[1].cropped(cw, ch),
                self.recon[2].cropped(cw, ch),
            ],
            bit_depth: self.layout.bit_depth,
            chroma: self.layout.chroma,
        };
        (img, self.motion)
    }
}

/// Per-frame encoding statistics.
#[derive(Debug, Clone, Serialize)]
pub struct FrameStats {
    pub id: u32,
    pub qp: u8,
    pub bits: u64,
    pub psnr_y: f64,
}

/// Encoder output: the serialized stream, the reconstruction and stats.
pub struct EncodeResult {
    pub bytes: Vec<u8>,
    /// Reconstructed frames keyed by frame id (POC or display index).
    pub recon: BTreeMap<u32, Image>,
    pub stats: Vec<FrameStats>,
}

impl EncodeResult {
    pub fn total_bits(&self) -> u64 {
        self.bytes.len() as u64 * 8
    }
}

/// Digest over a set of frames in id order, used to prove that decoder
/// output equals the encoder reconstruction.
pub fn reconstruction_sha256(frames: &BTreeMap<u32, Image>) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for (id, img) in frames {
        h.update(id.to_le_bytes());
        for plane in &img.planes {
            for v in &plane.data {
                h.update(v.to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

fn psnr_y(orig: &Image, recon: &Image) -> f64 {
    let a = &orig.planes[0];
    let b = &recon.planes[0];
    let mut sq = 0u64;
    for (x, y) in a.data.iter().zip(&b.data) {
        let d = *x as i64 - *y as i64;
        sq += (d * d) as u64;
    }
    if sq == 0 {
        return f64::INFINITY;
    }
    let max = ((1u32 << orig.bit_depth) - 1) as f64;
    let mse = sq as f64 / a.data.len() as f64;
    10.0 * (max * max / mse).log10()
}

fn frames_by_id(grid: &ViewGrid, structure: Structure, cfg: &CodecConfig) -> Result<Vec<Image>> {
    match structure {
        Structure::TwoD => Ok(grid.views.clone()),
        Structure::OneD => {
            let cells = sequence_cells(&grid.geom, cfg.anchor_order);
            let mut out = Vec::with_capacity(cells.len());
            for cell in cells {
                let poc = grid.pocmap.poc_of(cell)?;
                out.push(grid.view(poc)?.clone());
            }
            Ok(out)
        }
    }
}

fn build_plan(
    geom: &GridGeometry,
    structure: Structure,
    cfg: &CodecConfig,
) -> Result<(CodingPlan, String)> {
    match structure {
        Structure::TwoD => {
            let mut schedule = scheduler::build_schedule(geom)?;
            reflists::populate_lists(&mut schedule, cfg.n_per_list as usize)?;
            let hash = bitstream::sha256_hex(&schedule.to_canonical_json()?);
            Ok((plan_from_schedule(&schedule, cfg)?, hash))
        }
        Structure::OneD => {
            let seq = scheduler::build_sequence_schedule(geom.view_count(), cfg.gop_1d)?;
            let hash = bitstream::sha256_hex(&serde_json::to_vec(&seq)?);
            Ok((plan_from_sequence(&seq, cfg)?, hash))
        }
    }
}

/// Encodes a view grid with the given pseudo-sequence structure.
pub fn encode_grid(
    grid: &ViewGrid,
    structure: Structure,
    cfg: &CodecConfig,
) -> Result<EncodeResult> {
    cfg.validate()?;
    let (plan, schedule_hash) = build_plan(&grid.geom, structure, cfg)?;
    let frames = frames_by_id(grid, structure, cfg)?;
    let header = StreamHeader {
        structure,
        config: cfg.clone(),
        geometry: grid.geom.clone(),
        view_width: grid.view_width() as u32,
        view_height: grid.view_height() as u32,
        bit_depth: grid.bit_depth(),
        chroma: grid.chroma(),
        schedule_sha256: schedule_hash,
        recon_sha256: String::new(),
    };
    encode_with_plan(&frames, &plan, cfg, header)
}

/// Encodes a grid against an externally built full 2-D schedule. The
/// schedule's reference lists are rebuilt for the configured list length.
pub fn encode_sequence(
    grid: &ViewGrid,
    schedule: &CodingSchedule,
    cfg: &CodecConfig,
) -> Result<EncodeResult> {
    cfg.validate()?;
    if schedule.geometry != grid.geom {
        return Err(Error::Config(
            "schedule geometry does not match the grid".into(),
        ));
    }
    if schedule.quadrant_filter.is_some() {
        return Err(Error::Config(
            "cannot encode from a quadrant-filtered schedule".into(),
        ));
    }
    let mut schedule = schedule.clone();
    reflists::populate_lists(&mut schedule, cfg.n_per_list as usize)?;
    let hash = bitstream::sha256_hex(&schedule.to_canonical_json()?);
    let plan = plan_from_schedule(&schedule, cfg)?;
    let frames = frames_by_id(grid, Structure::TwoD, cfg)?;
    let header = StreamHeader {
        structure: Structure::TwoD,
        config: cfg.clone(),
        geometry: grid.geom.clone(),
        view_width: grid.view_width() as u32,
        view_height: grid.view_height() as u32,
        bit_depth: grid.bit_depth(),
        chroma: grid.chroma(),
        schedule_sha256: hash,
        recon_sha256: String::new(),
    };
    encode_with_plan(&frames, &plan, cfg, header)
}

fn encode_with_plan(
    frames: &[Image],
    plan: &CodingPlan,
    cfg: &CodecConfig,
    mut header: StreamHeader,
) -> Result<EncodeResult> {
    let layout = FrameLayout::new(
        header.view_width as usize,
        header.view_height as usize,
        header.bit_depth,
        header.chroma,
        cfg.block_size as usize,
    );
    let mut dpb: BTreeMap<u32, DecodedFrame> = BTreeMap::new();
    let mut recon_out = BTreeMap::new();
    let mut stats = Vec::with_capacity(plan.frames.len());
    let mut payloads = Vec::with_capacity(plan.frames.len());
    for pf in &plan.frames {
        let orig = frames
            .get(pf.id as usize)
            .ok_or_else(|| Error::Config(format!("frame {} missing from the grid", pf.id)))?;
        let mut coder = FrameCoder::new(&layout, cfg, plan, pf, &dpb, Some(orig));
        let mut w = BitWriter::new();
        coder.encode(&mut w)?;
        let data = w.finish();
        let (img, motion) =
            coder.into_frame(header.view_width as usize, header.view_height as usize);
        stats.push(FrameStats {
            id: pf.id,
            qp: pf.qp,
            bits: data.len() as u64 * 8,
            psnr_y: psnr_y(orig, &img),
        });
        payloads.push(FramePayload {
            id: pf.id,
            qp: pf.qp,
            data,
            offset: 0,
        });
        recon_out.insert(pf.id, img.clone());
        dpb.insert(pf.id, DecodedFrame { img, motion });
        dpb.retain(|id, _| pf.retain_after.contains(id));
    }
    header.recon_sha256 = reconstruction_sha256(&recon_out);
    Ok(EncodeResult {
        bytes: bitstream::write_container(&header, &payloads)?,
        recon: recon_out,
        stats,
    })
}

/// Decoder output.
pub struct DecodeResult {
    pub header: StreamHeader,
    /// Reconstructed views as a grid, regardless of structure.
    pub grid: ViewGrid,
    /// Reconstructed frames keyed by frame id (POC or display index).
    pub frames: BTreeMap<u32, Image>,
}

impl DecodeResult {
    /// Checks the decoded frames against the encoder reconstruction
    /// digest carried in the header.
    pub fn verify_reconstruction(&self) -> Result<()> {
        let got = reconstruction_sha256(&self.frames);
        if got == self.header.recon_sha256 {
            Ok(())
        } else {
            Err(Error::decode(
                0,
                "decoded output differs from the encoder reconstruction",
            ))
        }
    }
}

/// Decodes a serialized stream, rebuilding the schedule from the header.
pub fn decode_sequence(bytes: &[u8]) -> Result<DecodeResult> {
    let (header, payloads) = bitstream::read_container(bytes)?;
    header.config.validate()?;
    let (plan, schedule_hash) = build_plan(&header.geometry, header.structure, &header.config)?;
    if schedule_hash != header.schedule_sha256 {
        return Err(Error::decode(0, "schedule hash mismatch"));
    }
    if payloads.len() != plan.frames.len() {
        return Err(Error::decode(
            0,
            format!(
                "stream has {} frames, schedule expects {}",
                payloads.len(),
                plan.frames.len()
            ),
        ));
    }
    let layout = FrameLayout::new(
        header.view_width as usize,
        header.view_height as usize,
        header.bit_depth,
        header.chroma,
        header.config.block_size as usize,
    );
    let mut dpb: BTreeMap<u32, DecodedFrame> = BTreeMap::new();
    let mut frames_out: BTreeMap<u32, Image> = BTreeMap::new();
    for (pf, payload) in plan.frames.iter().zip(&payloads) {
        if payload.id != pf.id {
            return Err(Error::decode(
                payload.offset,
                format!(
                    "frame id {} does not match schedule id {}",
                    payload.id, pf.id
                ),
            ));
        }
        if payload.qp != pf.qp {
            return Err(Error::decode(payload.offset, "frame QP mismatch"));
        }
        let mut coder = FrameCoder::new(&layout, &header.config, &plan, pf, &dpb, None);
        let mut r = BitReader::new(&payload.data, payload.offset);
        coder.decode(&mut r)?;
        let (img, motion) =
            coder.into_frame(header.view_width as usize, header.view_height as usize);
        frames_out.insert(pf.id, img.clone());
        dpb.insert(pf.id, DecodedFrame { img, motion });
        dpb.retain(|id, _| pf.retain_after.contains(id));
    }

    // Reassemble the grid: map frame ids back to POC-indexed views.
    let pocmap = assign_poc(&header.geometry)?;
    let mut views: Vec<Option<Image>> = vec![None; pocmap.len()];
    match header.structure {
        Structure::TwoD => {
            for (id, img) in &frames_out {
                views[*id as usize] = Some(img.clone());
            }
        }
        Structure::OneD => {
            let cells = sequence_cells(&header.geometry, header.config.anchor_order);
            for (d, cell) in cells.iter().enumerate() {
                let poc = pocmap.poc_of(*cell)?;
                views[poc as usize] = frames_out.get(&(d as u32)).cloned();
            }
        }
    }
    let views: Vec<Image> = views
        .into_iter()
        .enumerate()
        .map(|(poc, v)| v.ok_or_else(|| Error::decode(0, format!("missing view for POC {poc}"))))
        .collect::<Result<_>>()?;
    let grid = ViewGrid::from_views(header.geometry.clone(), views)?;
    Ok(DecodeResult {
        header,
        grid,
        frames: frames_out,
    })
}
