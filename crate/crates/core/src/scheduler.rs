//! Coding-order generation, frame classification, reference-set
//! construction and decoded-picture-buffer simulation for the 2-D
//! hierarchical view structure, plus the 1-D hierarchical GOP schedule
//! used by the anchor.
//!
//! The 2-D structure codes the center view first, then the four quadrants
//! clockwise from top-left. Inside a quadrant the axis row and axis column
//! are coded first, then the remaining rows in hierarchical order; within
//! a row, columns follow the same hierarchical order. Axis indices count
//! outward from the center, which mirrors the scan direction in the right
//! and bottom quadrants automatically.
//!
//! Reference retention is derived from a structural reference graph: a
//! frame is kept in the buffer exactly until the last frame that can
//! reference it has been coded. The graph reproduces the HEVC chain
//! constraint (each frame's reference set is drawn from the previous
//! frame's set plus the previous frame) by construction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::view_grid::{assign_poc, GridGeometry, Poc, PocMap, ViewCoord};

/// Hierarchical visit order for one axis: 0 first, then the far end, then
/// recursive ceil-midpoints expanding the upper interval first. Length 7
/// yields `[0, 6, 3, 5, 4, 2, 1]`.
pub fn axis_order_2d(len: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(len);
    if len == 0 {
        return order;
    }
    order.push(0);
    if len == 1 {
        return order;
    }
    order.push(len - 1);
    fn rec(a: usize, b: usize, out: &mut Vec<usize>) {
        if b - a <= 1 {
            return;
        }
        let m = (a + b).div_ceil(2);
        out.push(m);
        rec(m, b, out);
        rec(a, m, out);
    }
    rec(0, len - 1, &mut order);
    order
}

/// Depth-first coding order of a 1-D hierarchical GOP: 0, then the GOP
/// end, then recursive floor-midpoints expanding the lower interval first.
/// GOP 16 yields `[0, 16, 8, 4, 2, 1, 3, 6, 5, 7, 12, 10, 9, 11, 14, 13, 15]`.
pub fn gop_order_1d(gop: u32) -> Result<Vec<u32>> {
    if gop == 0 || !gop.is_power_of_two() {
        return Err(Error::Config(format!(
            "GOP size must be a power of two, got {gop}"
        )));
    }
    let mut order = vec![0, gop];
    fn rec(a: u32, b: u32, out: &mut Vec<u32>) {
        if b - a <= 1 {
            return;
        }
        let m = (a + b) / 2;
        out.push(m);
        rec(a, m, out);
        rec(m, b, out);
    }
    rec(0, gop, &mut order);
    Ok(order)
}

/// The four coding quadrants, in coding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrant {
    #[serde(rename = "TL")]
    TopLeft,
    #[serde(rename = "TR")]
    TopRight,
    #[serde(rename = "BR")]
    BottomRight,
    #[serde(rename = "BL")]
    BottomLeft,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::TopLeft,
        Quadrant::TopRight,
        Quadrant::BottomRight,
        Quadrant::BottomLeft,
    ];

    /// Sign of the x coordinate on this quadrant's side of the grid.
    fn sign_x(self) -> i32 {
        match self {
            Quadrant::TopLeft | Quadrant::BottomLeft => 1,
            Quadrant::TopRight | Quadrant::BottomRight => -1,
        }
    }

    fn sign_y(self) -> i32 {
        match self {
            Quadrant::TopLeft | Quadrant::TopRight => 1,
            Quadrant::BottomRight | Quadrant::BottomLeft => -1,
        }
    }

    /// Whether this quadrant owns the `x = 0` half-column.
    fn owns_axis_col(self) -> bool {
        matches!(self, Quadrant::TopLeft | Quadrant::BottomLeft)
    }

    /// Whether this quadrant owns the `y = 0` half-row.
    fn owns_axis_row(self) -> bool {
        matches!(self, Quadrant::TopLeft | Quadrant::TopRight)
    }

    pub fn parse(s: &str) -> Result<Quadrant> {
        match s.to_ascii_uppercase().as_str() {
            "TL" => Ok(Quadrant::TopLeft),
            "TR" => Ok(Quadrant::TopRight),
            "BR" => Ok(Quadrant::BottomRight),
            "BL" => Ok(Quadrant::BottomLeft),
            other => Err(Error::Config(format!("unknown quadrant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Quadrant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Quadrant::TopLeft => "TL",
            Quadrant::TopRight => "TR",
            Quadrant::BottomRight => "BR",
            Quadrant::BottomLeft => "BL",
        };
        f.write_str(s)
    }
}

/// Quadrant of a view coordinate. The center belongs to no quadrant; the
/// positive x and y axes belong to the top-left, giving TL both axis
/// segments; the mirrored axes go to TR (row) and BL (column).
pub fn quadrant_of(coord: ViewCoord) -> Option<Quadrant> {
    if coord.x == 0 && coord.y == 0 {
        return None;
    }
    Some(match (coord.x >= 0, coord.y >= 0) {
        (true, true) => Quadrant::TopLeft,
        (false, true) => Quadrant::TopRight,
        (false, false) => Quadrant::BottomRight,
        (true, false) => Quadrant::BottomLeft,
    })
}

/// Per-view quadrant tags for a whole geometry, keyed by POC.
pub fn quadrant_partition(geom: &GridGeometry) -> Result<BTreeMap<Poc, Option<Quadrant>>> {
    let map = assign_poc(geom)?;
    let mut out = BTreeMap::new();
    for poc in map.pocs() {
        let coord = geom.cell_to_coord(map.cell_of(poc)?);
        out.insert(poc, quadrant_of(coord));
    }
    Ok(out)
}

/// Reference role of a frame, from most to least referenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameClass {
    /// Held in the buffer until every future frame that can use it has
    /// been coded; includes the intra center view.
    Anchor,
    /// Referenced by frames of its own row (or column) segment.
    RowReference,
    /// Referenced only by the frame coded immediately after it.
    Immediate,
    /// Never referenced.
    NonReference,
}

impl FrameClass {
    /// QP offset added to the intra QP for frames of this class.
    pub fn qp_offset(self) -> u8 {
        match self {
            FrameClass::Anchor => 1,
            FrameClass::RowReference => 2,
            FrameClass::Immediate => 3,
            FrameClass::NonReference => 4,
        }
    }
}

/// One frame of a coding schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleFrame {
    pub poc: Poc,
    pub coord: ViewCoord,
    pub quadrant: Option<Quadrant>,
    pub class: FrameClass,
    /// Decoded frames retained in the buffer when this frame is coded.
    pub rps: Vec<Poc>,
    /// Distance-ordered reference lists (filled by `reflists`).
    #[serde(default)]
    pub list0: Vec<Poc>,
    #[serde(default)]
    pub list1: Vec<Poc>,
}

/// Full coding schedule: total order plus per-frame reference sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingSchedule {
    pub geometry: GridGeometry,
    /// Quadrant restriction, if this schedule replays a single quadrant.
    pub quadrant_filter: Option<Quadrant>,
    pub order: Vec<Poc>,
    /// Frames sorted by POC; only coded POCs appear.
    pub frames: Vec<ScheduleFrame>,
}

impl CodingSchedule {
    pub fn frame(&self, poc: Poc) -> Result<&ScheduleFrame> {
        self.frames
            .binary_search_by_key(&poc, |f| f.poc)
            .map(|i| &self.frames[i])
            .map_err(|_| Error::Lookup(format!("POC {poc} not in schedule")))
    }

    fn frame_mut(&mut self, poc: Poc) -> Result<&mut ScheduleFrame> {
        self.frames
            .binary_search_by_key(&poc, |f| f.poc)
            .map(|i| &mut self.frames[i])
            .map_err(|_| Error::Lookup(format!("POC {poc} not in schedule")))
    }

    pub fn set_lists(&mut self, poc: Poc, list0: Vec<Poc>, list1: Vec<Poc>) -> Result<()> {
        let frame = self.frame_mut(poc)?;
        frame.list0 = list0;
        frame.list1 = list1;
        Ok(())
    }

    /// Canonical JSON used both for files and for the bitstream hash.
    pub fn to_canonical_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }
}

/// Interval brackets of each axis index in the hierarchical order: the two
/// already-coded endpoints of the interval the index bisects.
fn midpoint_brackets(len: usize) -> Vec<Vec<usize>> {
    let mut brackets = vec![Vec::new(); len.max(1)];
    if len >= 2 {
        brackets[len - 1] = vec![0];
        fn rec(a: usize, b: usize, out: &mut [Vec<usize>]) {
            if b - a <= 1 {
                return;
            }
            let m = (a + b).div_ceil(2);
            out[m] = vec![a, b];
            rec(m, b, out);
            rec(a, m, out);
        }
        rec(0, len - 1, &mut brackets);
    }
    brackets
}

/// The coarse (anchor-level) indices of an axis: the first up to three
/// entries of the hierarchical order, i.e. 0, the end and the midpoint.
fn coarse_set(order: &[usize]) -> Vec<usize> {
    order.iter().copied().take(3).collect()
}

/// Coarse rows bracketing `idx`: for a coarse index, the coarse indices
/// coded before it; otherwise the surrounding coarse pair.
fn coarse_brackets(idx: usize, coarse: &[usize]) -> Vec<usize> {
    match coarse.iter().position(|&c| c == idx) {
        Some(0) => Vec::new(),
        Some(k) => coarse[..k].to_vec(),
        None => {
            // coarse is [0, end] or [0, end, mid]; idx lies strictly between.
            let mut sorted = coarse.to_vec();
            sorted.sort_unstable();
            let hi = sorted.iter().position(|&c| c > idx).unwrap();
            vec![sorted[hi - 1], sorted[hi]]
        }
    }
}

struct GridContext {
    geom: GridGeometry,
    map: PocMap,
    col_axis: Vec<usize>,
    row_axis: Vec<usize>,
    col_brackets: Vec<Vec<usize>>,
    coarse_cols: Vec<usize>,
    coarse_rows: Vec<usize>,
}

impl GridContext {
    fn new(geom: &GridGeometry) -> Result<Self> {
        let map = assign_poc(geom)?;
        let center = geom.center();
        let col_axis = axis_order_2d(center.col as usize + 1);
        let row_axis = axis_order_2d(center.row as usize + 1);
        let col_brackets = midpoint_brackets(center.col as usize + 1);
        let coarse_cols = coarse_set(&col_axis);
        let coarse_rows = coarse_set(&row_axis);
        Ok(GridContext {
            geom: geom.clone(),
            map,
            col_axis,
            row_axis,
            col_brackets,
            coarse_cols,
            coarse_rows,
        })
    }

    fn poc_at(&self, x: i32, y: i32) -> Option<Poc> {
        self.geom
            .coord_to_cell(ViewCoord::new(x, y))
            .ok()
            .and_then(|cell| self.map.poc_of(cell).ok())
    }

    fn is_coarse_row(&self, r: usize) -> bool {
        self.coarse_rows.contains(&r)
    }
}

/// A frame emission with its structural reference set.
struct Emission {
    poc: Poc,
    coord: ViewCoord,
    quadrant: Option<Quadrant>,
    refs: Vec<Poc>,
}

/// Emits the coding order of one quadrant together with each frame's
/// structural references, resolved against the already-decoded set.
fn emit_quadrant(
    ctx: &GridContext,
    q: Quadrant,
    decoded: &mut BTreeSet<Poc>,
    out: &mut Vec<Emission>,
) {
    let sx = q.sign_x();
    let sy = q.sign_y();
    let mut push = |poc: Poc, coord: ViewCoord, refs: Vec<Poc>, decoded: &mut BTreeSet<Poc>| {
        decoded.insert(poc);
        out.push(Emission {
            poc,
            coord,
            quadrant: Some(q),
            refs,
        });
    };

    // Axis row: the quadrant's half of the center row, hierarchically.
    if q.owns_axis_row() {
        for &c in &ctx.col_axis[1..] {
            let coord = ViewCoord::new(sx * c as i32, 0);
            let Some(poc) = ctx.poc_at(coord.x, coord.y) else {
                continue;
            };
            let mut refs = Vec::new();
            for &b in &ctx.col_brackets[c] {
                if let Some(r) = ctx.poc_at(sx * b as i32, 0) {
                    if decoded.contains(&r) {
                        refs.push(r);
                    }
                }
            }
            push(poc, coord, refs, decoded);
        }
    }

    // Axis column: the quadrant's half of the center column.
    if q.owns_axis_col() {
        let row_brackets = midpoint_brackets(ctx.row_axis.len());
        for &r in &ctx.row_axis[1..] {
            let coord = ViewCoord::new(0, sy * r as i32);
            let Some(poc) = ctx.poc_at(coord.x, coord.y) else {
                continue;
            };
            let mut refs = Vec::new();
            for &b in &row_brackets[r] {
                if let Some(rf) = ctx.poc_at(0, sy * b as i32) {
                    if decoded.contains(&rf) {
                        refs.push(rf);
                    }
                }
            }
            push(poc, coord, refs, decoded);
        }
    }

    // Remaining rows, hierarchically, row by row.
    for &r in &ctx.row_axis[1..] {
        for &c in &ctx.col_axis[1..] {
            let coord = ViewCoord::new(sx * c as i32, sy * r as i32);
            let Some(poc) = ctx.poc_at(coord.x, coord.y) else {
                continue;
            };
            let mut refs = Vec::new();
            // Row-internal brackets. The axis-column cell of a non-coarse
            // row is referenced only inside its own column pass, so the
            // b == 0 target is taken from coarse rows only.
            for &b in &ctx.col_brackets[c] {
                if b == 0 && !ctx.is_coarse_row(r) {
                    continue;
                }
                if let Some(rf) = ctx.poc_at(sx * b as i32, sy * r as i32) {
                    if decoded.contains(&rf) && !refs.contains(&rf) {
                        refs.push(rf);
                    }
                }
            }
            // Anchor support: the anchors of the coarse rows bracketing
            // this row, on this quadrant's side. Bracket row 0 resolves to
            // the center row; its coarse-column frames may live in another
            // quadrant and carry across quadrant boundaries.
            for &br in &coarse_brackets(r, &ctx.coarse_rows) {
                for &cc in &ctx.coarse_cols {
                    if let Some(rf) = ctx.poc_at(sx * cc as i32, sy * br as i32) {
                        if decoded.contains(&rf) && !refs.contains(&rf) {
                            refs.push(rf);
                        }
                    }
                }
            }
            push(poc, coord, refs, decoded);
        }
    }
}

/// Builds the complete 2-D hierarchical schedule for a geometry.
pub fn build_schedule(geom: &GridGeometry) -> Result<CodingSchedule> {
    build_schedule_filtered(geom, None)
}

/// Builds the schedule restricted to the center view plus one quadrant,
/// used for per-quadrant buffer analysis.
pub fn build_schedule_filtered(
    geom: &GridGeometry,
    filter: Option<Quadrant>,
) -> Result<CodingSchedule> {
    let ctx = GridContext::new(geom)?;
    let mut decoded = BTreeSet::new();
    let mut emissions = Vec::with_capacity(ctx.map.len());

    decoded.insert(0);
    emissions.push(Emission {
        poc: 0,
        coord: ViewCoord::new(0, 0),
        quadrant: None,
        refs: Vec::new(),
    });
    let quadrants: &[Quadrant] = match filter {
        Some(q) => std::slice::from_ref(
            Quadrant::ALL
                .iter()
                .find(|&&x| x == q)
                .expect("quadrant in ALL"),
        ),
        None => &Quadrant::ALL,
    };
    for &q in quadrants {
        emit_quadrant(&ctx, q, &mut decoded, &mut emissions);
    }
    if filter.is_none() && emissions.len() != ctx.map.len() {
        return Err(Error::Scheduling(format!(
            "coding order covers {} of {} views",
            emissions.len(),
            ctx.map.len()
        )));
    }

    schedule_from_emissions(&ctx, filter, emissions)
}

fn schedule_from_emissions(
    ctx: &GridContext,
    filter: Option<Quadrant>,
    emissions: Vec<Emission>,
) -> Result<CodingSchedule> {
    let n = emissions.len();
    let mut pos_of = BTreeMap::new();
    for (p, e) in emissions.iter().enumerate() {
        if pos_of.insert(e.poc, p).is_some() {
            return Err(Error::Scheduling(format!(
                "POC {} emitted more than once",
                e.poc
            )));
        }
        for &r in &e.refs {
            let rp = pos_of.get(&r).copied().ok_or_else(|| {
                Error::Scheduling(format!("POC {} references undecoded {r}", e.poc))
            })?;
            debug_assert!(rp < p);
        }
    }

    // Last coding position that references each frame.
    let mut last_use: BTreeMap<Poc, usize> = BTreeMap::new();
    let mut referencers: BTreeMap<Poc, Vec<usize>> = BTreeMap::new();
    for (p, e) in emissions.iter().enumerate() {
        for &r in &e.refs {
            let lu = last_use.entry(r).or_insert(0);
            *lu = (*lu).max(p);
            referencers.entry(r).or_default().push(p);
        }
    }

    // The retained set when coding position p: decoded frames still
    // referenced at or after p.
    let mut frames: Vec<ScheduleFrame> = Vec::with_capacity(n);
    let mut rps_by_pos: Vec<Vec<Poc>> = Vec::with_capacity(n);
    for (p, e) in emissions.iter().enumerate() {
        let rps: Vec<Poc> = emissions[..p]
            .iter()
            .map(|d| d.poc)
            .filter(|d| last_use.get(d).is_some_and(|&lu| lu >= p))
            .collect();
        for &r in &e.refs {
            if !rps.contains(&r) {
                return Err(Error::Scheduling(format!(
                    "POC {} needs {r} which is not retained",
                    e.poc
                )));
            }
        }
        rps_by_pos.push(rps);
    }

    // Chain constraint between consecutive frames.
    for p in 1..n {
        let prev_poc = emissions[p - 1].poc;
        for r in &rps_by_pos[p] {
            if *r != prev_poc && !rps_by_pos[p - 1].contains(r) {
                return Err(Error::Scheduling(format!(
                    "chain constraint violated at position {p}: {r} not in the previous set"
                )));
            }
        }
    }

    for (p, e) in emissions.iter().enumerate() {
        let class = classify_emission(ctx, e, p, referencers.get(&e.poc));
        let mut rps = rps_by_pos[p].clone();
        rps.sort_unstable();
        frames.push(ScheduleFrame {
            poc: e.poc,
            coord: e.coord,
            quadrant: e.quadrant,
            class,
            rps,
            list0: Vec::new(),
            list1: Vec::new(),
        });
    }
    frames.sort_by_key(|f| f.poc);

    Ok(CodingSchedule {
        geometry: ctx.geom.clone(),
        quadrant_filter: filter,
        order: emissions.iter().map(|e| e.poc).collect(),
        frames,
    })
}

fn classify_emission(
    ctx: &GridContext,
    e: &Emission,
    pos: usize,
    referencers: Option<&Vec<usize>>,
) -> FrameClass {
    let c = e.coord.x.unsigned_abs() as usize;
    let r = e.coord.y.unsigned_abs() as usize;
    let coarse_col = ctx.coarse_cols.contains(&c);
    let coarse_row = ctx.coarse_rows.contains(&r);
    if e.quadrant.is_none() || (coarse_col && coarse_row) {
        return FrameClass::Anchor;
    }
    if coarse_col {
        return FrameClass::RowReference;
    }
    match referencers {
        None => FrameClass::NonReference,
        Some(uses) if uses.iter().all(|&u| u == pos + 1) => FrameClass::Immediate,
        // Multi-use interior frames only occur on axes longer than seven;
        // they behave like row references.
        Some(_) => FrameClass::RowReference,
    }
}

/// Per-view frame classes keyed by POC.
pub fn classify_frames(geom: &GridGeometry) -> Result<BTreeMap<Poc, FrameClass>> {
    let schedule = build_schedule(geom)?;
    Ok(schedule.frames.iter().map(|f| (f.poc, f.class)).collect())
}

/// Convenience accessor for the full coding order.
pub fn coding_order(geom: &GridGeometry) -> Result<Vec<Poc>> {
    Ok(build_schedule(geom)?.order)
}

/// Buffer contents at one coding step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpbStep {
    pub poc: Poc,
    pub occupancy: usize,
    /// Decoded frames held while this frame is coded.
    pub members: Vec<Poc>,
}

/// Reference-buffer occupancy over a whole schedule replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpbTimeline {
    pub steps: Vec<DpbStep>,
    pub peak: usize,
}

/// Replays a schedule, inserting each decoded reference frame and evicting
/// frames once no future reference set contains them.
pub fn simulate_dpb(schedule: &CodingSchedule) -> Result<DpbTimeline> {
    let n = schedule.order.len();
    let mut last_needed: BTreeMap<Poc, usize> = BTreeMap::new();
    for (p, &poc) in schedule.order.iter().enumerate() {
        for &m in &schedule.frame(poc)?.rps {
            let lu = last_needed.entry(m).or_insert(0);
            *lu = (*lu).max(p);
        }
    }

    let mut buffer: BTreeSet<Poc> = BTreeSet::new();
    let mut steps = Vec::with_capacity(n);
    let mut peak = 0;
    for (p, &poc) in schedule.order.iter().enumerate() {
        let frame = schedule.frame(poc)?;
        let expected: BTreeSet<Poc> = frame.rps.iter().copied().collect();
        if buffer != expected {
            return Err(Error::Simulation(format!(
                "buffer {:?} does not match the reference set {:?} of POC {poc}",
                buffer, expected
            )));
        }
        peak = peak.max(buffer.len());
        steps.push(DpbStep {
            poc,
            occupancy: buffer.len(),
            members: buffer.iter().copied().collect(),
        });
        // Insert the decoded frame if any future frame retains it, then
        // evict everything whose last use was this step.
        if last_needed.get(&poc).is_some_and(|&lu| lu > p) {
            buffer.insert(poc);
        }
        let expired: Vec<Poc> = buffer
            .iter()
            .copied()
            .filter(|m| last_needed.get(m).is_none_or(|&lu| lu <= p))
            .collect();
        for m in expired {
            buffer.remove(&m);
        }
    }
    if !buffer.is_empty() {
        return Err(Error::Simulation(format!(
            "frames {buffer:?} never evicted"
        )));
    }
    Ok(DpbTimeline { steps, peak })
}

/// Schedule of a linear (pseudo-)sequence coded with hierarchical GOPs,
/// used by the 1-D anchor. Frame ids are display positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSchedule {
    pub len: u32,
    pub gop: u32,
    pub order: Vec<u32>,
    /// Retained decoded frames per coded frame, indexed by display id.
    pub rps: Vec<Vec<u32>>,
    /// Hierarchy depth per frame: 0 for the intra frame, 1 for GOP
    /// anchors, +1 per bisection level. Drives the QP ladder.
    pub depth: Vec<u8>,
}

/// Builds the 1-D hierarchical schedule for `len` frames with the given
/// GOP size. A trailing partial GOP is bisected over its actual extent.
pub fn build_sequence_schedule(len: u32, gop: u32) -> Result<SequenceSchedule> {
    if gop == 0 || !gop.is_power_of_two() {
        return Err(Error::Config(format!(
            "GOP size must be a power of two, got {gop}"
        )));
    }
    if len == 0 {
        return Err(Error::Config(
            "sequence must have at least one frame".into(),
        ));
    }
    let n = len as usize;
    let mut order = Vec::with_capacity(n);
    let mut refs: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut depth = vec![0u8; n];
    order.push(0);

    fn rec(a: u32, b: u32, d: u8, order: &mut Vec<u32>, refs: &mut [Vec<u32>], depth: &mut [u8]) {
        if b - a <= 1 {
            return;
        }
        let m = (a + b) / 2;
        order.push(m);
        refs[m as usize] = vec![a, b];
        depth[m as usize] = d;
        rec(a, m, d + 1, order, refs, depth);
        rec(m, b, d + 1, order, refs, depth);
    }

    let mut a = 0u32;
    while a + 1 < len {
        let b = (a + gop).min(len - 1);
        order.push(b);
        refs[b as usize] = vec![a];
        depth[b as usize] = 1;
        rec(a, b, 2, &mut order, &mut refs, &mut depth);
        a = b;
    }

    // Retention by last structural use, as in the 2-D schedule.
    let mut pos = vec![0usize; n];
    for (p, &f) in order.iter().enumerate() {
        pos[f as usize] = p;
    }
    let mut last_use: BTreeMap<u32, usize> = BTreeMap::new();
    for &f in &order {
        for &r in &refs[f as usize] {
            let lu = last_use.entry(r).or_insert(0);
            *lu = (*lu).max(pos[f as usize]);
        }
    }
    let mut rps = vec![Vec::new(); n];
    for (p, &f) in order.iter().enumerate() {
        rps[f as usize] = order[..p]
            .iter()
            .copied()
            .filter(|d| last_use.get(d).is_some_and(|&lu| lu >= p))
            .collect();
        rps[f as usize].sort_unstable();
    }
    Ok(SequenceSchedule {
        len,
        gop,
        order,
        rps,
        depth,
    })
}

impl SequenceSchedule {
    /// Peak buffer occupancy of the replay.
    pub fn dpb_peak(&self) -> usize {
        self.order
            .iter()
            .map(|&f| self.rps[f as usize].len())
            .max()
            .unwrap_or(0)
    }

    pub fn qp_offset(&self, frame: u32) -> u8 {
        let d = self.depth[frame as usize];
        d.min(5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn axis_order_fixtures() {
        assert_eq!(axis_order_2d(7), vec![0, 6, 3, 5, 4, 2, 1]);
        assert_eq!(axis_order_2d(1), vec![0]);
        assert_eq!(axis_order_2d(2), vec![0, 1]);
        assert_eq!(axis_order_2d(5), vec![0, 4, 2, 3, 1]);
    }

    #[test]
    fn gop_order_fixtures() {
        assert_eq!(
            gop_order_1d(16).unwrap(),
            vec![0, 16, 8, 4, 2, 1, 3, 6, 5, 7, 12, 10, 9, 11, 14, 13, 15]
        );
        assert_eq!(gop_order_1d(2).unwrap(), vec![0, 2, 1]);
        assert_eq!(gop_order_1d(8).unwrap(), vec![0, 8, 4, 2, 1, 3, 6, 5, 7]);
        assert!(gop_order_1d(12).is_err());
        assert!(gop_order_1d(0).is_err());
    }

    proptest! {
        #[test]
        fn axis_order_is_hierarchical_permutation(len in 1usize..40) {
            let order = axis_order_2d(len);
            let mut sorted = order.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..len).collect::<Vec<_>>());
            // Every midpoint's brackets already emitted.
            let brackets = midpoint_brackets(len);
            let mut seen = std::collections::BTreeSet::new();
            for &i in &order {
                for &b in &brackets[i] {
                    prop_assert!(seen.contains(&b), "index {} before bracket {}", i, b);
                }
                seen.insert(i);
            }
        }

        #[test]
        fn gop_order_is_hierarchical_permutation(pow in 0u32..7) {
            let gop = 1u32 << pow;
            let order = gop_order_1d(gop).unwrap();
            let mut sorted = order.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..=gop).collect::<Vec<_>>());
            let mut seen = std::collections::BTreeSet::new();
            for &i in &order {
                if i != 0 && i != gop {
                    // Its bisection interval endpoints must precede it.
                    let lower = seen.iter().copied().filter(|&s| s < i).max();
                    let upper = seen.iter().copied().filter(|&s| s > i).min();
                    prop_assert!(lower.is_some() && upper.is_some());
                }
                seen.insert(i);
            }
        }
    }

    #[test]
    fn quadrant_fixtures() {
        assert_eq!(quadrant_of(ViewCoord::new(0, 0)), None);
        assert_eq!(quadrant_of(ViewCoord::new(3, 2)), Some(Quadrant::TopLeft));
        assert_eq!(quadrant_of(ViewCoord::new(-1, 4)), Some(Quadrant::TopRight));
        assert_eq!(
            quadrant_of(ViewCoord::new(-2, -1)),
            Some(Quadrant::BottomRight)
        );
        assert_eq!(
            quadrant_of(ViewCoord::new(5, -3)),
            Some(Quadrant::BottomLeft)
        );
    }

    #[test]
    fn quadrant_sizes_default_geometry() {
        // Independent enumeration over signs; each removed corner costs one.
        let geom = GridGeometry::default_lf();
        let tags = quadrant_partition(&geom).unwrap();
        let count = |q: Quadrant| tags.values().filter(|&&t| t == Some(q)).count();
        let mut oracle = BTreeMap::new();
        for cell in geom.cells() {
            let c = geom.cell_to_coord(cell);
            if let Some(q) = quadrant_of(c) {
                *oracle.entry(format!("{q}")).or_insert(0usize) += 1;
            }
        }
        assert_eq!(count(Quadrant::TopLeft), oracle["TL"]);
        assert_eq!(
            (
                count(Quadrant::TopLeft),
                count(Quadrant::TopRight),
                count(Quadrant::BottomRight),
                count(Quadrant::BottomLeft),
            ),
            (47, 41, 35, 41)
        );
        assert_eq!(47 + 41 + 35 + 41 + 1, 165);
    }

    #[test]
    fn schedule_covers_all_views_once() {
        let geom = GridGeometry::default_lf();
        let schedule = build_schedule(&geom).unwrap();
        assert_eq!(schedule.order.len(), 165);
        assert_eq!(schedule.order[0], 0);
        let mut sorted = schedule.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..165).collect::<Vec<_>>());
    }

    #[test]
    fn top_left_axis_passes_precede_inner_rows() {
        // The whole axis row and axis column of TL are coded before any
        // frame of the far row (axis index 6 away from the center).
        let geom = GridGeometry::default_lf();
        let schedule = build_schedule(&geom).unwrap();
        let pos: BTreeMap<Poc, usize> = schedule
            .order
            .iter()
            .enumerate()
            .map(|(p, &poc)| (poc, p))
            .collect();
        // Axis row (y = 0, x > 0): POCs 77..=82; axis column (x = 0, y > 0):
        // POCs 6, 18, 31, 44, 57, 70. Far row frames include POC 3.
        for axis_poc in [77, 78, 79, 80, 81, 82, 6, 18, 31, 44, 57, 70] {
            assert!(pos[&axis_poc] < pos[&3], "POC {axis_poc} after POC 3");
        }
    }

    #[test]
    fn three_by_three_tl_before_tr() {
        let geom = GridGeometry::full(3, 3).unwrap();
        let schedule = build_schedule(&geom).unwrap();
        assert_eq!(schedule.order[0], 0);
        let pos: BTreeMap<Poc, usize> = schedule
            .order
            .iter()
            .enumerate()
            .map(|(p, &poc)| (poc, p))
            .collect();
        // TL views: (1,1)->POC 1, (0,1)->POC 2, (1,0)->POC 4. TR: 3, 5.
        for tl in [1, 2, 4] {
            for tr in [3, 5] {
                assert!(pos[&tl] < pos[&tr]);
            }
        }
    }

    #[test]
    fn row5_coding_and_reference_fixture() {
        // Within the top-left quadrant's row at axis index 5, the coding
        // order is 12, 15, 13, 14, 16, 17 and frame 13 may reference both
        // 12 and 15.
        let geom = GridGeometry::default_lf();
        let schedule = build_schedule(&geom).unwrap();
        let row: Vec<Poc> = schedule
            .order
            .iter()
            .copied()
            .filter(|&p| (12..=17).contains(&p))
            .collect();
        assert_eq!(row, vec![12, 15, 13, 14, 16, 17]);
        let f13 = schedule.frame(13).unwrap();
        assert!(f13.rps.contains(&12));
        assert!(f13.rps.contains(&15));
        let f14 = schedule.frame(14).unwrap();
        assert!(f14.rps.contains(&13));
    }

    #[test]
    fn frame_14_available_set_matches_fixture() {
        let geom = GridGeometry::default_lf();
        let schedule = build_schedule(&geom).unwrap();
        let mut expected = vec![13, 6, 3, 15, 38, 41, 44, 77, 80, 0];
        expected.sort_unstable();
        assert_eq!(schedule.frame(14).unwrap().rps, expected);
    }

    #[test]
    fn frame_classes_fixture() {
        let geom = GridGeometry::default_lf();
        let classes = classify_frames(&geom).unwrap();
        assert_eq!(classes[&0], FrameClass::Anchor);
        for anchor in [77, 80, 6, 3, 38, 41, 44] {
            assert_eq!(classes[&anchor], FrameClass::Anchor, "POC {anchor}");
        }
        for green in [12, 15, 18] {
            assert_eq!(classes[&green], FrameClass::RowReference, "POC {green}");
        }
        for yellow in [13, 16] {
            assert_eq!(classes[&yellow], FrameClass::Immediate, "POC {yellow}");
        }
        for black in [14, 17] {
            assert_eq!(classes[&black], FrameClass::NonReference, "POC {black}");
        }
    }

    #[test]
    fn center_rps_is_empty_and_chain_holds() {
        let geom = GridGeometry::default_lf();
        let schedule = build_schedule(&geom).unwrap();
        assert!(schedule.frame(0).unwrap().rps.is_empty());
        for w in schedule.order.windows(2) {
            let cur = schedule.frame(w[0]).unwrap();
            let next = schedule.frame(w[1]).unwrap();
            for r in &next.rps {
                assert!(
                    *r == w[0] || cur.rps.contains(r),
                    "POC {} references {r} outside the chain",
                    w[1]
                );
            }
        }
    }

    #[test]
    fn non_reference_frames_in_no_rps() {
        let geom = GridGeometry::default_lf();
        let schedule = build_schedule(&geom).unwrap();
        let blacks: BTreeSet<Poc> = schedule
            .frames
            .iter()
            .filter(|f| f.class == FrameClass::NonReference)
            .map(|f| f.poc)
            .collect();
        assert!(!blacks.is_empty());
        for f in &schedule.frames {
            for r in &f.rps {
                assert!(
                    !blacks.contains(r),
                    "non-reference {r} retained for {}",
                    f.poc
                );
            }
        }
    }

    #[test]
    fn dpb_peak_is_12_overall_and_10_for_tl() {
        let geom = GridGeometry::default_lf();
        let full = build_schedule(&geom).unwrap();
        assert_eq!(simulate_dpb(&full).unwrap().peak, 12);
        let tl = build_schedule_filtered(&geom, Some(Quadrant::TopLeft)).unwrap();
        assert_eq!(simulate_dpb(&tl).unwrap().peak, 10);
    }

    #[test]
    fn corrupted_rps_is_a_simulation_error() {
        // Dropping a retained frame from one reference set must surface
        // as an eviction inconsistency, not silent acceptance.
        let geom = GridGeometry::default_lf();
        let mut schedule = build_schedule(&geom).unwrap();
        let idx = schedule.frames.iter().position(|f| f.poc == 14).unwrap();
        schedule.frames[idx].rps.retain(|&p| p != 77);
        assert!(matches!(simulate_dpb(&schedule), Err(Error::Simulation(_))));
    }

    #[test]
    fn dpb_peak_trivial_grid() {
        let geom = GridGeometry::full(1, 1).unwrap();
        let schedule = build_schedule(&geom).unwrap();
        assert_eq!(schedule.order, vec![0]);
        assert_eq!(simulate_dpb(&schedule).unwrap().peak, 0);
    }

    #[test]
    fn schedule_serialization_is_deterministic() {
        let geom = GridGeometry::default_lf();
        let a = build_schedule(&geom).unwrap().to_canonical_json().unwrap();
        let b = build_schedule(&geom).unwrap().to_canonical_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sequence_schedule_gop16_matches_order_and_peak() {
        let seq = build_sequence_schedule(17, 16).unwrap();
        assert_eq!(
            seq.order,
            vec![0, 16, 8, 4, 2, 1, 3, 6, 5, 7, 12, 10, 9, 11, 14, 13, 15]
        );
        assert_eq!(seq.dpb_peak(), 5);
    }

    #[test]
    fn sequence_schedule_partial_tail() {
        let seq = build_sequence_schedule(12, 8).unwrap();
        let mut sorted = seq.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..12).collect::<Vec<_>>());
        // Second segment spans [8, 11]; its anchor sees only frame 8.
        assert_eq!(seq.rps[11], vec![8]);
        for (p, &f) in seq.order.iter().enumerate() {
            for r in &seq.rps[f as usize] {
                let rp = seq.order.iter().position(|&x| x == *r).unwrap();
                assert!(rp < p);
            }
        }
    }

    #[test]
    fn sequence_schedule_single_frame() {
        let seq = build_sequence_schedule(1, 16).unwrap();
        assert_eq!(seq.order, vec![0]);
        assert_eq!(seq.dpb_peak(), 0);
    }
}
