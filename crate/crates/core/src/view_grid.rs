//! View grid extraction and addressing.
//!
//! A lenslet raster is split into a 2-D grid of sub-aperture views on a
//! regular integer lattice: view `(r, c)` collects, from every microlens
//! cell, the sample at intra-cell offset `(r, c)`. Views are addressed
//! three ways: by grid cell, by picture order count (center first, then
//! raster order), and by a signed spatial coordinate with left/top
//! positive.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ChromaFormat, Image};

/// Picture order count. The center view is always 0; the remaining views
/// are numbered contiguously in raster order.
pub type Poc = u32;

/// A grid cell address, `(row, col)` from the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub row: u32,
    pub col: u32,
}

impl GridCell {
    pub fn new(row: u32, col: u32) -> Self {
        GridCell { row, col }
    }
}

/// Signed view coordinate. Left and top are the positive directions, so
/// `x = center_col - col` and `y = center_row - row`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ViewCoord {
    pub x: i32,
    pub y: i32,
}

impl ViewCoord {
    pub fn new(x: i32, y: i32) -> Self {
        ViewCoord { x, y }
    }

    /// Squared Euclidean distance, exact in integers.
    pub fn dist2(self, other: ViewCoord) -> u64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        (dx * dx + dy * dy) as u64
    }
}

/// Euclidean distance between two view coordinates.
pub fn distance(a: ViewCoord, b: ViewCoord) -> f64 {
    (a.dist2(b) as f64).sqrt()
}

/// Geometry of the extracted view grid.
///
/// `rows` and `cols` must be odd so a unique center view exists. `removed`
/// lists boundary cells excluded from the grid (views too vignetted to
/// keep); `microlens_pitch` is the size in pixels of one microlens cell in
/// the lenslet raster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub rows: u32,
    pub cols: u32,
    #[serde(default)]
    pub removed: BTreeSet<GridCell>,
    pub microlens_pitch: u32,
}

impl GridGeometry {
    pub fn new(
        rows: u32,
        cols: u32,
        removed: BTreeSet<GridCell>,
        microlens_pitch: u32,
    ) -> Result<Self> {
        let geom = GridGeometry {
            rows,
            cols,
            removed,
            microlens_pitch,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Full grid with no removed cells and pitch equal to the grid side.
    pub fn full(rows: u32, cols: u32) -> Result<Self> {
        GridGeometry::new(rows, cols, BTreeSet::new(), rows.max(cols))
    }

    /// The default 13x13 grid with the four extreme corner cells removed,
    /// yielding 165 views.
    pub fn default_lf() -> Self {
        let removed = [(0, 0), (0, 12), (12, 0), (12, 12)]
            .into_iter()
            .map(|(r, c)| GridCell::new(r, c))
            .collect();
        GridGeometry::new(13, 13, removed, 13).expect("default geometry is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0
            || self.cols == 0
            || self.rows.is_multiple_of(2)
            || self.cols.is_multiple_of(2)
        {
            return Err(Error::Geometry(format!(
                "grid must have odd, nonzero dimensions, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.microlens_pitch == 0 {
            return Err(Error::Geometry("microlens pitch must be nonzero".into()));
        }
        let center = self.center();
        for cell in &self.removed {
            if cell.row >= self.rows || cell.col >= self.cols {
                return Err(Error::Geometry(format!(
                    "removed cell ({},{}) outside the grid",
                    cell.row, cell.col
                )));
            }
            let boundary = cell.row == 0
                || cell.col == 0
                || cell.row == self.rows - 1
                || cell.col == self.cols - 1;
            if !boundary {
                return Err(Error::Geometry(format!(
                    "removed cell ({},{}) is not on the grid boundary",
                    cell.row, cell.col
                )));
            }
            if *cell == center {
                return Err(Error::Geometry("cannot remove the center view".into()));
            }
        }
        Ok(())
    }

    pub fn center(&self) -> GridCell {
        GridCell::new(self.rows / 2, self.cols / 2)
    }

    pub fn contains(&self, cell: GridCell) -> bool {
        cell.row < self.rows && cell.col < self.cols && !self.removed.contains(&cell)
    }

    /// Number of surviving views.
    pub fn view_count(&self) -> u32 {
        self.rows * self.cols - self.removed.len() as u32
    }

    /// Surviving cells in raster order.
    pub fn cells(&self) -> impl Iterator<Item = GridCell> + '_ {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| GridCell::new(r, c)))
            .filter(|cell| !self.removed.contains(cell))
    }

    pub fn cell_to_coord(&self, cell: GridCell) -> ViewCoord {
        let center = self.center();
        ViewCoord::new(
            center.col as i32 - cell.col as i32,
            center.row as i32 - cell.row as i32,
        )
    }

    pub fn coord_to_cell(&self, coord: ViewCoord) -> Result<GridCell> {
        let center = self.center();
        let row = center.row as i64 - coord.y as i64;
        let col = center.col as i64 - coord.x as i64;
        if row < 0 || col < 0 || row >= self.rows as i64 || col >= self.cols as i64 {
            return Err(Error::Lookup(format!(
                "coordinate ({},{}) outside the grid",
                coord.x, coord.y
            )));
        }
        let cell = GridCell::new(row as u32, col as u32);
        if !self.contains(cell) {
            return Err(Error::Lookup(format!(
                "coordinate ({},{}) maps to a removed cell",
                coord.x, coord.y
            )));
        }
        Ok(cell)
    }
}

/// Bijection between POC values and surviving grid cells: POC 0 is the
/// center, POCs 1.. follow raster order over the remaining cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PocMap {
    cells: Vec<GridCell>,
}

/// Builds the POC assignment for a geometry.
pub fn assign_poc(geom: &GridGeometry) -> Result<PocMap> {
    geom.validate()?;
    let center = geom.center();
    let mut cells = Vec::with_capacity(geom.view_count() as usize);
    cells.push(center);
    cells.extend(geom.cells().filter(|&c| c != center));
    Ok(PocMap { cells })
}

impl PocMap {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_of(&self, poc: Poc) -> Result<GridCell> {
        self.cells
            .get(poc as usize)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("POC {poc} out of range")))
    }

    pub fn poc_of(&self, cell: GridCell) -> Result<Poc> {
        // Grids are small; a linear scan keeps the map a single vector.
        self.cells
            .iter()
            .position(|&c| c == cell)
            .map(|i| i as Poc)
            .ok_or_else(|| Error::Lookup(format!("cell ({},{}) has no POC", cell.row, cell.col)))
    }

    pub fn pocs(&self) -> impl Iterator<Item = Poc> {
        0..self.cells.len() as Poc
    }

    /// Raster position of a POC's cell, used to order frames "above" or
    /// "below" one another.
    pub fn raster_key(&self, poc: Poc) -> Result<(u32, u32)> {
        let cell = self.cell_of(poc)?;
        Ok((cell.row, cell.col))
    }
}

/// Looks up the spatial coordinate for a POC.
pub fn poc_to_coord(poc: Poc, geom: &GridGeometry, map: &PocMap) -> Result<ViewCoord> {
    Ok(geom.cell_to_coord(map.cell_of(poc)?))
}

/// Looks up the POC for a spatial coordinate.
pub fn coord_to_poc(coord: ViewCoord, geom: &GridGeometry, map: &PocMap) -> Result<Poc> {
    map.poc_of(geom.coord_to_cell(coord)?)
}

/// The extracted views of one light field plus their addressing.
#[derive(Debug, Clone)]
pub struct ViewGrid {
    pub geom: GridGeometry,
    pub pocmap: PocMap,
    /// Views indexed by POC.
    pub views: Vec<Image>,
}

impl ViewGrid {
    /// Assembles a grid from per-POC views, checking that every view is
    /// present and that all views share one layout.
    pub fn from_views(geom: GridGeometry, views: Vec<Image>) -> Result<Self> {
        let pocmap = assign_poc(&geom)?;
        if views.len() != pocmap.len() {
            return Err(Error::IncompleteGrid(format!(
                "expected {} views, got {}",
                pocmap.len(),
                views.len()
            )));
        }
        let first = &views[0];
        for (i, v) in views.iter().enumerate() {
            v.validate()?;
            if !v.same_layout(first) {
                return Err(Error::Dimension(format!(
                    "view for POC {i} does not match the grid layout"
                )));
            }
        }
        Ok(ViewGrid {
            geom,
            pocmap,
            views,
        })
    }

    pub fn view(&self, poc: Poc) -> Result<&Image> {
        self.views
            .get(poc as usize)
            .ok_or_else(|| Error::Lookup(format!("POC {poc} out of range")))
    }

    pub fn view_width(&self) -> usize {
        self.views[0].width()
    }

    pub fn view_height(&self) -> usize {
        self.views[0].height()
    }

    pub fn bit_depth(&self) -> u8 {
        self.views[0].bit_depth
    }

    pub fn chroma(&self) -> ChromaFormat {
        self.views[0].chroma
    }

    pub fn coord_of(&self, poc: Poc) -> Result<ViewCoord> {
        poc_to_coord(poc, &self.geom, &self.pocmap)
    }
}

/// Splits a lenslet raster into the surviving views of `geom`.
///
/// View `(r, c)` gathers the sample at intra-cell offset `(r, c)` of every
/// microlens cell; nearest-neighbor on a regular integer lattice, no
/// demosaicing or lens-center calibration. Only 4:4:4 input is accepted:
/// with subsampled chroma the lattice gather has no exact inverse.
pub fn decompose_lenslet(img: &Image, geom: &GridGeometry) -> Result<ViewGrid> {
    geom.validate()?;
    img.validate()?;
    if img.chroma != ChromaFormat::C444 {
        return Err(Error::Dimension(
            "lenslet decomposition requires 4:4:4 input".into(),
        ));
    }
    let pitch = geom.microlens_pitch as usize;
    if (geom.rows as usize) > pitch || (geom.cols as usize) > pitch {
        return Err(Error::Geometry(format!(
            "grid {}x{} does not fit in a microlens pitch of {pitch}",
            geom.rows, geom.cols
        )));
    }
    if img.width() < geom.cols as usize * pitch || img.height() < geom.rows as usize * pitch {
        return Err(Error::Dimension(format!(
            "lenslet image {}x{} smaller than {} x {} microlens cells",
            img.width(),
            img.height(),
            geom.cols,
            geom.rows
        )));
    }

    let lens_w = img.width() / pitch;
    let lens_h = img.height() / pitch;
    let pocmap = assign_poc(geom)?;
    let mut views = Vec::with_capacity(pocmap.len());
    for poc in pocmap.pocs() {
        let cell = pocmap.cell_of(poc)?;
        let mut view = Image::new(lens_w, lens_h, img.bit_depth, img.chroma)?;
        for (pi, plane) in img.planes.iter().enumerate() {
            let out = &mut view.planes[pi];
            for ly in 0..lens_h {
                let sy = ly * pitch + cell.row as usize;
                for lx in 0..lens_w {
                    let sx = lx * pitch + cell.col as usize;
                    out.set(lx, ly, plane.get(sx, sy));
                }
            }
        }
        views.push(view);
    }
    ViewGrid::from_views(geom.clone(), views)
}

/// Inverse of [`decompose_lenslet`] on the surviving lattice positions.
///
/// Pixels belonging to removed cells (and any raster margin outside the
/// microlens lattice) are copied from `original`, so whole-image metrics
/// stay well defined.
pub fn recompose(grid: &ViewGrid, original: &Image) -> Result<Image> {
    original.validate()?;
    if original.chroma != ChromaFormat::C444 {
        return Err(Error::Dimension(
            "lenslet recomposition requires a 4:4:4 original".into(),
        ));
    }
    let pitch = grid.geom.microlens_pitch as usize;
    let lens_w = original.width() / pitch;
    let lens_h = original.height() / pitch;
    if lens_w != grid.view_width() || lens_h != grid.view_height() {
        return Err(Error::Dimension(format!(
            "views are {}x{} but the original implies {}x{}",
            grid.view_width(),
            grid.view_height(),
            lens_w,
            lens_h
        )));
    }
    if grid.views.len() != grid.pocmap.len() {
        return Err(Error::IncompleteGrid("grid is missing views".into()));
    }
    let mut out = original.clone();
    for poc in grid.pocmap.pocs() {
        let cell = grid.pocmap.cell_of(poc)?;
        let view = grid.view(poc)?;
        for (pi, plane) in view.planes.iter().enumerate() {
            let dst = &mut out.planes[pi];
            for ly in 0..lens_h {
                let sy = ly * pitch + cell.row as usize;
                for lx in 0..lens_w {
                    let sx = lx * pitch + cell.col as usize;
                    dst.set(sx, sy, plane.get(lx, ly));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image_from_fn(
        w: usize,
        h: usize,
        bit_depth: u8,
        f: impl Fn(usize, usize, usize) -> u16,
    ) -> Image {
        let mut img = Image::new(w, h, bit_depth, ChromaFormat::C444).unwrap();
        for pi in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let v = f(pi, x, y) & ((1 << bit_depth) - 1);
                    img.planes[pi].set(x, y, v);
                }
            }
        }
        img
    }

    #[test]
    fn default_geometry_has_165_views() {
        let geom = GridGeometry::default_lf();
        assert_eq!(geom.view_count(), 165);
        let map = assign_poc(&geom).unwrap();
        assert_eq!(map.len(), 165);
        // Bijective over 0..=164 with the center first.
        assert_eq!(map.cell_of(0).unwrap(), GridCell::new(6, 6));
        let mut seen = BTreeSet::new();
        for poc in map.pocs() {
            seen.insert(map.cell_of(poc).unwrap());
        }
        assert_eq!(seen.len(), 165);
    }

    #[test]
    fn poc_assignment_3x3_hand_enumeration() {
        let geom = GridGeometry::full(3, 3).unwrap();
        let map = assign_poc(&geom).unwrap();
        let expected = [
            ((1, 1), 0),
            ((0, 0), 1),
            ((0, 1), 2),
            ((0, 2), 3),
            ((1, 0), 4),
            ((1, 2), 5),
            ((2, 0), 6),
            ((2, 1), 7),
            ((2, 2), 8),
        ];
        for ((r, c), poc) in expected {
            assert_eq!(map.poc_of(GridCell::new(r, c)).unwrap(), poc);
            assert_eq!(map.cell_of(poc).unwrap(), GridCell::new(r, c));
        }
    }

    #[test]
    fn poc_assignment_1x1() {
        let geom = GridGeometry::full(1, 1).unwrap();
        let map = assign_poc(&geom).unwrap();
        assert_eq!(map.len(), 1);
        assert_eq!(map.cell_of(0).unwrap(), GridCell::new(0, 0));
    }

    #[test]
    fn coords_follow_left_top_positive_convention() {
        let geom = GridGeometry::full(3, 3).unwrap();
        let map = assign_poc(&geom).unwrap();
        assert_eq!(poc_to_coord(0, &geom, &map).unwrap(), ViewCoord::new(0, 0));
        // POC 1 is the top-left cell.
        assert_eq!(poc_to_coord(1, &geom, &map).unwrap(), ViewCoord::new(1, 1));
        for poc in map.pocs() {
            let coord = poc_to_coord(poc, &geom, &map).unwrap();
            assert_eq!(coord_to_poc(coord, &geom, &map).unwrap(), poc);
        }
        assert!(poc_to_coord(9, &geom, &map).is_err());
        assert!(coord_to_poc(ViewCoord::new(5, 0), &geom, &map).is_err());
    }

    #[test]
    fn default_geometry_frame_coordinates() {
        // Spot checks used throughout the scheduler: POC 77 is the leftmost
        // center-row view, POC 14 sits at (4, 5).
        let geom = GridGeometry::default_lf();
        let map = assign_poc(&geom).unwrap();
        for (poc, x, y) in [
            (77, 6, 0),
            (80, 3, 0),
            (14, 4, 5),
            (13, 5, 5),
            (15, 3, 5),
            (38, 6, 3),
            (41, 3, 3),
            (44, 0, 3),
            (6, 0, 6),
            (3, 3, 6),
        ] {
            assert_eq!(
                poc_to_coord(poc, &geom, &map).unwrap(),
                ViewCoord::new(x, y),
                "POC {poc}"
            );
        }
    }

    #[test]
    fn distance_fixtures() {
        assert_eq!(distance(ViewCoord::new(0, 0), ViewCoord::new(3, 4)), 5.0);
        assert_eq!(distance(ViewCoord::new(7, 7), ViewCoord::new(7, 7)), 0.0);
        assert_eq!(distance(ViewCoord::new(1, 2), ViewCoord::new(-2, 6)), 5.0);
    }

    #[test]
    fn decompose_3x3_interleave_round_trip() {
        // Build a lenslet by inverse interleaving nine known views, then
        // check the decomposition returns exactly those views.
        let geom = GridGeometry::full(3, 3).unwrap();
        let vw = 4;
        let vh = 5;
        let views: Vec<Image> = (0..9)
            .map(|i| {
                image_from_fn(vw, vh, 8, move |pi, x, y| {
                    (i * 17 + pi * 31 + x * 7 + y * 13) as u16 & 0xff
                })
            })
            .collect();
        let map = assign_poc(&geom).unwrap();
        let mut lenslet = Image::new(vw * 3, vh * 3, 8, ChromaFormat::C444).unwrap();
        for poc in map.pocs() {
            let cell = map.cell_of(poc).unwrap();
            for pi in 0..3 {
                for ly in 0..vh {
                    for lx in 0..vw {
                        lenslet.planes[pi].set(
                            lx * 3 + cell.col as usize,
                            ly * 3 + cell.row as usize,
                            views[poc as usize].planes[pi].get(lx, ly),
                        );
                    }
                }
            }
        }
        let grid = decompose_lenslet(&lenslet, &geom).unwrap();
        for poc in map.pocs() {
            assert_eq!(grid.view(poc).unwrap(), &views[poc as usize], "POC {poc}");
        }
        let back = recompose(&grid, &lenslet).unwrap();
        assert_eq!(back, lenslet);
    }

    #[test]
    fn decompose_1x1_is_identity() {
        let img = image_from_fn(6, 4, 8, |pi, x, y| (pi + x * 2 + y * 11) as u16);
        let geom = GridGeometry::full(1, 1).unwrap();
        let grid = decompose_lenslet(&img, &geom).unwrap();
        assert_eq!(grid.views.len(), 1);
        assert_eq!(grid.view(0).unwrap(), &img);
        assert_eq!(recompose(&grid, &img).unwrap(), img);
    }

    #[test]
    fn decompose_rejects_bad_geometry() {
        let img = image_from_fn(8, 8, 8, |_, x, y| (x + y) as u16);
        assert!(GridGeometry::full(2, 2).is_err());
        let geom = GridGeometry::new(3, 3, BTreeSet::new(), 3).unwrap();
        let small = image_from_fn(4, 4, 8, |_, x, y| (x + y) as u16);
        assert!(matches!(
            decompose_lenslet(&small, &geom),
            Err(Error::Dimension(_))
        ));
        let _ = img;
    }

    #[test]
    fn recompose_detects_single_replaced_view() {
        let geom = GridGeometry::full(3, 3).unwrap();
        let img = image_from_fn(9, 9, 8, |pi, x, y| (pi * 5 + x * 3 + y * 19) as u16);
        let mut grid = decompose_lenslet(&img, &geom).unwrap();
        // Perturb one view and check the diff mask is exactly its lattice.
        let poc = 5;
        let cell = grid.pocmap.cell_of(poc).unwrap();
        for v in grid.views[poc as usize].planes[0].data.iter_mut() {
            *v ^= 1;
        }
        let back = recompose(&grid, &img).unwrap();
        for y in 0..9 {
            for x in 0..9 {
                let on_lattice = (x % 3) as u32 == cell.col && (y % 3) as u32 == cell.row;
                let differs = back.planes[0].get(x, y) != img.planes[0].get(x, y);
                assert_eq!(differs, on_lattice, "pixel ({x},{y})");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn decompose_recompose_inverse(
            rows in prop::sample::select(vec![1u32, 3, 5]),
            cols in prop::sample::select(vec![1u32, 3, 5]),
            extra_pitch in 0u32..2,
            extra_lenses_w in 0usize..2,
            extra_lenses_h in 0usize..2,
            bit_depth in prop::sample::select(vec![8u8, 10]),
            seed in any::<u64>(),
        ) {
            let pitch = rows.max(cols) + extra_pitch;
            // The image must span at least rows x cols microlens cells.
            let lenses_w = cols as usize + extra_lenses_w;
            let lenses_h = rows as usize + extra_lenses_h;
            let mut removed = BTreeSet::new();
            // Remove one boundary corner when the grid is big enough.
            if rows >= 3 && cols >= 3 && seed % 2 == 0 {
                removed.insert(GridCell::new(0, 0));
            }
            let geom = GridGeometry::new(rows, cols, removed, pitch).unwrap();
            let w = lenses_w * pitch as usize;
            let h = lenses_h * pitch as usize;
            let mask = (1u32 << bit_depth) - 1;
            let img = image_from_fn(w, h, bit_depth, |pi, x, y| {
                let mut v = seed
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add((pi * 1000003 + x * 131 + y * 92821) as u64);
                v ^= v >> 33;
                (v as u32 & mask) as u16
            });
            let grid = decompose_lenslet(&img, &geom)?;
            let back = recompose(&grid, &img)?;
            prop_assert_eq!(back, img);
        }

        #[test]
        fn poc_raster_monotonicity(rows in prop::sample::select(vec![3u32, 5, 7]),
                                   cols in prop::sample::select(vec![3u32, 5, 7])) {
            let geom = GridGeometry::full(rows, cols).unwrap();
            let map = assign_poc(&geom).unwrap();
            let center = geom.center();
            let mut last = None;
            for cell in geom.cells().filter(|&c| c != center) {
                let poc = map.poc_of(cell).unwrap();
                if let Some(prev) = last {
                    prop_assert!(poc > prev);
                }
                last = Some(poc);
            }
        }

        #[test]
        fn distance_metric_properties(ax in -8i32..8, ay in -8i32..8,
                                      bx in -8i32..8, by in -8i32..8,
                                      cx in -8i32..8, cy in -8i32..8) {
            let a = ViewCoord::new(ax, ay);
            let b = ViewCoord::new(bx, by);
            let c = ViewCoord::new(cx, cy);
            prop_assert_eq!(distance(a, b), distance(b, a));
            prop_assert!(distance(a, b) >= 0.0);
            prop_assert_eq!(distance(a, b) == 0.0, a == b);
            prop_assert!(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9);
        }
    }
}
