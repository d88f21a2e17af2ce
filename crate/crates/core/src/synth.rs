//! Synthetic light fields for tests, benchmarks and demos.
//!
//! Each generator returns a complete view grid with known structure:
//! pure translation between views, a two-layer parallax scene, flat gray,
//! or uncorrelated noise as a control.

use crate::error::Result;
use crate::image::{ChromaFormat, Image, Plane};
use crate::view_grid::{assign_poc, GridGeometry, ViewCoord, ViewGrid};

/// Deterministic 64-bit mixer used by all generators.
#[derive(Clone)]
struct Rng(u64);

impl Rng {
    fn new(seed: u64) -> Self {
        Rng(seed.wrapping_mul(2685821657736338717) | 1)
    }

    fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
}

/// Smooth value-noise plane: random lattice values bilinearly
/// interpolated, overlaid at two scales so content is non-periodic.
fn noise_texture(width: usize, height: usize, max: u16, seed: u64) -> Plane {
    let mut plane = Plane::new(width, height);
    let layer = |cell: usize, weight: u32, seed: u64, plane: &mut Plane| {
        let gw = width / cell + 2;
        let gh = height / cell + 2;
        let mut rng = Rng::new(seed);
        let lattice: Vec<u32> = (0..gw * gh).map(|_| rng.below(1 << 16) as u32).collect();
        for y in 0..height {
            let gy = y / cell;
            let fy = (y % cell) as u32;
            for x in 0..width {
                let gx = x / cell;
                let fx = (x % cell) as u32;
                let c = cell as u32;
                let v00 = lattice[gy * gw + gx];
                let v10 = lattice[gy * gw + gx + 1];
                let v01 = lattice[(gy + 1) * gw + gx];
                let v11 = lattice[(gy + 1) * gw + gx + 1];
                let top = (v00 * (c - fx) + v10 * fx) / c;
                let bot = (v01 * (c - fx) + v11 * fx) / c;
                let v = (top * (c - fy) + bot * fy) / c;
                let cur = plane.get(x, y) as u32;
                plane.set(x, y, (cur + v * weight / 256) as u16);
            }
        }
    };
    layer(8, 192, seed, &mut plane);
    layer(5, 64, seed ^ 0x9E3779B97F4A7C15, &mut plane);
    // Rescale the 16-bit accumulation to the sample range.
    for v in plane.data.iter_mut() {
        *v = (*v as u32 * max as u32 / 65535) as u16;
    }
    plane
}

fn crop(src: &Plane, x0: usize, y0: usize, w: usize, h: usize) -> Plane {
    let mut out = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, src.get(x0 + x, y0 + y));
        }
    }
    out
}

fn grid_from_cropper(
    geom: &GridGeometry,
    view_w: usize,
    view_h: usize,
    bit_depth: u8,
    chroma: ChromaFormat,
    mut make_view: impl FnMut(ViewCoord) -> [Plane; 3],
) -> Result<ViewGrid> {
    let map = assign_poc(geom)?;
    let mut views = Vec::with_capacity(map.len());
    for poc in map.pocs() {
        let coord = geom.cell_to_coord(map.cell_of(poc)?);
        let planes = make_view(coord);
        debug_assert_eq!(planes[0].width, view_w);
        debug_assert_eq!(planes[0].height, view_h);
        views.push(Image {
            planes,
            bit_depth,
            chroma,
        });
    }
    ViewGrid::from_views(geom.clone(), views)
}

/// Offset of a view's crop window inside the base texture. Larger x means
/// the window moves left in the base, so content appears shifted right.
fn window_origin(coord: ViewCoord, step: usize, margin: usize, scale: usize) -> (usize, usize) {
    let ox = margin as i64 - (coord.x as i64) * step as i64;
    let oy = margin as i64 - (coord.y as i64) * step as i64;
    ((ox as usize) / scale, (oy as usize) / scale)
}

/// Every view is the same texture translated by `step` pixels per grid
/// unit. The motion between views (x0, y0) and (x1, y1) is exactly
/// `step * (x0 - x1, y0 - y1)` pels.
pub fn translating_texture(
    geom: &GridGeometry,
    view_w: usize,
    view_h: usize,
    step: usize,
    bit_depth: u8,
    chroma: ChromaFormat,
    seed: u64,
) -> Result<ViewGrid> {
    let half_w = (geom.cols / 2) as usize;
    let half_h = (geom.rows / 2) as usize;
    let margin = step * half_w.max(half_h) + 4;
    let base_w = view_w + 2 * margin;
    let base_h = view_h + 2 * margin;
    let max = (1u16 << bit_depth) - 1;
    let luma = noise_texture(base_w, base_h, max, seed);
    let s = chroma.subsample();
    let cb = noise_texture(base_w / s + 2, base_h / s + 2, max, seed ^ 0xA5A5);
    let cr = noise_texture(base_w / s + 2, base_h / s + 2, max, seed ^ 0x5A5A);
    let (cw, ch) = chroma.chroma_dims(view_w, view_h);
    grid_from_cropper(geom, view_w, view_h, bit_depth, chroma, |coord| {
        let (ox, oy) = window_origin(coord, step, margin, 1);
        let (cox, coy) = window_origin(coord, step, margin, s);
        [
            crop(&luma, ox, oy, view_w, view_h),
            crop(&cb, cox, coy, cw, ch),
            crop(&cr, cox, coy, cw, ch),
        ]
    })
}

/// Ground-truth motion (in whole pels) between two views of a
/// translating-texture grid: the displacement at which the reference view
/// shows the same content as the current view. With crop windows at
/// `margin - step * coord`, that is `step * (ref - cur)` per axis.
pub fn expected_shift(step: usize, cur: ViewCoord, reference: ViewCoord) -> (i32, i32) {
    (
        step as i32 * (reference.x - cur.x),
        step as i32 * (reference.y - cur.y),
    )
}

/// A pinhole-style scene with depth: a background layer translating by
/// `bg_step` per grid unit and a textured foreground rectangle
/// translating by `fg_step`, composited on top.
pub fn parallax_scene(
    geom: &GridGeometry,
    view_w: usize,
    view_h: usize,
    bg_step: usize,
    fg_step: usize,
    bit_depth: u8,
    chroma: ChromaFormat,
    seed: u64,
) -> Result<ViewGrid> {
    let half = (geom.cols.max(geom.rows) / 2) as usize;
    let margin = fg_step.max(bg_step) * half + 4;
    let base_w = view_w + 2 * margin;
    let base_h = view_h + 2 * margin;
    let max = (1u16 << bit_depth) - 1;
    let bg = noise_texture(base_w, base_h, max, seed);
    let fg = noise_texture(base_w, base_h, max, seed ^ 0xF0F0F0);
    let s = chroma.subsample();
    let cb = noise_texture(base_w / s + 2, base_h / s + 2, max, seed ^ 0x1111);
    let cr = noise_texture(base_w / s + 2, base_h / s + 2, max, seed ^ 0x2222);
    let (cw, ch) = chroma.chroma_dims(view_w, view_h);
    // Foreground rectangle in view coordinates of the center view.
    let fx0 = view_w / 4;
    let fy0 = view_h / 4;
    let fw = view_w / 2;
    let fh = view_h / 2;
    grid_from_cropper(geom, view_w, view_h, bit_depth, chroma, |coord| {
        let (bx, by) = window_origin(coord, bg_step, margin, 1);
        let (gx, gy) = window_origin(coord, fg_step, margin, 1);
        let mut y_plane = crop(&bg, bx, by, view_w, view_h);
        // The foreground occludes a rectangle whose position shifts with
        // the disparity difference between the two layers.
        let dx = gx as i64 - bx as i64;
        let dy = gy as i64 - by as i64;
        for y in 0..fh {
            for x in 0..fw {
                let vx = (fx0 + x) as i64 - dx;
                let vy = (fy0 + y) as i64 - dy;
                if vx >= 0 && vy >= 0 && (vx as usize) < view_w && (vy as usize) < view_h {
                    let t = fg.get(gx + fx0 + x, gy + fy0 + y);
                    y_plane.set(vx as usize, vy as usize, t);
                }
            }
        }
        let (cox, coy) = window_origin(coord, bg_step, margin, s);
        [
            y_plane,
            crop(&cb, cox, coy, cw, ch),
            crop(&cr, cox, coy, cw, ch),
        ]
    })
}

/// Uncorrelated uniform noise per view, the compression-floor control.
pub fn noise_field(
    geom: &GridGeometry,
    view_w: usize,
    view_h: usize,
    bit_depth: u8,
    chroma: ChromaFormat,
    seed: u64,
) -> Result<ViewGrid> {
    let max = 1u64 << bit_depth;
    let (cw, ch) = chroma.chroma_dims(view_w, view_h);
    let mut rng = Rng::new(seed);
    grid_from_cropper(geom, view_w, view_h, bit_depth, chroma, |_| {
        let mut mk = |w: usize, h: usize| {
            let mut p = Plane::new(w, h);
            for v in p.data.iter_mut() {
                *v = rng.below(max) as u16;
            }
            p
        };
        [mk(view_w, view_h), mk(cw, ch), mk(cw, ch)]
    })
}

/// Flat constant-gray views.
pub fn constant_gray(
    geom: &GridGeometry,
    view_w: usize,
    view_h: usize,
    bit_depth: u8,
    chroma: ChromaFormat,
    value: u16,
) -> Result<ViewGrid> {
    let (cw, ch) = chroma.chroma_dims(view_w, view_h);
    grid_from_cropper(geom, view_w, view_h, bit_depth, chroma, |_| {
        [
            Plane::filled(view_w, view_h, value),
            Plane::filled(cw, ch, value),
            Plane::filled(cw, ch, value),
        ]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::view_grid::GridCell;

    #[test]
    fn translation_is_exact_between_views() {
        let geom = GridGeometry::full(3, 3).unwrap();
        let step = 2;
        let grid = translating_texture(&geom, 32, 32, step, 8, ChromaFormat::C444, 7).unwrap();
        let a_poc = grid.pocmap.poc_of(GridCell::new(1, 1)).unwrap();
        let b_poc = grid.pocmap.poc_of(GridCell::new(1, 0)).unwrap();
        let a_coord = grid.coord_of(a_poc).unwrap();
        let b_coord = grid.coord_of(b_poc).unwrap();
        let (dx, dy) = expected_shift(step, a_coord, b_coord);
        assert_eq!((dx, dy), (step as i32, 0));
        let a = &grid.view(a_poc).unwrap().planes[0];
        let b = &grid.view(b_poc).unwrap().planes[0];
        // a(x, y) must equal b(x + dx, y + dy) wherever both exist.
        for y in 4..28usize {
            for x in 4..28usize {
                let bx = (x as i32 + dx) as usize;
                let by = (y as i32 + dy) as usize;
                assert_eq!(a.get(x, y), b.get(bx, by), "({x},{y})");
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let geom = GridGeometry::full(3, 3).unwrap();
        let a = noise_field(&geom, 16, 16, 8, ChromaFormat::C420, 42).unwrap();
        let b = noise_field(&geom, 16, 16, 8, ChromaFormat::C420, 42).unwrap();
        for (va, vb) in a.views.iter().zip(&b.views) {
            assert_eq!(va, vb);
        }
        let c = noise_field(&geom, 16, 16, 8, ChromaFormat::C420, 43).unwrap();
        assert_ne!(a.views[0], c.views[0]);
    }

    #[test]
    fn samples_respect_bit_depth() {
        let geom = GridGeometry::full(3, 3).unwrap();
        for bd in [8u8, 10] {
            let grid = translating_texture(&geom, 24, 24, 1, bd, ChromaFormat::C444, 3).unwrap();
            for v in &grid.views {
                v.validate().unwrap();
            }
            let grid = parallax_scene(&geom, 24, 24, 1, 3, bd, ChromaFormat::C444, 3).unwrap();
            for v in &grid.views {
                v.validate().unwrap();
            }
        }
    }
}
