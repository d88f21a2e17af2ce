//! File formats: raw planar images with JSON sidecars, per-view PGM
//! files, and JSON serialization of geometry and schedules.
//!
//! Raw planar layout is Y then U then V, row-major, little-endian u16 for
//! 10-bit and single bytes for 8-bit. PGM files follow the netpbm P5
//! format (16-bit samples are big-endian per the format).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ChromaFormat, Image};
use crate::view_grid::{GridGeometry, Poc, ViewGrid};

/// JSON sidecar describing a raw planar file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub chroma_format: ChromaFormat,
}

impl RawSidecar {
    pub fn for_image(img: &Image) -> Self {
        RawSidecar {
            width: img.width(),
            height: img.height(),
            bit_depth: img.bit_depth,
            chroma_format: img.chroma,
        }
    }
}

/// Serializes an image to raw planar bytes.
pub fn image_to_raw(img: &Image) -> Vec<u8> {
    let wide = img.bit_depth > 8;
    let total: usize = img.planes.iter().map(|p| p.data.len()).sum();
    let mut out = Vec::with_capacity(total * if wide { 2 } else { 1 });
    for plane in &img.planes {
        for &v in &plane.data {
            if wide {
                out.extend_from_slice(&v.to_le_bytes());
            } else {
                out.push(v as u8);
            }
        }
    }
    out
}

/// Parses raw planar bytes under a sidecar description.
pub fn image_from_raw(bytes: &[u8], sidecar: &RawSidecar) -> Result<Image> {
    let mut img = Image::new(
        sidecar.width,
        sidecar.height,
        sidecar.bit_depth,
        sidecar.chroma_format,
    )?;
    let wide = sidecar.bit_depth > 8;
    let sample_size = if wide { 2 } else { 1 };
    let expected: usize = img.planes.iter().map(|p| p.data.len()).sum::<usize>() * sample_size;
    if bytes.len() != expected {
        return Err(Error::Dimension(format!(
            "raw file is {} bytes, sidecar implies {expected}",
            bytes.len()
        )));
    }
    let mut pos = 0;
    for plane in &mut img.planes {
        for v in plane.data.iter_mut() {
            *v = if wide {
                u16::from_le_bytes([bytes[pos], bytes[pos + 1]])
            } else {
                bytes[pos] as u16
            };
            pos += sample_size;
        }
    }
    img.validate()?;
    Ok(img)
}

/// Reads `path` (raw planar) with its `<path>.json` sidecar.
pub fn read_raw_image(path: &Path) -> Result<Image> {
    let sidecar_path = sidecar_path(path);
    let sidecar: RawSidecar = serde_json::from_slice(&fs::read(&sidecar_path)?)?;
    image_from_raw(&fs::read(path)?, &sidecar)
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    std::path::PathBuf::from(os)
}

/// Serializes an image as a binary PGM (P5). Color images lose chroma;
/// only the luma plane is stored.
pub fn image_to_pgm(img: &Image) -> Vec<u8> {
    let plane = &img.planes[0];
    let max = (1u32 << img.bit_depth) - 1;
    let mut out = format!("P5\n{} {}\n{}\n", plane.width, plane.height, max).into_bytes();
    for &v in &plane.data {
        if img.bit_depth > 8 {
            out.extend_from_slice(&v.to_be_bytes());
        } else {
            out.push(v as u8);
        }
    }
    out
}

/// Parses a binary PGM into a gray 4:4:4 image (chroma planes mid-gray).
pub fn image_from_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // Skip whitespace and comment lines.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Dimension("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token(bytes)? != "P5" {
        return Err(Error::Dimension("not a binary PGM file".into()));
    }
    let width: usize = token(bytes)?
        .parse()
        .map_err(|_| Error::Dimension("bad PGM width".into()))?;
    let height: usize = token(bytes)?
        .parse()
        .map_err(|_| Error::Dimension("bad PGM height".into()))?;
    let maxval: u32 = token(bytes)?
        .parse()
        .map_err(|_| Error::Dimension("bad PGM maxval".into()))?;
    let bit_depth = match maxval {
        255 => 8,
        1023 => 10,
        other => {
            return Err(Error::Dimension(format!(
                "unsupported PGM maxval {other} (expected 255 or 1023)"
            )))
        }
    };
    pos += 1; // single whitespace after maxval
    let mut img = Image::flat(width, height, bit_depth, ChromaFormat::C444)?;
    let plane = &mut img.planes[0];
    let wide = bit_depth > 8;
    let need = width * height * if wide { 2 } else { 1 };
    if bytes.len() < pos + need {
        return Err(Error::Dimension("truncated PGM payload".into()));
    }
    for v in plane.data.iter_mut() {
        *v = if wide {
            let b = [bytes[pos], bytes[pos + 1]];
            pos += 2;
            u16::from_be_bytes(b)
        } else {
            pos += 1;
            bytes[pos - 1] as u16
        };
    }
    img.validate()?;
    Ok(img)
}

/// Canonical per-view file stem: `view_r{row}_c{col}_poc{poc}`.
pub fn view_stem(row: u32, col: u32, poc: Poc) -> String {
    format!("view_r{row}_c{col}_poc{poc}")
}

/// Writes every view of a grid into a directory as PGM (luma only) or
/// raw planar plus sidecar, returning the file names written.
pub fn write_view_dir(
    grid: &ViewGrid,
    dir: &Path,
    as_pgm: bool,
) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for poc in grid.pocmap.pocs() {
        let cell = grid.pocmap.cell_of(poc)?;
        let stem = view_stem(cell.row, cell.col, poc);
        let view = grid.view(poc)?;
        if as_pgm {
            let path = dir.join(format!("{stem}.pgm"));
            fs::write(&path, image_to_pgm(view))?;
            written.push(path);
        } else {
            let path = dir.join(format!("{stem}.raw"));
            fs::write(&path, image_to_raw(view))?;
            let sc = sidecar_path(&path);
            fs::write(
                &sc,
                serde_json::to_vec_pretty(&RawSidecar::for_image(view))?,
            )?;
            written.push(path);
            written.push(sc);
        }
    }
    Ok(written)
}

/// Loads a view grid from a directory of `view_r*_c*_poc*` files plus a
/// geometry. Accepts `.pgm` or `.raw` (with sidecars).
pub fn read_view_dir(dir: &Path, geom: &GridGeometry) -> Result<ViewGrid> {
    let map = crate::view_grid::assign_poc(geom)?;
    let mut views: Vec<Option<Image>> = vec![None; map.len()];
    for poc in map.pocs() {
        let cell = map.cell_of(poc)?;
        let stem = view_stem(cell.row, cell.col, poc);
        let pgm = dir.join(format!("{stem}.pgm"));
        let raw = dir.join(format!("{stem}.raw"));
        let img = if pgm.exists() {
            image_from_pgm(&fs::read(&pgm)?)?
        } else if raw.exists() {
            read_raw_image(&raw)?
        } else {
            return Err(Error::IncompleteGrid(format!(
                "missing view file {stem}.pgm or {stem}.raw in {}",
                dir.display()
            )));
        };
        views[poc as usize] = Some(img);
    }
    let views = views
        .into_iter()
        .map(|v| v.expect("all slots filled above"))
        .collect();
    ViewGrid::from_views(geom.clone(), views)
}

pub fn read_geometry(path: &Path) -> Result<GridGeometry> {
    let geom: GridGeometry = serde_json::from_slice(&fs::read(path)?)?;
    geom.validate()?;
    Ok(geom)
}
