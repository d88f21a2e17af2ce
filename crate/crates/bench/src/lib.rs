//! Shared fixtures for the criterion benches.

use lfseq_core::image::ChromaFormat;
use lfseq_core::synth;
use lfseq_core::view_grid::{GridGeometry, ViewGrid};

/// A small textured grid that exercises motion search and both list
/// directions without dominating bench wall time.
pub fn bench_grid() -> ViewGrid {
    let geom = GridGeometry::full(3, 3).unwrap();
    synth::translating_texture(&geom, 32, 32, 1, 8, ChromaFormat::C444, 97).unwrap()
}
