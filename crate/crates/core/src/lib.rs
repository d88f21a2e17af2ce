//! Light-field pseudo-sequence compression toolkit.
//!
//! A light field is decomposed into a 2-D grid of sub-aperture views; the
//! views are coded as a pseudo video sequence. This crate provides the
//! 2-D hierarchical coding structure (coding order, frame classes,
//! reference sets and buffer simulation), distance-based reference list
//! construction, spatial-coordinate motion-vector scaling, a simplified
//! block codec that exercises all of it, and rate-distortion evaluation
//! against a 1-D hierarchical anchor.

// Block coders index parallel plane arrays and carry wide argument
// lists; the lint churn is not worth restructuring around.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]
#![allow(clippy::type_complexity)]
#![allow(clippy::manual_div_ceil)]

pub mod codec;
pub mod error;
pub mod eval;
pub mod image;
pub mod io;
pub mod mvscale;
pub mod reflists;
pub mod scheduler;
pub mod synth;
pub mod view_grid;

pub use error::{Error, Result};
pub use image::{ChromaFormat, Image, Plane};
pub use mvscale::MotionVector;
pub use scheduler::{CodingSchedule, DpbTimeline, FrameClass, Quadrant};
pub use view_grid::{GridCell, GridGeometry, Poc, PocMap, ViewCoord, ViewGrid};
