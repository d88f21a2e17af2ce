//! Command-line pipelines for the light-field pseudo-sequence codec.
//!
//! Exit codes: 0 on success, 1 on domain errors, 2 on usage errors
//! (including missing input paths). No command leaves partial outputs on
//! failure; every command writes a run manifest next to its primary
//! output.

mod commands;
mod manifest;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(lfseq_core::Error),
}

impl From<lfseq_core::Error> for CliError {
    fn from(e: lfseq_core::Error) -> Self {
        CliError::Domain(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "lfseq",
    version,
    about = "Light-field pseudo-sequence compression toolkit",
    long_about = "Decomposes lenslet light fields into view grids, schedules them with a \
2-D hierarchical reference structure, codes them with a simplified block codec, and \
evaluates rate-distortion against a 1-D anchor."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a lenslet image into per-view files plus geometry and POC maps
    Decompose(DecomposeArgs),
    /// Generate the 2-D hierarchical coding schedule and buffer report
    Schedule(ScheduleArgs),
    /// Encode a view grid into a coded stream
    Encode(EncodeArgs),
    /// Decode a coded stream back into view files
    Decode(DecodeArgs),
    /// Measure PSNR between two images
    Eval(EvalArgs),
    /// Encode/decode/measure over a QP ladder, producing a CSV curve
    Sweep(SweepArgs),
    /// Sweep both structures and report the BD-rate of 2-D vs the anchor
    Compare(CompareArgs),
    /// Scale a single motion vector between view coordinates
    ScaleMv(ScaleMvArgs),
}

/// Where the views come from: either a lenslet raster to decompose on the
/// fly or a directory of per-view files.
#[derive(Args)]
pub struct GridInput {
    /// Lenslet image (raw planar with a .json sidecar, or .pgm)
    #[arg(long, conflicts_with = "views")]
    pub input: Option<PathBuf>,
    /// Directory of per-view files written by decompose
    #[arg(long)]
    pub views: Option<PathBuf>,
    /// Geometry JSON path, or the literal `default` for the built-in
    /// 13x13 grid with its four corners removed
    #[arg(long)]
    pub geometry: String,
}

#[derive(Args)]
pub struct CodecFlags {
    /// JSON file with base codec settings; explicit flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Intra QP (0..=51)
    #[arg(long)]
    pub qp: Option<u8>,
    /// Luma block size (8, 16 or 32)
    #[arg(long)]
    pub block_size: Option<u32>,
    /// Integer-pel search radius
    #[arg(long)]
    pub search_range: Option<u32>,
    /// Reference list length
    #[arg(long)]
    pub n_per_list: Option<u32>,
    /// GOP size of the 1-D anchor
    #[arg(long)]
    pub gop: Option<u32>,
    /// Anchor view order: serpentine or raster
    #[arg(long)]
    pub anchor_order: Option<String>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Lenslet image (raw planar with .json sidecar, or .pgm)
    #[arg(long)]
    input: PathBuf,
    /// Geometry JSON path or `default`
    #[arg(long)]
    geometry: String,
    /// Directory for the per-view files
    #[arg(long)]
    output_dir: PathBuf,
    /// Per-view file format: raw or pgm
    #[arg(long, default_value = "raw")]
    format: String,
    /// Manifest path (defaults next to the output directory)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Geometry JSON path or `default`
    #[arg(long)]
    geometry: String,
    /// Schedule JSON output
    #[arg(long)]
    output: PathBuf,
    /// Reference list length used for the embedded list hints
    #[arg(long, default_value_t = 4)]
    n_per_list: u32,
    /// Restrict the replay to one quadrant (TL, TR, BR or BL)
    #[arg(long)]
    quadrant: Option<String>,
    /// Also write the buffer occupancy timeline as JSON
    #[arg(long)]
    dpb_report: Option<PathBuf>,
    /// Also write a plain-text per-frame configuration table
    #[arg(long)]
    hm_table: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    grid: GridInput,
    /// Pseudo-sequence structure: 2d or 1d
    #[arg(long, default_value = "2d")]
    structure: String,
    /// Coded stream output
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    codec: CodecFlags,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Coded stream
    #[arg(long)]
    input: PathBuf,
    /// Directory for the reconstructed view files
    #[arg(long)]
    output_dir: PathBuf,
    /// Per-view file format: raw or pgm
    #[arg(long, default_value = "raw")]
    format: String,
    /// Check the output against the encoder reconstruction digest
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Reference image (raw planar with sidecar, or .pgm)
    #[arg(long)]
    reference: PathBuf,
    /// Test image
    #[arg(long)]
    test: PathBuf,
    /// Report JSON output (stdout when omitted)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    grid: GridInput,
    /// Pseudo-sequence structure: 2d or 1d
    #[arg(long, default_value = "2d")]
    structure: String,
    /// Comma-separated intra QP ladder
    #[arg(long, default_value = "15,20,25,30")]
    qps: String,
    /// CSV output
    #[arg(long)]
    csv: PathBuf,
    /// Gnuplot-compatible data output
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Concurrent QP jobs
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Image label for the CSV rows
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    codec: CodecFlags,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    grid: GridInput,
    /// Structures to compare; must list both 2d and 1d
    #[arg(long, default_value = "2d,1d")]
    structures: String,
    /// Comma-separated intra QP ladder
    #[arg(long, default_value = "15,20,25,30")]
    qps: String,
    /// BD-rate report JSON output
    #[arg(long)]
    output: PathBuf,
    /// Combined CSV of both curves
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Curve fit: cubic or piecewise
    #[arg(long, default_value = "cubic")]
    bd_method: String,
    /// Concurrent QP jobs
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Image label for the CSV rows
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    codec: CodecFlags,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ScaleMvArgs {
    /// Motion vector in quarter-pel units, `x,y`
    #[arg(long)]
    mv: String,
    /// Current view coordinate `x,y`
    #[arg(long)]
    cur: String,
    /// Current reference view coordinate `x,y`
    #[arg(long)]
    cur_ref: String,
    /// Donor block's reference view coordinate `x,y`
    #[arg(long)]
    donor_ref: String,
    /// Collocated view coordinate `x,y`; selects temporal scaling
    #[arg(long)]
    colocated: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Decompose(a) => commands::decompose(a),
        Command::Schedule(a) => commands::schedule(a),
        Command::Encode(a) => commands::encode(a),
        Command::Decode(a) => commands::decode(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Compare(a) => commands::compare(a),
        Command::ScaleMv(a) => commands::scale_mv(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
