use std::fs;
use std::path::{Path, PathBuf};

use lfseq_core::codec::{self, AnchorOrder, CodecConfig, Structure};
use lfseq_core::eval::{self, BdMethod};
use lfseq_core::io;
use lfseq_core::mvscale::{self, MotionVector, ScalingAnchors};
use lfseq_core::scheduler::{self, Quadrant};
use lfseq_core::view_grid::{decompose_lenslet, GridGeometry, ViewCoord, ViewGrid};
use lfseq_core::{Error, Image};

use crate::manifest::{manifest_path_for, write_manifest, OutputStager, RunManifest};
use crate::{CliError, CliResult, CodecFlags, GridInput};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Inputs must exist up front; a missing path is a usage error.
fn require_exists(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!(
            "input path {} does not exist",
            path.display()
        )))
    }
}

fn load_geometry(spec: &str) -> CliResult<GridGeometry> {
    if spec == "default" {
        return Ok(GridGeometry::default_lf());
    }
    let path = Path::new(spec);
    require_exists(path)?;
    Ok(io::read_geometry(path)?)
}

/// Reads an image by extension: `.pgm` or raw planar with a sidecar.
fn load_image(path: &Path) -> CliResult<Image> {
    require_exists(path)?;
    let img = if path.extension().is_some_and(|e| e == "pgm") {
        io::image_from_pgm(&fs::read(path).map_err(Error::Io)?)?
    } else {
        require_exists(&io::sidecar_path(path))?;
        io::read_raw_image(path)?
    };
    Ok(img)
}

impl GridInput {
    /// Loads the views, returning the original lenslet too when the grid
    /// was decomposed on the fly.
    fn load(&self) -> CliResult<(ViewGrid, Option<Image>, PathBuf)> {
        let geom = load_geometry(&self.geometry)?;
        match (&self.input, &self.views) {
            (Some(lenslet_path), None) => {
                let lenslet = load_image(lenslet_path)?;
                let grid = decompose_lenslet(&lenslet, &geom)?;
                Ok((grid, Some(lenslet), lenslet_path.clone()))
            }
            (None, Some(dir)) => {
                require_exists(dir)?;
                let grid = io::read_view_dir(dir, &geom)?;
                Ok((grid, None, dir.clone()))
            }
            _ => Err(usage("provide exactly one of --input or --views")),
        }
    }
}

#[derive(serde::Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    block_size: Option<u32>,
    search_range: Option<u32>,
    qp: Option<u8>,
    n_per_list: Option<u32>,
    class_qp_offsets: Option<[u8; 4]>,
    gop_1d: Option<u32>,
    anchor_order: Option<AnchorOrder>,
}

impl CodecFlags {
    /// Defaults, overlaid by the config file, overlaid by explicit flags.
    fn resolve(&self) -> CliResult<CodecConfig> {
        let mut cfg = CodecConfig::default();
        if let Some(path) = &self.config {
            require_exists(path)?;
            let file: ConfigFile =
                serde_json::from_slice(&fs::read(path).map_err(Error::Io)?).map_err(Error::Json)?;
            if let Some(v) = file.block_size {
                cfg.block_size = v;
            }
            if let Some(v) = file.search_range {
                cfg.search_range = v;
            }
            if let Some(v) = file.qp {
                cfg.qp = v;
            }
            if let Some(v) = file.n_per_list {
                cfg.n_per_list = v;
            }
            if let Some(v) = file.class_qp_offsets {
                cfg.class_qp_offsets = v;
            }
            if let Some(v) = file.gop_1d {
                cfg.gop_1d = v;
            }
            if let Some(v) = file.anchor_order {
                cfg.anchor_order = v;
            }
        }
        if let Some(v) = self.qp {
            cfg.qp = v;
        }
        if let Some(v) = self.block_size {
            cfg.block_size = v;
        }
        if let Some(v) = self.search_range {
            cfg.search_range = v;
        }
        if let Some(v) = self.n_per_list {
            cfg.n_per_list = v;
        }
        if let Some(v) = self.gop {
            cfg.gop_1d = v;
        }
        if let Some(v) = &self.anchor_order {
            cfg.anchor_order = match v.as_str() {
                "serpentine" => AnchorOrder::Serpentine,
                "raster" => AnchorOrder::Raster,
                other => return Err(usage(format!("unknown anchor order {other:?}"))),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn record(&self, cfg: &CodecConfig, manifest: &mut RunManifest) -> CliResult<()> {
        manifest.param("config", serde_json::to_string(cfg).map_err(Error::Json)?);
        Ok(())
    }
}

fn parse_qps(spec: &str) -> CliResult<Vec<u8>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let qp: u8 = part
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad QP value {part:?}")))?;
        if qp > 51 {
            return Err(usage(format!("QP {qp} out of range")));
        }
        out.push(qp);
    }
    if out.is_empty() {
        return Err(usage("empty QP ladder"));
    }
    Ok(out)
}

fn parse_pair(spec: &str, what: &str) -> CliResult<(i32, i32)> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 2 {
        return Err(usage(format!("{what} must be `x,y`, got {spec:?}")));
    }
    let x = parts[0]
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad {what} x component {:?}", parts[0])))?;
    let y = parts[1]
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad {what} y component {:?}", parts[1])))?;
    Ok((x, y))
}

/// Stages every view of a grid plus geometry and POC map files.
fn stage_views(
    stager: &mut OutputStager,
    grid: &ViewGrid,
    dir: &Path,
    format: &str,
) -> CliResult<()> {
    let as_pgm = match format {
        "pgm" => true,
        "raw" => false,
        other => return Err(usage(format!("unknown view format {other:?}"))),
    };
    for poc in grid.pocmap.pocs() {
        let cell = grid.pocmap.cell_of(poc)?;
        let stem = io::view_stem(cell.row, cell.col, poc);
        let view = grid.view(poc)?;
        if as_pgm {
            stager.stage(&dir.join(format!("{stem}.pgm")), &io::image_to_pgm(view))?;
        } else {
            let raw_path = dir.join(format!("{stem}.raw"));
            stager.stage(&raw_path, &io::image_to_raw(view))?;
            stager.stage(
                &io::sidecar_path(&raw_path),
                &serde_json::to_vec_pretty(&io::RawSidecar::for_image(view))
                    .map_err(Error::Json)?,
            )?;
        }
    }
    stager.stage(
        &dir.join("geometry.json"),
        &serde_json::to_vec_pretty(&grid.geom).map_err(Error::Json)?,
    )?;
    stager.stage(
        &dir.join("pocmap.json"),
        &serde_json::to_vec_pretty(&grid.pocmap).map_err(Error::Json)?,
    )?;
    Ok(())
}

pub fn decompose(args: crate::DecomposeArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("decompose");
    manifest.param("geometry", &args.geometry);
    manifest.param("format", &args.format);
    require_exists(&args.input)?;
    let geom = load_geometry(&args.geometry)?;
    let lenslet = load_image(&args.input)?;
    manifest.input(&args.input)?;
    let grid = decompose_lenslet(&lenslet, &geom)?;

    let mut stager = OutputStager::new();
    stage_views(&mut stager, &grid, &args.output_dir, &args.format)?;
    stager.commit(&mut manifest)?;
    let manifest_path = args
        .manifest
        .unwrap_or_else(|| manifest_path_for(&args.output_dir));
    write_manifest(&manifest, &manifest_path)?;
    println!(
        "decomposed {} views of {}x{} into {}",
        grid.views.len(),
        grid.view_width(),
        grid.view_height(),
        args.output_dir.display()
    );
    Ok(())
}

/// Plain-text per-frame table: POC, QP offset and the list hints.
fn hm_table(schedule: &scheduler::CodingSchedule) -> String {
    let mut out = String::from("# poc  qp_offset  list0 | list1\n");
    for &poc in &schedule.order {
        let f = schedule.frame(poc).expect("frame in schedule");
        let offset = if poc == 0 { 0 } else { f.class.qp_offset() };
        let fmt_list = |l: &[u32]| {
            if l.is_empty() {
                "-".to_string()
            } else {
                l.iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            }
        };
        out.push_str(&format!(
            "{poc}  {offset}  {} | {}\n",
            fmt_list(&f.list0),
            fmt_list(&f.list1)
        ));
    }
    out
}

pub fn schedule(args: crate::ScheduleArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("schedule");
    manifest.param("geometry", &args.geometry);
    manifest.param("n_per_list", args.n_per_list);
    let geom = load_geometry(&args.geometry)?;
    let filter = match &args.quadrant {
        Some(q) => {
            manifest.param("quadrant", q);
            Some(Quadrant::parse(q)?)
        }
        None => None,
    };
    let mut schedule = scheduler::build_schedule_filtered(&geom, filter)?;
    lfseq_core::reflists::populate_lists(&mut schedule, args.n_per_list as usize)?;
    let timeline = scheduler::simulate_dpb(&schedule)?;

    let mut stager = OutputStager::new();
    stager.stage(&args.output, &schedule.to_canonical_json()?)?;
    if let Some(report) = &args.dpb_report {
        stager.stage(
            report,
            &serde_json::to_vec_pretty(&timeline).map_err(Error::Json)?,
        )?;
    }
    if let Some(table) = &args.hm_table {
        stager.stage(table, hm_table(&schedule).as_bytes())?;
    }
    stager.commit(&mut manifest)?;
    write_manifest(
        &manifest,
        &args
            .manifest
            .unwrap_or_else(|| manifest_path_for(&args.output)),
    )?;
    println!(
        "{} frames scheduled; peak DPB occupancy: {}",
        schedule.order.len(),
        timeline.peak
    );
    Ok(())
}

pub fn encode(args: crate::EncodeArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("encode");
    manifest.param("structure", &args.structure);
    manifest.param("geometry", &args.grid.geometry);
    let structure = Structure::parse(&args.structure)?;
    let cfg = args.codec.resolve()?;
    args.codec.record(&cfg, &mut manifest)?;
    let (grid, _lenslet, input_path) = args.grid.load()?;
    manifest.input(&input_path).ok();

    let result = codec::encode_grid(&grid, structure, &cfg)?;
    let mut stager = OutputStager::new();
    stager.stage(&args.output, &result.bytes)?;
    stager.commit(&mut manifest)?;
    write_manifest(
        &manifest,
        &args
            .manifest
            .unwrap_or_else(|| manifest_path_for(&args.output)),
    )?;
    let total: u64 = result.stats.iter().map(|s| s.bits).sum();
    println!(
        "encoded {} frames, {} bytes ({} payload bits)",
        result.stats.len(),
        result.bytes.len(),
        total
    );
    Ok(())
}

pub fn decode(args: crate::DecodeArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("decode");
    require_exists(&args.input)?;
    manifest.input(&args.input)?;
    manifest.param("format", &args.format);
    let bytes = fs::read(&args.input).map_err(Error::Io)?;
    let result = codec::decode_sequence(&bytes)?;
    if args.verify {
        result.verify_reconstruction()?;
        println!("verify: sample-exact against the encoder reconstruction");
    }
    let mut stager = OutputStager::new();
    stage_views(&mut stager, &result.grid, &args.output_dir, &args.format)?;
    stager.commit(&mut manifest)?;
    write_manifest(
        &manifest,
        &args
            .manifest
            .unwrap_or_else(|| manifest_path_for(&args.output_dir)),
    )?;
    println!(
        "decoded {} views into {}",
        result.grid.views.len(),
        args.output_dir.display()
    );
    Ok(())
}

pub fn eval(args: crate::EvalArgs) -> CliResult<()> {
    let reference = load_image(&args.reference)?;
    let test = load_image(&args.test)?;
    let report = eval::psnr(&reference, &test)?;
    let status = if report.lossless() {
        "lossless"
    } else {
        "lossy"
    };
    let fmt = |v: f64| {
        if v.is_infinite() {
            serde_json::Value::String("lossless".into())
        } else {
            serde_json::json!(v)
        }
    };
    let json = serde_json::json!({
        "status": status,
        "psnr_y": fmt(report.psnr_y),
        "psnr_u": fmt(report.psnr_u),
        "psnr_v": fmt(report.psnr_v),
        "psnr_yuv": fmt(report.psnr_yuv),
    });
    let text = serde_json::to_string_pretty(&json).map_err(Error::Json)?;
    match &args.output {
        Some(path) => {
            let mut manifest = RunManifest::new("eval");
            manifest.input(&args.reference)?;
            manifest.input(&args.test)?;
            let mut stager = OutputStager::new();
            stager.stage(path, text.as_bytes())?;
            stager.commit(&mut manifest)?;
            write_manifest(&manifest, &manifest_path_for(path))?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn grid_label(args_label: &Option<String>, input_path: &Path) -> String {
    args_label.clone().unwrap_or_else(|| {
        input_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "grid".into())
    })
}

pub fn sweep(args: crate::SweepArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("sweep");
    let structure = Structure::parse(&args.structure)?;
    let ladder = parse_qps(&args.qps)?;
    let cfg = args.codec.resolve()?;
    args.codec.record(&cfg, &mut manifest)?;
    manifest.param("structure", &args.structure);
    manifest.param("qps", &args.qps);
    manifest.param("jobs", args.jobs);
    let (grid, lenslet, input_path) = args.grid.load()?;
    manifest.input(&input_path).ok();
    let label = grid_label(&args.label, &input_path);

    let outcome = eval::sweep(&grid, structure, &ladder, &cfg, args.jobs, lenslet.as_ref())?;
    let mut stager = OutputStager::new();
    stager.stage(
        &args.csv,
        eval::curve_to_csv(&label, &outcome.curve).as_bytes(),
    )?;
    if let Some(plot) = &args.plot {
        stager.stage(plot, eval::curve_to_plot_data(&outcome.curve).as_bytes())?;
    }
    stager.commit(&mut manifest)?;
    write_manifest(
        &manifest,
        &args
            .manifest
            .unwrap_or_else(|| manifest_path_for(&args.csv)),
    )?;
    for p in &outcome.curve.points {
        println!(
            "qp {:2}: {:>10} bits, psnr_y {}",
            p.qp,
            p.bitrate,
            if p.psnr_y.is_infinite() {
                "lossless".to_string()
            } else {
                format!("{:.3}", p.psnr_y)
            }
        );
    }
    if ladder.len() < 4 {
        println!("note: BD-rate unavailable, the ladder has fewer than 4 points");
    }
    Ok(())
}

pub fn compare(args: crate::CompareArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("compare");
    let mut wanted: Vec<&str> = args.structures.split(',').map(|s| s.trim()).collect();
    wanted.sort_unstable();
    if wanted != ["1d", "2d"] {
        return Err(usage(
            "compare needs --structures listing both 2d and 1d".to_string(),
        ));
    }
    let ladder = parse_qps(&args.qps)?;
    if ladder.len() < 4 {
        return Err(usage("BD-rate needs at least 4 ladder points"));
    }
    let method = match args.bd_method.as_str() {
        "cubic" => BdMethod::Cubic,
        "piecewise" => BdMethod::PiecewiseCubic,
        other => return Err(usage(format!("unknown BD method {other:?}"))),
    };
    let cfg = args.codec.resolve()?;
    args.codec.record(&cfg, &mut manifest)?;
    manifest.param("structures", &args.structures);
    manifest.param("qps", &args.qps);
    manifest.param("bd_method", &args.bd_method);
    let (grid, lenslet, input_path) = args.grid.load()?;
    manifest.input(&input_path).ok();
    let label = grid_label(&args.label, &input_path);

    let report = eval::compare(&grid, &ladder, &cfg, args.jobs, lenslet.as_ref(), method)?;
    let mut stager = OutputStager::new();
    stager.stage(
        &args.output,
        &serde_json::to_vec_pretty(&report).map_err(Error::Json)?,
    )?;
    if let Some(csv) = &args.csv {
        let mut text = eval::curve_to_csv(&label, &report.curve_2d);
        for line in eval::curve_to_csv(&label, &report.curve_1d).lines().skip(1) {
            text.push_str(line);
            text.push('\n');
        }
        stager.stage(csv, text.as_bytes())?;
    }
    stager.commit(&mut manifest)?;
    write_manifest(
        &manifest,
        &args
            .manifest
            .unwrap_or_else(|| manifest_path_for(&args.output)),
    )?;
    println!(
        "BD-rate of 2d vs 1d anchor: Y {:.2}%, YUV {:.2}%",
        report.bd_rate_y, report.bd_rate_yuv
    );
    Ok(())
}

pub fn scale_mv(args: crate::ScaleMvArgs) -> CliResult<()> {
    let (mvx, mvy) = parse_pair(&args.mv, "--mv")?;
    let cur = parse_pair(&args.cur, "--cur")?;
    let cur_ref = parse_pair(&args.cur_ref, "--cur-ref")?;
    let donor_ref = parse_pair(&args.donor_ref, "--donor-ref")?;
    let colocated = args
        .colocated
        .as_deref()
        .map(|s| parse_pair(s, "--colocated"))
        .transpose()?;
    let anchors = ScalingAnchors {
        cur: ViewCoord::new(cur.0, cur.1),
        cur_ref: ViewCoord::new(cur_ref.0, cur_ref.1),
        donor_ref: ViewCoord::new(donor_ref.0, donor_ref.1),
        colocated: colocated.map(|(x, y)| ViewCoord::new(x, y)),
    };
    let mv = MotionVector::new(mvx, mvy);
    let scaled = if anchors.colocated.is_some() {
        mvscale::scale_temporal(mv, &anchors)
    } else {
        mvscale::scale_spatial(mv, &anchors)
    };
    let json = serde_json::json!({
        "kind": if anchors.colocated.is_some() { "temporal" } else { "spatial" },
        "mv": [scaled.mv.x, scaled.mv.y],
        "x_copied": scaled.x_copied,
        "y_copied": scaled.y_copied,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&json).map_err(Error::Json)?
    );
    Ok(())
}
