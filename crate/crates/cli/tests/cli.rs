//! End-to-end tests of the binary's pipelines, exit codes and manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lfseq_core::image::ChromaFormat;
use lfseq_core::synth;
use lfseq_core::view_grid::GridGeometry;
use lfseq_core::{io, view_grid};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lfseq"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Writes a synthetic lenslet plus geometry into `dir`, returning paths.
fn make_lenslet(dir: &Path) -> (PathBuf, PathBuf) {
    let geom = GridGeometry::new(3, 3, Default::default(), 3).unwrap();
    let grid = synth::translating_texture(&geom, 16, 16, 1, 8, ChromaFormat::C444, 77).unwrap();
    // Interleave the views back into a lenslet raster.
    let mut lenslet = lfseq_core::Image::new(48, 48, 8, ChromaFormat::C444).unwrap();
    for poc in grid.pocmap.pocs() {
        let cell = grid.pocmap.cell_of(poc).unwrap();
        let view = grid.view(poc).unwrap();
        for pi in 0..3 {
            for y in 0..16 {
                for x in 0..16 {
                    lenslet.planes[pi].set(
                        x * 3 + cell.col as usize,
                        y * 3 + cell.row as usize,
                        view.planes[pi].get(x, y),
                    );
                }
            }
        }
    }
    let lens_path = dir.join("lenslet.raw");
    fs::write(&lens_path, io::image_to_raw(&lenslet)).unwrap();
    fs::write(
        io::sidecar_path(&lens_path),
        serde_json::to_vec(&io::RawSidecar::for_image(&lenslet)).unwrap(),
    )
    .unwrap();
    let geom_path = dir.join("geom.json");
    fs::write(&geom_path, serde_json::to_vec(&geom).unwrap()).unwrap();
    (lens_path, geom_path)
}

#[test]
fn schedule_reports_buffer_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sched.json");
    let full = run(&[
        "schedule",
        "--geometry",
        "default",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(full.status.success());
    assert!(stdout(&full).contains("peak DPB occupancy: 12"));
    let tl = run(&[
        "schedule",
        "--geometry",
        "default",
        "--quadrant",
        "TL",
        "--output",
        dir.path().join("tl.json").to_str().unwrap(),
    ]);
    assert!(tl.status.success());
    assert!(stdout(&tl).contains("peak DPB occupancy: 10"));
}

#[test]
fn schedule_trivial_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let geom_path = dir.path().join("g1.json");
    fs::write(
        &geom_path,
        serde_json::to_vec(&GridGeometry::full(1, 1).unwrap()).unwrap(),
    )
    .unwrap();
    let out = run(&[
        "schedule",
        "--geometry",
        geom_path.to_str().unwrap(),
        "--output",
        dir.path().join("s.json").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("1 frames scheduled"));
    assert!(stdout(&out).contains("peak DPB occupancy: 0"));
}

#[test]
fn missing_input_exits_2_without_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("views");
    let out = run(&[
        "decompose",
        "--input",
        dir.path().join("absent.raw").to_str().unwrap(),
        "--geometry",
        "default",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn usage_error_from_clap_is_exit_2() {
    let out = run(&["schedule", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn decompose_encode_decode_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (lens, geom) = make_lenslet(dir.path());
    let views = dir.path().join("views");
    let out = run(&[
        "decompose",
        "--input",
        lens.to_str().unwrap(),
        "--geometry",
        geom.to_str().unwrap(),
        "--output-dir",
        views.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("decomposed 9 views"));

    let stream = dir.path().join("out.lfb");
    let out = run(&[
        "encode",
        "--views",
        views.to_str().unwrap(),
        "--geometry",
        geom.to_str().unwrap(),
        "--structure",
        "2d",
        "--qp",
        "22",
        "--output",
        stream.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let rec = dir.path().join("rec");
    let out = run(&[
        "decode",
        "--input",
        stream.to_str().unwrap(),
        "--output-dir",
        rec.to_str().unwrap(),
        "--verify",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("sample-exact"));

    // Decoded views load back under the same geometry.
    let g = io::read_geometry(&geom).unwrap();
    let decoded = io::read_view_dir(&rec, &g).unwrap();
    assert_eq!(decoded.views.len(), 9);
}

#[test]
fn encode_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (lens, geom) = make_lenslet(dir.path());
    let mut streams = Vec::new();
    for name in ["a.lfb", "b.lfb"] {
        let stream = dir.path().join(name);
        let out = run(&[
            "encode",
            "--input",
            lens.to_str().unwrap(),
            "--geometry",
            geom.to_str().unwrap(),
            "--qp",
            "20",
            "--output",
            stream.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        streams.push(fs::read(&stream).unwrap());
    }
    assert_eq!(streams[0], streams[1]);
    // Manifests agree on the output digest.
    let ma: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a.lfb.manifest.json")).unwrap()).unwrap();
    let mb: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("b.lfb.manifest.json")).unwrap()).unwrap();
    assert_eq!(
        ma["outputs"][0]["sha256"], mb["outputs"][0]["sha256"],
        "rerun with the same args must reproduce identical output hashes"
    );
    assert_eq!(ma["params"], mb["params"]);
}

#[test]
fn decompose_round_trips_through_recompose() {
    let dir = tempfile::tempdir().unwrap();
    let (lens, geom) = make_lenslet(dir.path());
    let views = dir.path().join("views");
    assert!(run(&[
        "decompose",
        "--input",
        lens.to_str().unwrap(),
        "--geometry",
        geom.to_str().unwrap(),
        "--output-dir",
        views.to_str().unwrap(),
    ])
    .status
    .success());
    let g = io::read_geometry(&geom).unwrap();
    let grid = io::read_view_dir(&views, &g).unwrap();
    let original = io::read_raw_image(&lens).unwrap();
    let back = view_grid::recompose(&grid, &original).unwrap();
    assert_eq!(back, original);
}

#[test]
fn eval_reports_lossless_for_identical_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (lens, _) = make_lenslet(dir.path());
    let out = run(&[
        "eval",
        "--reference",
        lens.to_str().unwrap(),
        "--test",
        lens.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("\"status\": \"lossless\""));
}

#[test]
fn scale_mv_single_shot() {
    let out = run(&[
        "scale-mv",
        "--mv",
        "8,-4",
        "--cur",
        "0,0",
        "--cur-ref",
        "2,1",
        "--donor-ref",
        "4,2",
    ]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["mv"], serde_json::json!([4, -2]));
    assert_eq!(json["kind"], "spatial");
}

#[test]
fn compare_produces_bd_report() {
    let dir = tempfile::tempdir().unwrap();
    let (lens, geom) = make_lenslet(dir.path());
    let report = dir.path().join("report.json");
    let csv = dir.path().join("curves.csv");
    let out = run(&[
        "compare",
        "--input",
        lens.to_str().unwrap(),
        "--geometry",
        geom.to_str().unwrap(),
        "--structures",
        "2d,1d",
        "--qps",
        "15,20,25,30",
        "--output",
        report.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("BD-rate of 2d vs 1d anchor"));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert!(json["bd_rate_y"].is_number());
    assert_eq!(json["curve_2d"]["points"].as_array().unwrap().len(), 4);
    let csv_text = fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("image,structure,qp,bits,psnr_y,psnr_yuv\n"));
    // Four rows per structure plus the header.
    assert_eq!(csv_text.lines().count(), 9);
}

#[test]
fn decompose_default_geometry_yields_165_view_files() {
    let dir = tempfile::tempdir().unwrap();
    // A 13x13-pitch lenslet spanning 13x13 lenses: 169x169 raster.
    let geom = GridGeometry::default_lf();
    let mut lenslet = lfseq_core::Image::new(169, 169, 8, ChromaFormat::C444).unwrap();
    for (i, v) in lenslet.planes[0].data.iter_mut().enumerate() {
        *v = (i % 251) as u16;
    }
    let lens_path = dir.path().join("lens.raw");
    fs::write(&lens_path, io::image_to_raw(&lenslet)).unwrap();
    fs::write(
        io::sidecar_path(&lens_path),
        serde_json::to_vec(&io::RawSidecar::for_image(&lenslet)).unwrap(),
    )
    .unwrap();
    let geom_path = dir.path().join("geom.json");
    fs::write(&geom_path, serde_json::to_vec(&geom).unwrap()).unwrap();

    let out_dir = dir.path().join("views");
    let out = run(&[
        "decompose",
        "--input",
        lens_path.to_str().unwrap(),
        "--geometry",
        geom_path.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--format",
        "pgm",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("decomposed 165 views"));
    let views = fs::read_dir(&out_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "pgm"))
        .count();
    assert_eq!(views, 165);
}
