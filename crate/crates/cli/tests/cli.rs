// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use reefstitch::imaging::ImageBuffer;
use reefstitch::io::{load_image, read_layout, save_image};
use reefstitch::pipeline::{synth_outputs, RunReport};
use tempfile::TempDir;

fn reefstitch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reefstitch"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "synth",
        path(dir),
        "--frames",
        "4",
        "--fish",
        "3",
        "--width",
        "120",
        "--height",
        "90",
    ];
    args.extend_from_slice(extra);
    let out = reefstitch(&args);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn missing_annotations_names_the_path() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    synth(&data, &[]);
    let missing = dir.path().join("no_such_annotations.csv");
    let out = reefstitch(&[
        "pipeline",
        path(&data.join(synth_outputs::FRAMES_DIR)),
        path(&data.join(synth_outputs::CORRESPONDENCES)),
        path(&missing),
        path(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err = stderr(&out);
    assert!(err.starts_with("error[IO_ERROR]: "), "{err}");
    assert!(err.contains("no_such_annotations.csv"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn single_frame_stitch_reproduces_the_frame() {
    let dir = TempDir::new().unwrap();
    let frames = dir.path().join("frames");
    fs::create_dir(&frames).unwrap();
    let img = ImageBuffer::from_fn(13, 7, |x, y| [x as f64 / 12.0, y as f64 / 6.0, 0.5]).unwrap();
    save_image(&img, &frames.join("f0.png")).unwrap();
    let corr = dir.path().join("c.csv");
    fs::write(&corr, "frame_index,src_x,src_y,ref_x,ref_y\n").unwrap();
    let map = dir.path().join("map.ppm");
    let out = reefstitch(&["stitch", path(&frames), path(&corr), path(&map)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(load_image(&map).unwrap(), load_image(&frames.join("f0.png")).unwrap());
    let layout = read_layout(&dir.path().join("map.layout.json")).unwrap();
    assert_eq!((layout.canvas_width, layout.canvas_height), (13, 7));
    assert!(dir.path().join("map.report.json").is_file());
}

#[test]
fn pipeline_on_clean_synth_converges() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--seed", "4"]);
    let out_dir = dir.path().join("out");
    let out = reefstitch(&[
        "pipeline",
        path(&data.join(synth_outputs::FRAMES_DIR)),
        path(&data.join(synth_outputs::CORRESPONDENCES)),
        path(&data.join(synth_outputs::ANNOTATIONS)),
        path(&out_dir),
        "--degrees",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).is_empty(), "{}", stderr(&out));
    let report: RunReport = reefstitch::io::read_json(&out_dir.join("report.json")).unwrap();
    assert_eq!(report.frames.len(), 4);
    assert!(report.frames[1..]
        .iter()
        .all(|f| f.registration.as_ref().unwrap().converged));
}

#[test]
fn stages_compose() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--seed", "8"]);
    let frames = data.join(synth_outputs::FRAMES_DIR);
    let corrected = dir.path().join("corrected");
    assert!(reefstitch(&["correct", path(&frames), path(&corrected)])
        .status
        .success());
    assert_eq!(fs::read_dir(&corrected).unwrap().count(), 4);

    let map = dir.path().join("map.png");
    let corr = data.join(synth_outputs::CORRESPONDENCES);
    let out = reefstitch(&[
        "stitch",
        path(&corrected),
        path(&corr),
        path(&map),
        "--interp",
        "nearest",
        "--seed",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let layout = dir.path().join("map.layout.json");
    let ann = data.join(synth_outputs::ANNOTATIONS);
    let overlay = dir.path().join("tracks.png");
    assert!(
        reefstitch(&["trajectories", path(&map), path(&layout), path(&ann), path(&overlay)])
            .status
            .success()
    );
    assert_ne!(load_image(&overlay).unwrap(), load_image(&map).unwrap());

    let prefix = dir.path().join("feat");
    let out = reefstitch(&[
        "features",
        path(&layout),
        path(&ann),
        path(&prefix),
        "--fps",
        "6",
        "--neighbor-point",
        "head",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = fs::read_to_string(dir.path().join("feat_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn usage_and_validation_exit_codes() {
    assert_eq!(reefstitch(&[]).status.code(), Some(1));
    assert_eq!(reefstitch(&["stitch", "a"]).status.code(), Some(1));
    assert_eq!(reefstitch(&["--help"]).status.code(), Some(0));

    let dir = TempDir::new().unwrap();
    let out = reefstitch(&["features", "l.json", "a.csv", "p", "--fps", "0"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).starts_with("error[INVALID_FPS]"), "{}", stderr(&out));

    let corr = dir.path().join("c.csv");
    fs::write(&corr, "frame_index,src_x,src_y,ref_x,ref_y\n1,1,x,3,4\n").unwrap();
    let frames = dir.path().join("frames");
    fs::create_dir(&frames).unwrap();
    save_image(&ImageBuffer::black(4, 4).unwrap(), &frames.join("a.png")).unwrap();
    let out = reefstitch(&["stitch", path(&frames), path(&corr), path(&dir.path().join("m.png"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("c.csv:2"), "{}", stderr(&out));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_reefstitch"))
        .args(["synth", "/nonexistent/never"])
        .env("REEFSTITCH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("REEFSTITCH_THREADS"));
}
