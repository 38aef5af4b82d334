// SPDX-License-Identifier: Apache-2.0

//! Batch stages as used by the command line: each `run_*` function reads its
//! inputs from disk, writes its outputs and returns a [`RunReport`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::{correct_frame, AwbFallback, CorrectionMethod};
use crate::error::{Error, Result};
use crate::estimation::RansacConfig;
use crate::features::{build_feature_table, NeighborPointMode, DEFAULT_FPS};
use crate::imaging::{AffineTransform, ImageBuffer, Point2, StitchLayout};
use crate::io;
use crate::stitch::{stitch_sequence, StitchConfig, StitchOutput};
use crate::synth::{generate_scenario, ScenarioSpec};
use crate::trajectory::{build_trajectories, render_trajectory_map, TrajectoryStyle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub fps: f64,
    pub ransac: RansacConfig,
    pub stitch: StitchConfig,
    pub awb_fallback: AwbFallback,
    pub angles_in_degrees: bool,
    pub neighbor_point_mode: NeighborPointMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fps: DEFAULT_FPS,
            ransac: RansacConfig::default(),
            stitch: StitchConfig::default(),
            awb_fallback: AwbFallback::default(),
            angles_in_degrees: false,
            neighbor_point_mode: NeighborPointMode::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidFps(self.fps));
        }
        self.ransac.validate()?;
        self.stitch.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub pair_count: usize,
    pub inlier_count: usize,
    pub iterations_used: usize,
    pub converged: bool,
    pub mean_inlier_residual: f64,
    pub max_inlier_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_index: usize,
    pub file: Option<String>,
    /// Color correction applied; absent when the stage did not correct.
    pub correction: Option<CorrectionMethod>,
    /// Absent for the reference frame.
    pub registration: Option<RegistrationReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanvasReport {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames: Vec<FrameReport>,
    pub canvas: Option<CanvasReport>,
    pub warnings: Vec<String>,
    /// Wall-clock time per stage, milliseconds.
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunReport {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.timings_ms
            .insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }

    fn frame(&mut self, index: usize) -> &mut FrameReport {
        while self.frames.len() <= index {
            let frame_index = self.frames.len();
            self.frames.push(FrameReport {
                frame_index,
                file: None,
                correction: None,
                registration: None,
            });
        }
        &mut self.frames[index]
    }

    fn record_corrections(&mut self, methods: &[CorrectionMethod]) {
        for (i, m) in methods.iter().enumerate() {
            self.frame(i).correction = Some(*m);
            if *m != CorrectionMethod::AutoWhiteBalance {
                self.warnings
                    .push(format!("frame {i}: white balance fell back to {m:?}"));
            }
        }
    }

    fn record_stitch(&mut self, out: &StitchOutput) {
        self.frame(out.layout.frame_count().saturating_sub(1));
        for r in &out.registrations {
            self.frame(r.frame_index).registration = Some(RegistrationReport {
                pair_count: r.pair_count,
                inlier_count: r.ransac.inlier_count,
                iterations_used: r.ransac.iterations_used,
                converged: r.ransac.converged,
                mean_inlier_residual: r.mean_inlier_residual,
                max_inlier_residual: r.max_inlier_residual,
            });
            if !r.ransac.converged {
                self.warnings.push(format!(
                    "frame {}: RANSAC did not reach consensus ({} of {} inliers)",
                    r.frame_index, r.ransac.inlier_count, r.pair_count
                ));
            }
        }
        self.canvas = Some(CanvasReport {
            width: out.layout.canvas_width,
            height: out.layout.canvas_height,
        });
    }

    fn record_files(&mut self, paths: &[PathBuf]) {
        for (i, p) in paths.iter().enumerate() {
            self.frame(i).file = p.file_name().map(|n| n.to_string_lossy().into_owned());
        }
    }
}

/// Color-corrects frames concurrently; output order matches input order.
pub fn correct_frames(frames: &[ImageBuffer], fallback: AwbFallback) -> Vec<(ImageBuffer, CorrectionMethod)> {
    frames.par_iter().map(|f| correct_frame(f, fallback)).collect()
}

fn read_frames(dir: &Path) -> Result<(Vec<PathBuf>, Vec<ImageBuffer>)> {
    let paths = io::list_frames(dir)?;
    if paths.is_empty() {
        return Err(Error::NoFrames);
    }
    let frames = paths
        .par_iter()
        .map(|p| io::load_image(p))
        .collect::<Result<Vec<_>>>()?;
    Ok((paths, frames))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_corrected(paths: &[PathBuf], frames: &[ImageBuffer], out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    paths
        .par_iter()
        .zip(frames)
        .try_for_each(|(p, f)| io::save_image(f, &out_dir.join(p.file_name().expect("listed file"))))
}

/// `correct`: white-balances every frame of `in_dir` into `out_dir`.
pub fn run_correct(in_dir: &Path, out_dir: &Path, fallback: AwbFallback) -> Result<RunReport> {
    let mut report = RunReport::default();
    let (paths, frames) = report.time("load", || read_frames(in_dir))?;
    report.record_files(&paths);
    let corrected = report.time("correct", || Ok(correct_frames(&frames, fallback)))?;
    let (images, methods): (Vec<_>, Vec<_>) = corrected.into_iter().unzip();
    report.record_corrections(&methods);
    report.time("write", || write_corrected(&paths, &images, out_dir))?;
    Ok(report)
}

/// Sidecar paths written next to a stitched map: `<stem>.layout.json` and
/// `<stem>.report.json`.
pub fn sidecar_paths(map_path: &Path) -> (PathBuf, PathBuf) {
    let stem = map_path.file_stem().unwrap_or_default().to_string_lossy();
    (
        map_path.with_file_name(format!("{stem}.layout.json")),
        map_path.with_file_name(format!("{stem}.report.json")),
    )
}

/// `stitch`: registers and composites the frames of `frames_dir`.
pub fn run_stitch(
    frames_dir: &Path,
    correspondences: &Path,
    out_map: &Path,
    cfg: &PipelineConfig,
) -> Result<RunReport> {
    cfg.validate()?;
    io::image_format_check(out_map)?;
    let mut report = RunReport::default();
    let (paths, frames) = report.time("load", || read_frames(frames_dir))?;
    report.record_files(&paths);
    let sets = io::load_correspondences(correspondences)?;
    let out = report.time("stitch", || stitch_sequence(&frames, &sets, &cfg.ransac, &cfg.stitch))?;
    report.record_stitch(&out);
    let (layout_path, report_path) = sidecar_paths(out_map);
    report.time("write", || {
        io::save_image(&out.map, out_map)?;
        io::write_layout(&out.layout, &layout_path)
    })?;
    io::write_json(&report, &report_path)?;
    Ok(report)
}

/// `trajectories`: draws every fish track over the map.
pub fn run_trajectories(map: &Path, layout: &Path, annotations: &Path, out_image: &Path) -> Result<RunReport> {
    io::image_format_check(out_image)?;
    let mut report = RunReport::default();
    let map = io::load_image(map)?;
    let layout = io::read_layout(layout)?;
    let ann = io::load_annotations(annotations)?;
    report.warnings.extend(ann.skipped.iter().map(|s| s.reason.clone()));
    let overlay = report.time("trajectories", || {
        let tracks = build_trajectories(&ann.annotations, &layout)?;
        Ok(render_trajectory_map(&map, &tracks, &TrajectoryStyle::default()))
    })?;
    io::save_image(&overlay, out_image)?;
    Ok(report)
}

fn features_from(
    layout: &StitchLayout,
    annotations: &io::AnnotationFile,
    prefix: &Path,
    cfg: &PipelineConfig,
    report: &mut RunReport,
) -> Result<()> {
    report
        .warnings
        .extend(annotations.skipped.iter().map(|s| s.reason.clone()));
    let rows = report.time("features", || {
        let tracks = build_trajectories(&annotations.annotations, layout)?;
        build_feature_table(
            &annotations.annotations,
            &tracks,
            layout,
            cfg.fps,
            cfg.neighbor_point_mode,
        )
    })?;
    io::write_feature_tables(&rows, prefix, cfg.angles_in_degrees)?;
    Ok(())
}

/// `features`: per-fish summary and per-frame neighbor tables.
pub fn run_features(layout: &Path, annotations: &Path, prefix: &Path, cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::default();
    let layout = io::read_layout(layout)?;
    let ann = io::load_annotations(annotations)?;
    features_from(&layout, &ann, prefix, cfg, &mut report)?;
    Ok(report)
}

/// Files written by [`run_pipeline`] inside its output directory.
pub mod outputs {
    pub const CORRECTED_DIR: &str = "corrected";
    pub const MAP: &str = "map.png";
    pub const LAYOUT: &str = "layout.json";
    pub const TRAJECTORIES: &str = "trajectories.png";
    pub const FEATURES_PREFIX: &str = "features";
    pub const REPORT: &str = "report.json";
}

/// `pipeline`: correction, stitching, trajectories and features in one run.
pub fn run_pipeline(
    frames_dir: &Path,
    correspondences: &Path,
    annotations: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::default();
    let (paths, frames) = report.time("load", || read_frames(frames_dir))?;
    report.record_files(&paths);
    let sets = io::load_correspondences(correspondences)?;
    let ann = io::load_annotations(annotations)?;
    create_dir(out_dir)?;

    let corrected = report.time("correct", || Ok(correct_frames(&frames, cfg.awb_fallback)))?;
    let (images, methods): (Vec<_>, Vec<_>) = corrected.into_iter().unzip();
    report.record_corrections(&methods);
    write_corrected(&paths, &images, &out_dir.join(outputs::CORRECTED_DIR))?;

    let out = report.time("stitch", || stitch_sequence(&images, &sets, &cfg.ransac, &cfg.stitch))?;
    report.record_stitch(&out);
    io::save_image(&out.map, &out_dir.join(outputs::MAP))?;
    io::write_layout(&out.layout, &out_dir.join(outputs::LAYOUT))?;

    let overlay = report.time("trajectories", || {
        let tracks = build_trajectories(&ann.annotations, &out.layout)?;
        Ok(render_trajectory_map(&out.map, &tracks, &TrajectoryStyle::default()))
    })?;
    io::save_image(&overlay, &out_dir.join(outputs::TRAJECTORIES))?;

    features_from(
        &out.layout,
        &ann,
        &out_dir.join(outputs::FEATURES_PREFIX),
        cfg,
        &mut report,
    )?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    io::write_json(&report, &out_dir.join(outputs::REPORT))?;
    Ok(report)
}

/// Ground truth written by [`run_synth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub seed: u64,
    pub frame_width: usize,
    pub frame_height: usize,
    /// Frame-to-reference transforms, reference first.
    pub transforms: Vec<AffineTransform>,
    /// Texture position of the reference frame's top-left pixel.
    pub texture_origin: Point2,
    /// Indices of corrupted pairs per non-reference frame.
    pub outliers: Vec<Vec<usize>>,
}

/// Files written by [`run_synth`] inside its output directory.
pub mod synth_outputs {
    pub const FRAMES_DIR: &str = "frames";
    pub const CORRESPONDENCES: &str = "correspondences.csv";
    pub const ANNOTATIONS: &str = "annotations.csv";
    pub const TEXTURE: &str = "texture.png";
    pub const GROUND_TRUTH: &str = "ground_truth.json";
}

/// `synth`: writes a generated scenario in the layout `pipeline` consumes.
pub fn run_synth(out_dir: &Path, spec: &ScenarioSpec) -> Result<GroundTruthFile> {
    let scenario = generate_scenario(spec)?;
    let frames_dir = out_dir.join(synth_outputs::FRAMES_DIR);
    create_dir(&frames_dir)?;
    let digits = scenario.frames.len().saturating_sub(1).to_string().len().max(3);
    scenario
        .frames
        .par_iter()
        .enumerate()
        .try_for_each(|(i, f)| io::save_image(f, &frames_dir.join(format!("frame_{i:0digits$}.png"))))?;
    let truth = &scenario.truth;
    io::save_image(&truth.source_texture, &out_dir.join(synth_outputs::TEXTURE))?;
    io::write_correspondences(&truth.correspondences, &out_dir.join(synth_outputs::CORRESPONDENCES))?;
    io::write_annotations(&truth.annotations, &out_dir.join(synth_outputs::ANNOTATIONS))?;
    let file = GroundTruthFile {
        seed: spec.sequence.seed,
        frame_width: spec.sequence.frame_width,
        frame_height: spec.sequence.frame_height,
        transforms: truth.transforms.clone(),
        texture_origin: truth.origin,
        outliers: truth.outliers.clone(),
    };
    io::write_json(&file, &out_dir.join(synth_outputs::GROUND_TRUTH))?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{MotionModel, SequenceSpec};
    use tempfile::TempDir;

    fn small_scenario(seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            sequence: SequenceSpec {
                frame_width: 80,
                frame_height: 60,
                n_frames: 4,
                seed,
                ..Default::default()
            },
            motion: MotionModel {
                max_translation: 12.0,
                max_rotation: 0.1,
                seed,
                ..Default::default()
            },
            n_fish: 3,
        }
    }

    #[test]
    fn synth_then_pipeline_is_clean() {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("data");
        let truth = run_synth(&data, &small_scenario(5)).unwrap();
        assert_eq!(truth.transforms.len(), 4);
        let out = dir.path().join("out");
        let report = run_pipeline(
            &data.join(synth_outputs::FRAMES_DIR),
            &data.join(synth_outputs::CORRESPONDENCES),
            &data.join(synth_outputs::ANNOTATIONS),
            &out,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert!(report.warnings.is_empty(), "{:?}", report.warnings);
        assert_eq!(report.frames.len(), 4);
        assert!(report.frames[1..]
            .iter()
            .all(|f| f.registration.as_ref().unwrap().converged));
        for name in [
            outputs::MAP,
            outputs::LAYOUT,
            outputs::TRAJECTORIES,
            outputs::REPORT,
            "features_summary.csv",
            "features_neighbors.csv",
        ] {
            assert!(out.join(name).is_file(), "{name}");
        }
        assert_eq!(fs::read_dir(out.join(outputs::CORRECTED_DIR)).unwrap().count(), 4);
    }

    #[test]
    fn stitch_writes_sidecars() {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("data");
        run_synth(&data, &small_scenario(6)).unwrap();
        let map = dir.path().join("m.png");
        let report = run_stitch(
            &data.join(synth_outputs::FRAMES_DIR),
            &data.join(synth_outputs::CORRESPONDENCES),
            &map,
            &PipelineConfig::default(),
        )
        .unwrap();
        let (layout, rep) = sidecar_paths(&map);
        assert_eq!(layout, dir.path().join("m.layout.json"));
        let read: RunReport = io::read_json(&rep).unwrap();
        assert_eq!(read.frames.len(), report.frames.len());
        let layout = io::read_layout(&layout).unwrap();
        let canvas = report.canvas.unwrap();
        assert_eq!(
            (layout.canvas_width, layout.canvas_height),
            (canvas.width, canvas.height)
        );
    }

    #[test]
    fn empty_frame_dir() {
        let dir = TempDir::new().unwrap();
        let err = run_correct(dir.path(), &dir.path().join("o"), AwbFallback::GrayWorld).unwrap_err();
        assert!(matches!(err, Error::NoFrames));
    }

    #[test]
    fn invalid_fps() {
        let cfg = PipelineConfig {
            fps: 0.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidFps(_))));
    }
}
