// SPDX-License-Identifier: Apache-2.0

//! Color correction, affine stitching and shoaling-behavior features for
//! underwater survey frames.
//!
//! The stages are independent modules:
//!
//! - [`color`]: gray-world, Retinex and quadratic white balance
//! - [`estimation`]: affine fitting and RANSAC over keypoint pairs
//! - [`stitch`]: canvas layout, warping, compositing and seam closing
//! - [`trajectory`]: mapping fish annotations onto the stitched map
//! - [`features`]: per-fish and per-frame behavior measurements
//! - [`synth`]: seeded scenes with known ground truth
//! - [`io`] and [`pipeline`]: file formats and the batch stages
//!
//! ```
//! use reefstitch::pipeline::{run_pipeline, run_synth, synth_outputs, PipelineConfig};
//! use reefstitch::synth::{MotionModel, ScenarioSpec, SequenceSpec};
//!
//! let dir = tempfile::tempdir()?;
//! let spec = ScenarioSpec {
//!     sequence: SequenceSpec { frame_width: 96, frame_height: 72, n_frames: 3, ..Default::default() },
//!     motion: MotionModel { max_translation: 10.0, ..Default::default() },
//!     n_fish: 2,
//! };
//! let data = dir.path().join("data");
//! run_synth(&data, &spec)?;
//! let report = run_pipeline(
//!     &data.join(synth_outputs::FRAMES_DIR),
//!     &data.join(synth_outputs::CORRESPONDENCES),
//!     &data.join(synth_outputs::ANNOTATIONS),
//!     &dir.path().join("out"),
//!     &PipelineConfig::default(),
//! )?;
//! assert!(report.warnings.is_empty());
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod color;
pub mod error;
pub mod estimation;
pub mod features;
pub mod imaging;
pub mod io;
mod linalg;
pub mod pipeline;
pub mod stitch;
pub mod synth;
pub mod trajectory;

pub use error::{Error, ErrorKind, Result};

// The guide's snippets run as doctests through these modules.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/color-correction.md")]
    mod color_correction {}
    #[doc = include_str!("../../../book/src/robust-estimation.md")]
    mod robust_estimation {}
    #[doc = include_str!("../../../book/src/stitching.md")]
    mod stitching {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/behavior-features.md")]
    mod behavior_features {}
    #[doc = include_str!("../../../book/src/synthetic-data.md")]
    mod synthetic_data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
