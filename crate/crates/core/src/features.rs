// SPDX-License-Identifier: Apache-2.0

//! Shoaling features per fish.
//!
//! Path features (total distance, displacement, average speed) and the
//! per-frame nearest-neighbor distance and heading angle are measured in map
//! coordinates so that multi-frame paths are geometrically coherent. Body
//! length is measured in each frame's own pixel grid, where a non-rigid
//! registration cannot distort it. All lengths are in pixels.
//!
//! A fish's heading is the unit vector from its center point to its head
//! point. The heading angle between a fish and its nearest neighbor is
//! `acos(a . b)` of the two unit headings, in `[0, pi]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Point2, StitchLayout};
use crate::trajectory::{map_annotation, FishAnnotation, Trajectory};

/// Default time base: frames extracted at three per second.
pub const DEFAULT_FPS: f64 = 3.0;
/// Head-to-center distance at or below which no heading is defined.
pub const MIN_HEADING_LENGTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborPointMode {
    #[default]
    Center,
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborObservation {
    pub frame_index: usize,
    pub fish_id: String,
    pub neighbor_id: String,
    /// Pixels.
    pub distance: f64,
    /// Radians, in `[0, pi]`.
    pub angle: f64,
    pub neighbor_species: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorFeatureRow {
    pub fish_id: String,
    pub species: String,
    pub total_distance: f64,
    pub displacement: f64,
    /// Pixels per second; absent for single-observation trajectories.
    pub average_speed: Option<f64>,
    pub mean_body_length: f64,
    pub neighbor_observations: Vec<NeighborObservation>,
}

pub fn total_distance(traj: &Trajectory) -> f64 {
    traj.points
        .windows(2)
        .map(|w| w[1].position.distance(w[0].position))
        .sum()
}

pub fn displacement(traj: &Trajectory) -> f64 {
    traj.last().position.distance(traj.first().position)
}

pub fn average_speed(traj: &Trajectory, fps: f64) -> Result<f64> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidFps(fps));
    }
    if traj.points.len() < 2 {
        return Err(Error::SinglePoint);
    }
    let frames = traj.last().frame_index - traj.first().frame_index;
    if frames == 0 {
        return Err(Error::ZeroDuration);
    }
    Ok(total_distance(traj) / (frames as f64 / fps))
}

pub fn body_length(a: &FishAnnotation) -> f64 {
    a.head.distance(a.center) + a.center.distance(a.tail)
}

pub fn heading_direction(a: &FishAnnotation) -> Result<Point2> {
    let v = a.head - a.center;
    let len = v.norm();
    if len.is_nan() || len <= MIN_HEADING_LENGTH {
        return Err(Error::UndefinedHeading(a.fish_id.clone()));
    }
    Ok(v * (1.0 / len))
}

/// Angle between two unit vectors; the cosine is clamped so rounding noise
/// on (anti)parallel headings cannot produce NaN.
pub fn heading_angle(a: Point2, b: Point2) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// Nearest neighbor of every fish in one frame. `fish` must already be in
/// map coordinates. Ties in distance go to the smallest neighbor id.
pub fn nearest_neighbor_features(fish: &[FishAnnotation], mode: NeighborPointMode) -> Result<Vec<NeighborObservation>> {
    if fish.len() < 2 {
        return Err(Error::TooFewFish(fish.len()));
    }
    let headings = fish.iter().map(heading_direction).collect::<Result<Vec<_>>>()?;
    let anchor = |a: &FishAnnotation| match mode {
        NeighborPointMode::Center => a.center,
        NeighborPointMode::Head => a.head,
    };
    let mut out = Vec::with_capacity(fish.len());
    for (i, focal) in fish.iter().enumerate() {
        let (j, distance) = fish
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, other)| (j, anchor(focal).distance(anchor(other))))
            .min_by(|a, b| {
                a.1.total_cmp(&b.1)
                    .then_with(|| fish[a.0].fish_id.cmp(&fish[b.0].fish_id))
            })
            .expect("at least two fish");
        let neighbor = &fish[j];
        out.push(NeighborObservation {
            frame_index: focal.frame_index,
            fish_id: focal.fish_id.clone(),
            neighbor_id: neighbor.fish_id.clone(),
            distance,
            angle: heading_angle(headings[j], headings[i]),
            neighbor_species: neighbor.species.clone(),
        });
    }
    Ok(out)
}

/// One row per trajectory, sorted by fish id; neighbor observations are
/// sorted by frame index.
pub fn build_feature_table(
    annotations: &[FishAnnotation],
    trajectories: &[Trajectory],
    layout: &StitchLayout,
    fps: f64,
    mode: NeighborPointMode,
) -> Result<Vec<BehaviorFeatureRow>> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidFps(fps));
    }
    let mut by_frame: BTreeMap<usize, Vec<FishAnnotation>> = BTreeMap::new();
    let mut lengths: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for a in annotations {
        by_frame
            .entry(a.frame_index)
            .or_default()
            .push(map_annotation(a, layout)?);
        let e = lengths.entry(&a.fish_id).or_insert((0.0, 0));
        e.0 += body_length(a);
        e.1 += 1;
    }

    let mut neighbors: BTreeMap<String, Vec<NeighborObservation>> = BTreeMap::new();
    for fish in by_frame.values_mut() {
        if fish.len() < 2 {
            continue;
        }
        fish.sort_by(|a, b| a.fish_id.cmp(&b.fish_id));
        for obs in nearest_neighbor_features(fish, mode)? {
            neighbors.entry(obs.fish_id.clone()).or_default().push(obs);
        }
    }

    let mut sorted: Vec<&Trajectory> = trajectories.iter().collect();
    sorted.sort_by(|a, b| a.fish_id.cmp(&b.fish_id));
    sorted
        .into_iter()
        .map(|traj| {
            let &(sum, n) = lengths
                .get(traj.fish_id.as_str())
                .ok_or_else(|| Error::DimensionMismatch(format!("trajectory {} has no annotations", traj.fish_id)))?;
            let average_speed = match average_speed(traj, fps) {
                Ok(v) => Some(v),
                Err(Error::SinglePoint | Error::ZeroDuration) => None,
                Err(e) => return Err(e),
            };
            Ok(BehaviorFeatureRow {
                fish_id: traj.fish_id.clone(),
                species: traj.species.clone(),
                total_distance: total_distance(traj),
                displacement: displacement(traj),
                average_speed,
                mean_body_length: sum / n as f64,
                neighbor_observations: neighbors.remove(&traj.fish_id).unwrap_or_default(),
            })
        })
        .collect()
}
