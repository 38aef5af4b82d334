// SPDX-License-Identifier: Apache-2.0

//! Re-projection of annotated fish points into map coordinates and per-fish
//! trajectory assembly.
//!
//! Annotations are labeled in each frame's own pixel grid. A point `p`
//! observed in frame `i` lands on the map at `layout.shifted_transforms[i] * p`.
//! Trajectories follow the center point only and are never smoothed or
//! gap-filled.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ImageBuffer, Point2, Rgb, StitchLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FishAnnotation {
    pub frame_index: usize,
    pub fish_id: String,
    pub species: String,
    pub head: Point2,
    pub center: Point2,
    pub tail: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame_index: usize,
    pub position: Point2,
}

/// Map-space center path of one fish, strictly increasing in frame index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub fish_id: String,
    pub species: String,
    pub points: Vec<TrackPoint>,
}

impl Trajectory {
    pub fn first(&self) -> &TrackPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TrackPoint {
        &self.points[self.points.len() - 1]
    }
}

pub fn map_annotation_point(p: Point2, layout: &StitchLayout, frame_index: usize) -> Result<Point2> {
    Ok(layout.shifted_transform(frame_index)?.apply(p))
}

/// Maps head, center and tail of an annotation into map coordinates.
pub fn map_annotation(a: &FishAnnotation, layout: &StitchLayout) -> Result<FishAnnotation> {
    let t = layout.shifted_transform(a.frame_index)?;
    Ok(FishAnnotation {
        head: t.apply(a.head),
        center: t.apply(a.center),
        tail: t.apply(a.tail),
        ..a.clone()
    })
}

/// Checks species consistency per fish and rejects repeated
/// (fish, frame) observations.
pub fn validate_annotations(annotations: &[FishAnnotation]) -> Result<()> {
    let mut species: BTreeMap<&str, &str> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for a in annotations {
        if let Some(&first) = species.get(a.fish_id.as_str()) {
            if first != a.species {
                return Err(Error::InconsistentSpecies {
                    fish_id: a.fish_id.clone(),
                    first: first.to_string(),
                    second: a.species.clone(),
                });
            }
        } else {
            species.insert(&a.fish_id, &a.species);
        }
        if !seen.insert((a.fish_id.as_str(), a.frame_index)) {
            return Err(Error::DuplicateObservation {
                fish_id: a.fish_id.clone(),
                frame: a.frame_index,
            });
        }
    }
    Ok(())
}

/// Groups annotations by fish and maps each center point; output is sorted
/// by fish id.
pub fn build_trajectories(annotations: &[FishAnnotation], layout: &StitchLayout) -> Result<Vec<Trajectory>> {
    validate_annotations(annotations)?;
    let mut groups: BTreeMap<&str, Trajectory> = BTreeMap::new();
    for a in annotations {
        let position = map_annotation_point(a.center, layout, a.frame_index)?;
        groups
            .entry(&a.fish_id)
            .or_insert_with(|| Trajectory {
                fish_id: a.fish_id.clone(),
                species: a.species.clone(),
                points: Vec::new(),
            })
            .points
            .push(TrackPoint {
                frame_index: a.frame_index,
                position,
            });
    }
    Ok(groups
        .into_values()
        .map(|mut t| {
            t.points.sort_by_key(|p| p.frame_index);
            t
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStyle {
    pub stroke_width: usize,
    /// Colors assigned to fish in sorted-id order, cycling.
    pub palette: Vec<Rgb>,
}

impl Default for TrajectoryStyle {
    fn default() -> Self {
        TrajectoryStyle {
            stroke_width: 3,
            palette: vec![
                [1.0, 0.2, 0.2],
                [1.0, 0.85, 0.1],
                [0.2, 1.0, 0.3],
                [0.2, 0.8, 1.0],
                [1.0, 0.3, 1.0],
                [1.0, 0.6, 0.1],
                [1.0, 1.0, 1.0],
                [0.6, 0.4, 1.0],
            ],
        }
    }
}

fn to_pixel(p: Point2, width: usize, height: usize) -> (i64, i64) {
    let x = p.x.round().clamp(0.0, (width - 1) as f64) as i64;
    let y = p.y.round().clamp(0.0, (height - 1) as f64) as i64;
    (x, y)
}

/// Integer Bresenham segment, endpoints included.
pub(crate) fn line_pixels(from: (i64, i64), to: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = from;
    let dx = (to.0 - x).abs();
    let dy = -(to.1 - y).abs();
    let sx = if x < to.0 { 1 } else { -1 };
    let sy = if y < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if (x, y) == to {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn stamp(img: &mut ImageBuffer, (x, y): (i64, i64), width: usize, color: Rgb) {
    let lo = -((width as i64 - 1) / 2);
    let hi = width as i64 / 2;
    for dy in lo..=hi {
        for dx in lo..=hi {
            let (px, py) = (x + dx, y + dy);
            if px >= 0 && py >= 0 && (px as usize) < img.width() && (py as usize) < img.height() {
                img.put(px as usize, py as usize, color);
            }
        }
    }
}

/// Draws each trajectory as a polyline over a copy of `map`. Points outside
/// the canvas are clamped to its border.
pub fn render_trajectory_map(map: &ImageBuffer, trajectories: &[Trajectory], style: &TrajectoryStyle) -> ImageBuffer {
    let mut out = map.clone();
    if style.palette.is_empty() || style.stroke_width == 0 {
        return out;
    }
    let mut order: Vec<&Trajectory> = trajectories.iter().collect();
    order.sort_by(|a, b| a.fish_id.cmp(&b.fish_id));
    let (w, h) = (map.width(), map.height());
    for (i, traj) in order.into_iter().enumerate() {
        let color = style.palette[i % style.palette.len()];
        let pixels: Vec<(i64, i64)> = traj.points.iter().map(|p| to_pixel(p.position, w, h)).collect();
        if let [only] = pixels.as_slice() {
            stamp(&mut out, *only, style.stroke_width, color);
        }
        for seg in pixels.windows(2) {
            for px in line_pixels(seg[0], seg[1]) {
                stamp(&mut out, px, style.stroke_width, color);
            }
        }
    }
    out
}
