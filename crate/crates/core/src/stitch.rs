// SPDX-License-Identifier: Apache-2.0

//! Frame registration and compositing into a single scene map.
//!
//! [`stitch_sequence`] estimates each frame's affine transform against frame 0,
//! sizes a canvas that holds every transformed frame, shifts all transforms
//! by the padding offset, warps each frame onto the canvas by inverse mapping
//! and paints them in frame order. A grayscale morphological closing then
//! fills the thin black seams that warping leaves between frames.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{ransac_affine, residual, CorrespondenceSet, RansacConfig, RansacResult};
use crate::imaging::{AffineTransform, ImageBuffer, Point2, Rgb, StitchLayout};

/// Default upper bound on either canvas side.
pub const DEFAULT_MAX_CANVAS_SIDE: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Nearest,
    #[default]
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositeOrder {
    #[default]
    LaterOnTop,
    EarlierOnTop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StitchConfig {
    pub interpolation: Interpolation,
    /// Side of the square structuring element; odd.
    pub closing_kernel: usize,
    pub closing_iterations: usize,
    pub composite_order: CompositeOrder,
    pub max_canvas_side: usize,
}

impl Default for StitchConfig {
    fn default() -> Self {
        StitchConfig {
            interpolation: Interpolation::Bilinear,
            closing_kernel: 3,
            closing_iterations: 1,
            composite_order: CompositeOrder::LaterOnTop,
            max_canvas_side: DEFAULT_MAX_CANVAS_SIDE,
        }
    }
}

impl StitchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.closing_kernel == 0 || self.closing_kernel % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "closing kernel must be odd and >= 1, got {}",
                self.closing_kernel
            )));
        }
        Ok(())
    }
}

/// Which canvas pixels received content from at least one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMask {
    width: usize,
    height: usize,
    covered: Vec<bool>,
}

impl CoverageMask {
    pub fn empty(width: usize, height: usize) -> Self {
        CoverageMask {
            width,
            height,
            covered: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        CoverageMask {
            width,
            height,
            covered: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_covered(&self, x: usize, y: usize) -> bool {
        self.covered[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.covered[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.covered
    }

    pub fn count(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }
}

/// Canvas and padding for a set of frames and their frame-to-reference
/// transforms.
///
/// Frame extents are the continuous rectangles `[0, w] x [0, h]`; the
/// reference frame's own rectangle is always part of the union. The offset is
/// `ceil(-min)` per axis and the canvas extends to `ceil(max + offset)`.
pub fn compute_layout(
    frame_sizes: &[(usize, usize)],
    transforms: &[AffineTransform],
    max_canvas_side: usize,
) -> Result<StitchLayout> {
    if frame_sizes.is_empty() {
        return Err(Error::NoFrames);
    }
    if frame_sizes.len() != transforms.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} frames but {} transforms",
            frame_sizes.len(),
            transforms.len()
        )));
    }
    let (w0, h0) = frame_sizes[0];
    let (mut min, mut max) = (Point2::ORIGIN, Point2::new(w0 as f64, h0 as f64));
    for (&(w, h), t) in frame_sizes.iter().zip(transforms) {
        t.inverse()?;
        let (w, h) = (w as f64, h as f64);
        for corner in [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)] {
            let p = t.apply(Point2::new(corner.0, corner.1));
            min = Point2::new(min.x.min(p.x), min.y.min(p.y));
            max = Point2::new(max.x.max(p.x), max.y.max(p.y));
        }
    }
    // Absorb rounding noise so an exact integer extent does not grow a pixel.
    let ceil = |v: f64| (v - 1e-9).ceil().max(0.0);
    let offset = Point2::new(ceil(-min.x), ceil(-min.y));
    let max_w = frame_sizes.iter().map(|s| s.0).max().unwrap_or(0) as f64;
    let max_h = frame_sizes.iter().map(|s| s.1).max().unwrap_or(0) as f64;
    let width = ceil(max.x + offset.x).max(max_w);
    let height = ceil(max.y + offset.y).max(max_h);
    if !(width <= max_canvas_side as f64 && height <= max_canvas_side as f64) {
        return Err(Error::CanvasTooLarge {
            width,
            height,
            limit: max_canvas_side,
        });
    }
    Ok(StitchLayout {
        canvas_width: width as usize,
        canvas_height: height as usize,
        offset,
        shifted_transforms: transforms.iter().map(|t| t.shifted(offset)).collect(),
    })
}

fn sample(img: &ImageBuffer, p: Point2, interpolation: Interpolation) -> Option<Rgb> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    // Pixel centers sit on integers, so the frame spans [-0.5, w - 0.5).
    if !(p.x >= -0.5 && p.x < w - 0.5 && p.y >= -0.5 && p.y < h - 0.5) {
        return None;
    }
    match interpolation {
        Interpolation::Nearest => {
            let x = (p.x + 0.5).floor() as usize;
            let y = (p.y + 0.5).floor() as usize;
            Some(img.get(x, y))
        }
        Interpolation::Bilinear => {
            let (fx0, fy0) = (p.x.floor(), p.y.floor());
            let (fx, fy) = (p.x - fx0, p.y - fy0);
            let clamp_x = |v: f64| v.clamp(0.0, w - 1.0) as usize;
            let clamp_y = |v: f64| v.clamp(0.0, h - 1.0) as usize;
            let (x0, x1) = (clamp_x(fx0), clamp_x(fx0 + 1.0));
            let (y0, y1) = (clamp_y(fy0), clamp_y(fy0 + 1.0));
            let (v00, v10, v01, v11) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
            Some(std::array::from_fn(|c| {
                let top = (1.0 - fx) * v00[c] + fx * v10[c];
                let bottom = (1.0 - fx) * v01[c] + fx * v11[c];
                ((1.0 - fy) * top + fy * bottom).clamp(0.0, 1.0)
            }))
        }
    }
}

/// Inverse-mapped warp of `img` onto a `canvas_width x canvas_height` canvas.
pub fn warp_frame(
    img: &ImageBuffer,
    t: &AffineTransform,
    canvas_width: usize,
    canvas_height: usize,
    cfg: &StitchConfig,
) -> Result<(ImageBuffer, CoverageMask)> {
    let inv = t.inverse()?;
    if canvas_width == 0 || canvas_height == 0 {
        return Err(Error::InvalidDimensions {
            width: canvas_width,
            height: canvas_height,
        });
    }
    let rows: Vec<(Vec<Rgb>, Vec<bool>)> = (0..canvas_height)
        .into_par_iter()
        .map(|y| {
            let mut px = Vec::with_capacity(canvas_width);
            let mut cov = Vec::with_capacity(canvas_width);
            for x in 0..canvas_width {
                let p = inv.apply(Point2::new(x as f64, y as f64));
                match sample(img, p, cfg.interpolation) {
                    Some(v) => {
                        px.push(v);
                        cov.push(true);
                    }
                    None => {
                        px.push([0.0; 3]);
                        cov.push(false);
                    }
                }
            }
            (px, cov)
        })
        .collect();
    let mut pixels = Vec::with_capacity(canvas_width * canvas_height);
    let mut covered = Vec::with_capacity(canvas_width * canvas_height);
    for (px, cov) in rows {
        pixels.extend(px);
        covered.extend(cov);
    }
    Ok((
        ImageBuffer::from_raw(canvas_width, canvas_height, pixels),
        CoverageMask {
            width: canvas_width,
            height: canvas_height,
            covered,
        },
    ))
}

/// Paints `warped` over `base` (or under it, with [`CompositeOrder::EarlierOnTop`]).
pub fn composite(
    base: &ImageBuffer,
    base_mask: &CoverageMask,
    warped: &ImageBuffer,
    warped_mask: &CoverageMask,
    order: CompositeOrder,
) -> Result<(ImageBuffer, CoverageMask)> {
    let dims = [
        (base.width(), base.height()),
        (base_mask.width, base_mask.height),
        (warped.width(), warped.height()),
        (warped_mask.width, warped_mask.height),
    ];
    if dims.iter().any(|&d| d != dims[0]) {
        return Err(Error::DimensionMismatch(format!("composite inputs {dims:?}")));
    }
    let pixels = base
        .pixels()
        .iter()
        .zip(base_mask.as_slice())
        .zip(warped.pixels().iter().zip(warped_mask.as_slice()))
        .map(|((&b, &bm), (&w, &wm))| {
            let take_warped = match order {
                CompositeOrder::LaterOnTop => wm,
                CompositeOrder::EarlierOnTop => wm && !bm,
            };
            if take_warped {
                w
            } else {
                b
            }
        })
        .collect();
    let covered = base_mask
        .as_slice()
        .iter()
        .zip(warped_mask.as_slice())
        .map(|(&a, &b)| a || b)
        .collect();
    Ok((
        ImageBuffer::from_raw(base.width(), base.height(), pixels),
        CoverageMask {
            width: base.width(),
            height: base.height(),
            covered,
        },
    ))
}

/// Separable rank filter over a square window clipped to the raster, which
/// is what edge replication amounts to for max/min.
fn rank_filter<T: Copy + Send + Sync>(
    width: usize,
    height: usize,
    data: &[T],
    radius: usize,
    pick: impl Fn(T, T) -> T + Sync,
) -> Vec<T> {
    let horizontal: Vec<T> = data
        .par_chunks(width)
        .flat_map_iter(|row| {
            (0..width)
                .map(|x| {
                    let lo = x.saturating_sub(radius);
                    let hi = (x + radius).min(width - 1);
                    row[lo + 1..=hi].iter().fold(row[lo], |acc, &v| pick(acc, v))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    (0..height)
        .into_par_iter()
        .flat_map_iter(|y| {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(height - 1);
            let horizontal = &horizontal;
            let pick = &pick;
            (0..width).map(move |x| {
                (lo + 1..=hi).fold(horizontal[lo * width + x], |acc, yy| {
                    pick(acc, horizontal[yy * width + x])
                })
            })
        })
        .collect()
}

fn channel_max(a: Rgb, b: Rgb) -> Rgb {
    [a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2])]
}

fn channel_min(a: Rgb, b: Rgb) -> Rgb {
    [a[0].min(b[0]), a[1].min(b[1]), a[2].min(b[2])]
}

/// Grayscale closing (channel-wise dilation then erosion) with a square
/// structuring element, repeated `closing_iterations` times.
pub fn morphological_close(img: &ImageBuffer, cfg: &StitchConfig) -> ImageBuffer {
    let radius = cfg.closing_kernel / 2;
    let (w, h) = (img.width(), img.height());
    let mut pixels = img.pixels().to_vec();
    if radius == 0 {
        return img.clone();
    }
    for _ in 0..cfg.closing_iterations {
        let dilated = rank_filter(w, h, &pixels, radius, channel_max);
        pixels = rank_filter(w, h, &dilated, radius, channel_min);
    }
    ImageBuffer::from_raw(w, h, pixels)
}

fn close_mask(mask: &CoverageMask, cfg: &StitchConfig) -> CoverageMask {
    let radius = cfg.closing_kernel / 2;
    let mut covered = mask.covered.clone();
    if radius > 0 {
        for _ in 0..cfg.closing_iterations {
            let dilated = rank_filter(mask.width, mask.height, &covered, radius, |a, b| a || b);
            covered = rank_filter(mask.width, mask.height, &dilated, radius, |a, b| a && b);
        }
    }
    CoverageMask {
        width: mask.width,
        height: mask.height,
        covered,
    }
}

/// Closing restricted to the covered part of the canvas.
///
/// The coverage mask is closed with the same element, which absorbs seams
/// narrower than the kernel; pixels outside the closed mask stay black so
/// map content never bleeds into the surrounding void.
pub fn close_covered(img: &ImageBuffer, mask: &CoverageMask, cfg: &StitchConfig) -> (ImageBuffer, CoverageMask) {
    let closed_mask = close_mask(mask, cfg);
    let closed = morphological_close(img, cfg);
    let pixels = closed
        .pixels()
        .iter()
        .zip(closed_mask.as_slice())
        .map(|(&p, &c)| if c { p } else { [0.0; 3] })
        .collect();
    (ImageBuffer::from_raw(img.width(), img.height(), pixels), closed_mask)
}

/// Registration outcome for one non-reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRegistration {
    pub frame_index: usize,
    pub pair_count: usize,
    pub ransac: RansacResult,
    pub mean_inlier_residual: f64,
    pub max_inlier_residual: f64,
}

#[derive(Debug, Clone)]
pub struct StitchOutput {
    pub map: ImageBuffer,
    /// Coverage before closing.
    pub coverage: CoverageMask,
    pub layout: StitchLayout,
    pub registrations: Vec<FrameRegistration>,
}

fn register(set: &CorrespondenceSet, cfg: &RansacConfig) -> Result<FrameRegistration> {
    let ransac = ransac_affine(&set.pairs, cfg)?;
    let residuals: Vec<f64> = set
        .pairs
        .iter()
        .zip(&ransac.inlier_mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| residual(&ransac.transform, p))
        .collect();
    let mean = if residuals.is_empty() {
        0.0
    } else {
        residuals.iter().sum::<f64>() / residuals.len() as f64
    };
    Ok(FrameRegistration {
        frame_index: set.frame_index,
        pair_count: set.pairs.len(),
        mean_inlier_residual: mean,
        max_inlier_residual: residuals.iter().copied().fold(0.0, f64::max),
        ransac,
    })
}

/// Estimates per-frame transforms with RANSAC and stitches all frames.
pub fn stitch_sequence(
    frames: &[ImageBuffer],
    correspondences: &[CorrespondenceSet],
    ransac_cfg: &RansacConfig,
    stitch_cfg: &StitchConfig,
) -> Result<StitchOutput> {
    if frames.is_empty() {
        return Err(Error::NoFrames);
    }
    ransac_cfg.validate()?;
    stitch_cfg.validate()?;
    let mut by_frame: Vec<Option<&CorrespondenceSet>> = vec![None; frames.len()];
    for set in correspondences {
        if set.frame_index == 0 || set.frame_index >= frames.len() {
            return Err(Error::FrameOutOfRange {
                frame: set.frame_index,
                frames: frames.len(),
            });
        }
        by_frame[set.frame_index] = Some(set);
    }
    let sets = (1..frames.len())
        .map(|i| by_frame[i].ok_or(Error::MissingCorrespondences(i)))
        .collect::<Result<Vec<_>>>()?;

    let registrations = sets
        .par_iter()
        .map(|set| register(set, ransac_cfg))
        .collect::<Result<Vec<_>>>()?;
    for r in registrations.iter().filter(|r| !r.ransac.converged) {
        log::warn!(
            "frame {}: RANSAC did not reach the consensus threshold ({} of {} inliers)",
            r.frame_index,
            r.ransac.inlier_count,
            r.pair_count
        );
    }

    let transforms: Vec<AffineTransform> = std::iter::once(AffineTransform::IDENTITY)
        .chain(registrations.iter().map(|r| r.ransac.transform))
        .collect();
    let sizes: Vec<(usize, usize)> = frames.iter().map(|f| (f.width(), f.height())).collect();
    let layout = compute_layout(&sizes, &transforms, stitch_cfg.max_canvas_side)?;

    let (cw, ch) = (layout.canvas_width, layout.canvas_height);
    let (mut map, mut coverage) = warp_frame(&frames[0], &layout.shifted_transforms[0], cw, ch, stitch_cfg)?;
    for (frame, t) in frames.iter().zip(&layout.shifted_transforms).skip(1) {
        let (warped, warped_mask) = warp_frame(frame, t, cw, ch, stitch_cfg)?;
        (map, coverage) = composite(&map, &coverage, &warped, &warped_mask, stitch_cfg.composite_order)?;
    }

    // A lone frame has no seams to close.
    if frames.len() > 1 {
        map = close_covered(&map, &coverage, stitch_cfg).0;
    }
    Ok(StitchOutput {
        map,
        coverage,
        layout,
        registrations,
    })
}
