// SPDX-License-Identifier: Apache-2.0

//! Global color correction for frames shot under a color cast.
//!
//! Three estimators are provided, all of which keep the green channel fixed
//! and rescale red and blue against it:
//!
//! * gray-world gains equalize the channel means,
//! * Retinex gains equalize the channel maxima,
//! * automatic white balance fits a per-channel quadratic
//!   `I' = mu * I^2 + v * I` that meets both constraints at once: the mapped
//!   channel sum equals the green sum and the mapped value at the channel's
//!   brightest pixel equals the green maximum.
//!
//! The quadratic coefficients solve
//!
//! ```text
//! | sum I^2   sum I | | mu |   | sum G |
//! | max I^2   max I | | v  | = | max G |
//! ```
//!
//! which is singular for constant or all-black channels. [`correct_frame`]
//! falls back to gray-world gains (or passes the frame through) in that case.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ImageBuffer, Point2, Rgb, UnclampedImage};
use crate::linalg::{solve_2x2, CompensatedSum};

/// Relative determinant threshold for the white-balance system.
pub const AWB_SINGULAR_TOL: f64 = 1e-12;
/// Channel statistics at or below this value cannot anchor a gain.
pub const DEGENERATE_CHANNEL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Red = 0,
    Green = 1,
    Blue = 2,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Red => "red",
            Channel::Green => "green",
            Channel::Blue => "blue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSummary {
    pub sum: f64,
    pub sum_squares: f64,
    pub max: f64,
    /// First pixel in row-major order attaining `max`.
    pub max_pos: Point2,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub channels: [ChannelSummary; 3],
    pub pixel_count: usize,
}

impl ChannelStats {
    pub fn of(img: &ImageBuffer) -> Self {
        Self::from_pixels(img.width(), img.pixels())
    }

    /// Statistics of an intermediate buffer, used to audit corrections before
    /// they are clamped.
    pub fn of_unclamped(img: &UnclampedImage) -> Self {
        Self::from_pixels(img.width(), img.pixels())
    }

    fn from_pixels(width: usize, pixels: &[Rgb]) -> Self {
        let channels = [0, 1, 2].map(|c| {
            let mut sum = CompensatedSum::default();
            let mut sum_squares = CompensatedSum::default();
            let mut max = f64::NEG_INFINITY;
            let mut max_index = 0;
            for (i, px) in pixels.iter().enumerate() {
                let v = px[c];
                sum.add(v);
                sum_squares.add(v * v);
                if v > max {
                    max = v;
                    max_index = i;
                }
            }
            let sum = sum.value();
            ChannelSummary {
                sum,
                sum_squares: sum_squares.value(),
                max,
                max_pos: Point2::new((max_index % width) as f64, (max_index / width) as f64),
                mean: sum / pixels.len() as f64,
            }
        });
        ChannelStats {
            channels,
            pixel_count: pixels.len(),
        }
    }

    pub fn channel(&self, c: Channel) -> &ChannelSummary {
        &self.channels[c as usize]
    }

    pub fn red(&self) -> &ChannelSummary {
        self.channel(Channel::Red)
    }

    pub fn green(&self) -> &ChannelSummary {
        self.channel(Channel::Green)
    }

    pub fn blue(&self) -> &ChannelSummary {
        self.channel(Channel::Blue)
    }
}

pub fn compute_channel_stats(img: &ImageBuffer) -> ChannelStats {
    ChannelStats::of(img)
}

/// Multiplicative gains for the red (`alpha`) and blue (`beta`) channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPair {
    pub alpha: f64,
    pub beta: f64,
}

fn ratio(target: f64, value: f64, channel: Channel) -> Result<f64> {
    if value.is_nan() || value <= DEGENERATE_CHANNEL {
        return Err(Error::DegenerateChannel {
            channel: channel.name(),
            value,
        });
    }
    Ok(target / value)
}

/// Gains that equalize channel means with the green mean.
pub fn gray_world_gains(stats: &ChannelStats) -> Result<GainPair> {
    let g = stats.green().mean;
    Ok(GainPair {
        alpha: ratio(g, stats.red().mean, Channel::Red)?,
        beta: ratio(g, stats.blue().mean, Channel::Blue)?,
    })
}

/// Gains that equalize channel maxima with the green maximum.
pub fn retinex_gains(stats: &ChannelStats) -> Result<GainPair> {
    let g = stats.green().max;
    Ok(GainPair {
        alpha: ratio(g, stats.red().max, Channel::Red)?,
        beta: ratio(g, stats.blue().max, Channel::Blue)?,
    })
}

pub fn apply_gains(img: &ImageBuffer, gains: GainPair) -> UnclampedImage {
    let pixels = img
        .pixels()
        .iter()
        .map(|&[r, g, b]| [gains.alpha * r, g, gains.beta * b])
        .collect();
    UnclampedImage::new(img.width(), img.height(), pixels).expect("dimensions preserved")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCoeffs {
    pub mu: f64,
    pub v: f64,
}

impl QuadraticCoeffs {
    pub const IDENTITY: QuadraticCoeffs = QuadraticCoeffs { mu: 0.0, v: 1.0 };

    pub fn eval(&self, intensity: f64) -> f64 {
        self.mu * intensity * intensity + self.v * intensity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticMapParams {
    pub red: QuadraticCoeffs,
    pub blue: QuadraticCoeffs,
}

fn solve_channel(stats: &ChannelStats, c: Channel) -> Result<QuadraticCoeffs> {
    let s = stats.channel(c);
    let g = stats.green();
    let system = [[s.sum_squares, s.sum], [s.max * s.max, s.max]];
    solve_2x2(system, [g.sum, g.max], AWB_SINGULAR_TOL)
        .map(|[mu, v]| QuadraticCoeffs { mu, v })
        .ok_or(Error::SingularAwbSystem { channel: c.name() })
}

/// Solves the red and blue white-balance systems.
pub fn solve_awb_params(stats: &ChannelStats) -> Result<QuadraticMapParams> {
    Ok(QuadraticMapParams {
        red: solve_channel(stats, Channel::Red)?,
        blue: solve_channel(stats, Channel::Blue)?,
    })
}

pub fn apply_quadratic_map(img: &ImageBuffer, params: &QuadraticMapParams) -> UnclampedImage {
    let pixels = img
        .pixels()
        .iter()
        .map(|&[r, g, b]| [params.red.eval(r), g, params.blue.eval(b)])
        .collect();
    UnclampedImage::new(img.width(), img.height(), pixels).expect("dimensions preserved")
}

/// Quadratic white balance, clamped once at the end.
pub fn auto_white_balance(img: &ImageBuffer) -> Result<ImageBuffer> {
    let params = solve_awb_params(&compute_channel_stats(img))?;
    apply_quadratic_map(img, &params).clamp()
}

/// What to do when the white-balance system is singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AwbFallback {
    #[default]
    GrayWorld,
    Passthrough,
}

/// Which correction was actually applied to a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMethod {
    AutoWhiteBalance,
    GrayWorld,
    Passthrough,
}

/// Automatic white balance with the fallback chain AWB → gray-world →
/// passthrough. Never fails; the method used is returned alongside.
pub fn correct_frame(img: &ImageBuffer, fallback: AwbFallback) -> (ImageBuffer, CorrectionMethod) {
    let stats = compute_channel_stats(img);
    let awb = solve_awb_params(&stats).and_then(|p| apply_quadratic_map(img, &p).clamp());
    let err = match awb {
        Ok(out) => return (out, CorrectionMethod::AutoWhiteBalance),
        Err(e) => e,
    };
    if fallback == AwbFallback::GrayWorld {
        match gray_world_gains(&stats).and_then(|g| apply_gains(img, g).clamp()) {
            Ok(out) => {
                log::warn!("{err}; using gray-world gains");
                return (out, CorrectionMethod::GrayWorld);
            }
            Err(e) => log::warn!("{err}; gray-world also failed ({e}); frame left unchanged"),
        }
    } else {
        log::warn!("{err}; frame left unchanged");
    }
    (img.clone(), CorrectionMethod::Passthrough)
}

/// Per-channel intensity histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub bins: usize,
    pub counts: [Vec<u64>; 3],
}

/// Value `v` lands in bin `floor(v * bins)`; `v = 1` goes to the last bin.
pub fn compute_histogram(img: &ImageBuffer, bins: usize) -> Result<Histogram> {
    if bins < 2 {
        return Err(Error::BadBinCount(bins));
    }
    let mut counts = [vec![0u64; bins], vec![0u64; bins], vec![0u64; bins]];
    for px in img.pixels() {
        for (c, &v) in px.iter().enumerate() {
            let bin = ((v * bins as f64).floor() as usize).min(bins - 1);
            counts[c][bin] += 1;
        }
    }
    Ok(Histogram { bins, counts })
}
