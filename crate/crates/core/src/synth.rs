// SPDX-License-Identifier: Apache-2.0

//! Seeded synthetic scenes with known ground truth.
//!
//! A scenario is a value-noise texture, a sequence of frames cut from it
//! through known affine transforms, frame-to-reference keypoint
//! correspondences (optionally corrupted with outliers and Gaussian noise),
//! and fish tracks annotated in each frame's pixel grid. Every output is a
//! deterministic function of its seed.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{CorrespondenceSet, PointPair};
use crate::imaging::{AffineTransform, ImageBuffer, Point2};
use crate::trajectory::FishAnnotation;

const SPECIES: [&str; 3] = ["Dascyllus aruanus", "Chromis viridis", "Pomacentrus moluccensis"];

// RNG stream identifiers, so each concern draws from its own sequence.
const STREAM_MOTION: u64 = 1;
const STREAM_KEYPOINTS: u64 = 2;
const STREAM_CORRUPTION: u64 = 3;
const STREAM_FISH: u64 = 4;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform value in [0, 1) attached to an integer lattice site.
fn lattice(seed: u64, channel: u64, octave: u64, x: i64, y: i64) -> f64 {
    let mut h = splitmix(seed);
    for v in [channel, octave, x as u64, y as u64] {
        h = splitmix(h ^ v);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, channel: u64, octave: u64, cell: f64, x: f64, y: f64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (ix, iy) = (gx.floor(), gy.floor());
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (fx, fy) = (smooth(gx - ix), smooth(gy - iy));
    let (ix, iy) = (ix as i64, iy as i64);
    let v = |dx, dy| lattice(seed, channel, octave, ix + dx, iy + dy);
    let top = v(0, 0) * (1.0 - fx) + v(1, 0) * fx;
    let bottom = v(0, 1) * (1.0 - fx) + v(1, 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Multi-octave value noise with a blue-green cast, quantized to 8-bit
/// levels so it survives a round trip through an image file unchanged.
pub fn generate_texture(width: usize, height: usize, seed: u64) -> Result<ImageBuffer> {
    // Underwater cast: red attenuated most, then blue.
    const GAIN: [f64; 3] = [0.45, 0.85, 0.7];
    const BIAS: [f64; 3] = [0.05, 0.08, 0.12];
    let mut img = ImageBuffer::from_fn(width, height, |x, y| {
        let (x, y) = (x as f64, y as f64);
        std::array::from_fn(|c| {
            let c64 = c as u64;
            let n = 0.45 * value_noise(seed, c64, 0, 32.0, x, y)
                + 0.3 * value_noise(seed, c64, 1, 9.0, x, y)
                + 0.15 * value_noise(seed, c64, 2, 3.0, x, y)
                + 0.1 * lattice(seed, c64, 3, x as i64, y as i64);
            ((BIAS[c] + GAIN[c] * n) * 255.0).round() / 255.0
        })
    })?;
    // Guarantee two distinct levels per channel whenever there are two pixels.
    if width * height > 1 {
        for c in 0..3 {
            let first = img.get(0, 0)[c];
            if img.pixels().iter().all(|p| p[c] == first) {
                let mut p = img.get(0, 0);
                p[c] = if first > 0.5 {
                    first - 1.0 / 255.0
                } else {
                    first + 1.0 / 255.0
                };
                img.put(0, 0, p);
            }
        }
    }
    Ok(img)
}

/// Ranges for per-frame camera motion. Frame `i > 0` is related to the
/// reference frame by a rotation and scale about the frame center followed
/// by a translation, each drawn uniformly from these ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    /// Maximum |translation| per axis, pixels.
    pub max_translation: f64,
    /// Maximum |rotation|, radians.
    pub max_rotation: f64,
    pub scale_range: (f64, f64),
    pub seed: u64,
}

impl Default for MotionModel {
    fn default() -> Self {
        MotionModel {
            max_translation: 50.0,
            max_rotation: 10f64.to_radians(),
            scale_range: (1.0, 1.0),
            seed: 0,
        }
    }
}

impl MotionModel {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        let finite = [self.max_translation, self.max_rotation, lo, hi]
            .iter()
            .all(|v| v.is_finite());
        if !finite || lo <= 0.0 || hi < lo || self.max_translation < 0.0 || self.max_rotation < 0.0 {
            return Err(Error::InvalidConfig(format!("invalid motion model {self:?}")));
        }
        Ok(())
    }

    /// Frame-to-reference transforms; the first is the identity.
    pub fn sample_transforms(
        &self,
        frame_width: usize,
        frame_height: usize,
        n_frames: usize,
    ) -> Result<Vec<AffineTransform>> {
        self.validate()?;
        let mut rng = rng(self.seed, STREAM_MOTION);
        let center = Point2::new(frame_width as f64 / 2.0, frame_height as f64 / 2.0);
        let mut uniform = |r: f64| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
        let mut out = Vec::with_capacity(n_frames);
        for i in 0..n_frames {
            if i == 0 {
                out.push(AffineTransform::IDENTITY);
                continue;
            }
            let tx = uniform(self.max_translation);
            let ty = uniform(self.max_translation);
            let angle = uniform(self.max_rotation);
            let (lo, hi) = self.scale_range;
            let scale = lo + (hi - lo) * (uniform(1.0) * 0.5 + 0.5);
            let about_center = AffineTransform::translation(-center.x, -center.y).then(&AffineTransform::similarity(
                angle,
                scale,
                center.x + tx,
                center.y + ty,
            ));
            out.push(about_center);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub frame_width: usize,
    pub frame_height: usize,
    pub n_frames: usize,
    /// Keypoints labeled per non-reference frame.
    pub keypoints: usize,
    pub outlier_fraction: f64,
    /// Minimum displacement of a corrupted pair, pixels.
    pub outlier_displacement: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        SequenceSpec {
            frame_width: 640,
            frame_height: 480,
            n_frames: 15,
            keypoints: 20,
            outlier_fraction: 0.0,
            // 20 × the default RANSAC tolerance of 3 px.
            outlier_displacement: 60.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub transforms: Vec<AffineTransform>,
    pub correspondences: Vec<CorrespondenceSet>,
    /// Frame-local annotations.
    pub annotations: Vec<FishAnnotation>,
    pub source_texture: ImageBuffer,
    /// Texture position of the reference frame's top-left pixel.
    pub origin: Point2,
    /// Indices of corrupted pairs in each correspondence set.
    pub outliers: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frames: Vec<ImageBuffer>,
    pub truth: GroundTruth,
}

/// Texture margin that keeps every frame of `model` inside the texture.
pub fn required_margin(model: &MotionModel, frame_width: usize, frame_height: usize) -> f64 {
    let half_diag = (frame_width as f64).hypot(frame_height as f64) / 2.0;
    let scale_slack = (model.scale_range.1 - 1.0).abs().max((1.0 - model.scale_range.0).abs());
    model.max_translation + half_diag * (model.max_rotation.min(std::f64::consts::FRAC_PI_2).sin() + scale_slack) + 2.0
}

fn nearest_texel(texture: &ImageBuffer, p: Point2) -> [f64; 3] {
    texture.get((p.x + 0.5).floor() as usize, (p.y + 0.5).floor() as usize)
}

/// Jittered grid of keypoints inside a frame.
fn keypoints(rng: &mut ChaCha8Rng, w: usize, h: usize, n: usize) -> Vec<Point2> {
    let cols = (n as f64).sqrt().ceil().max(2.0) as usize;
    let rows = n.div_ceil(cols).max(1);
    let (cw, ch) = (w as f64 / cols as f64, h as f64 / rows as f64);
    (0..n)
        .map(|k| {
            let (i, j) = (k % cols, k / cols);
            Point2::new(
                (i as f64 + rng.gen_range(0.2..0.8)) * cw,
                (j as f64 + rng.gen_range(0.2..0.8)) * ch,
            )
        })
        .collect()
}

/// Cuts frames from `texture` through `transforms` and labels keypoints.
///
/// Frame `i`'s pixel `p` shows the texel nearest to `origin + T_i(p)`.
pub fn generate_sequence(
    texture: &ImageBuffer,
    transforms: &[AffineTransform],
    origin: Point2,
    spec: &SequenceSpec,
) -> Result<SyntheticSequence> {
    if spec.n_frames == 0 || transforms.len() != spec.n_frames {
        return Err(Error::InvalidConfig(format!(
            "{} transforms for {} frames",
            transforms.len(),
            spec.n_frames
        )));
    }
    if !(0.0..=1.0).contains(&spec.outlier_fraction) || spec.noise_sigma.is_nan() || spec.noise_sigma < 0.0 {
        return Err(Error::InvalidConfig(
            "outlier fraction must be in [0, 1] and noise >= 0".into(),
        ));
    }
    let (w, h) = (spec.frame_width, spec.frame_height);
    if w == 0 || h == 0 {
        return Err(Error::InvalidDimensions { width: w, height: h });
    }
    let (tw, th) = (texture.width() as f64, texture.height() as f64);
    let mut frames = Vec::with_capacity(spec.n_frames);
    for (i, t) in transforms.iter().enumerate() {
        let to_texture = t.shifted(origin);
        let (xm, ym) = ((w - 1) as f64, (h - 1) as f64);
        let inside = [(0.0, 0.0), (xm, 0.0), (0.0, ym), (xm, ym)]
            .iter()
            .map(|&(x, y)| to_texture.apply(Point2::new(x, y)))
            .all(|p| p.x >= 0.0 && p.y >= 0.0 && p.x <= tw - 1.0 && p.y <= th - 1.0);
        if !inside {
            return Err(Error::FrameOutsideTexture { frame: i });
        }
        frames.push(ImageBuffer::from_fn(w, h, |x, y| {
            nearest_texel(texture, to_texture.apply(Point2::new(x as f64, y as f64)))
        })?);
    }

    let mut kp_rng = rng(spec.seed, STREAM_KEYPOINTS);
    let mut bad_rng = rng(spec.seed, STREAM_CORRUPTION);
    let noise =
        Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut correspondences = Vec::new();
    let mut outliers = Vec::new();
    for (i, t) in transforms.iter().enumerate().skip(1) {
        let mut pairs: Vec<PointPair> = keypoints(&mut kp_rng, w, h, spec.keypoints)
            .into_iter()
            .map(|s| PointPair::new(s, t.apply(s)))
            .collect();
        let n_bad = (spec.outlier_fraction * pairs.len() as f64).round() as usize;
        let mut bad = index::sample(&mut bad_rng, pairs.len(), n_bad).into_vec();
        bad.sort_unstable();
        for (k, pair) in pairs.iter_mut().enumerate() {
            if bad.binary_search(&k).is_ok() {
                let angle = bad_rng.gen_range(0.0..std::f64::consts::TAU);
                let dist = bad_rng.gen_range(spec.outlier_displacement..=2.0 * spec.outlier_displacement);
                pair.reference = pair.reference + Point2::new(angle.cos(), angle.sin()) * dist;
            } else if spec.noise_sigma > 0.0 {
                let d = Point2::new(noise.sample(&mut bad_rng), noise.sample(&mut bad_rng));
                pair.reference = pair.reference + d;
            }
        }
        correspondences.push(CorrespondenceSet { frame_index: i, pairs });
        outliers.push(bad);
    }

    Ok(SyntheticSequence {
        frames,
        truth: GroundTruth {
            transforms: transforms.to_vec(),
            correspondences,
            annotations: Vec::new(),
            source_texture: texture.clone(),
            origin,
            outliers,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FishTrackSpec {
    pub n_fish: usize,
    pub n_frames: usize,
    pub seed: u64,
    /// Region (reference-frame pixels) the centers wander in.
    pub area: (f64, f64),
}

/// Smooth random walks in reference coordinates. Each fish keeps a fixed
/// body length; head and tail sit half a body length ahead of and behind
/// the center along the heading.
pub fn generate_fish_tracks(spec: &FishTrackSpec) -> Result<Vec<FishAnnotation>> {
    if spec.n_fish == 0 || spec.n_frames == 0 {
        return Err(Error::InvalidConfig("need at least one fish and one frame".into()));
    }
    let mut rng = rng(spec.seed, STREAM_FISH);
    let (aw, ah) = spec.area;
    let margin = 0.1 * aw.min(ah);
    let turn = Normal::new(0.0, 0.25).expect("valid sigma");
    let mut out = Vec::with_capacity(spec.n_fish * spec.n_frames);
    for f in 0..spec.n_fish {
        let fish_id = format!("fish_{:02}", f + 1);
        let species = SPECIES[f % SPECIES.len()].to_string();
        let half_body = rng.gen_range(12.0..20.0);
        let mut center = Point2::new(rng.gen_range(margin..aw - margin), rng.gen_range(margin..ah - margin));
        let mut heading = rng.gen_range(0.0..std::f64::consts::TAU);
        for frame in 0..spec.n_frames {
            if frame > 0 {
                heading += turn.sample(&mut rng);
                let step = rng.gen_range(2.0..6.0);
                let next = center + Point2::new(heading.cos(), heading.sin()) * step;
                if next.x < margin || next.x > aw - margin || next.y < margin || next.y > ah - margin {
                    let to_middle = Point2::new(aw / 2.0, ah / 2.0) - center;
                    heading = to_middle.y.atan2(to_middle.x);
                    center = center + Point2::new(heading.cos(), heading.sin()) * step;
                } else {
                    center = next;
                }
            }
            let dir = Point2::new(heading.cos(), heading.sin());
            out.push(FishAnnotation {
                frame_index: frame,
                fish_id: fish_id.clone(),
                species: species.clone(),
                head: center + dir * half_body,
                center,
                tail: center - dir * half_body,
            });
        }
    }
    Ok(out)
}

/// Converts reference-frame annotations to each frame's pixel grid.
pub fn localize_annotations(
    annotations: &[FishAnnotation],
    transforms: &[AffineTransform],
) -> Result<Vec<FishAnnotation>> {
    annotations
        .iter()
        .map(|a| {
            let inv = transforms
                .get(a.frame_index)
                .ok_or(Error::FrameOutOfRange {
                    frame: a.frame_index,
                    frames: transforms.len(),
                })?
                .inverse()?;
            Ok(FishAnnotation {
                head: inv.apply(a.head),
                center: inv.apply(a.center),
                tail: inv.apply(a.tail),
                ..a.clone()
            })
        })
        .collect()
}

/// Everything the `synth` command produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub sequence: SequenceSpec,
    pub motion: MotionModel,
    pub n_fish: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            sequence: SequenceSpec::default(),
            motion: MotionModel::default(),
            n_fish: 5,
        }
    }
}

/// Texture, frames, correspondences and frame-local fish annotations from
/// one seed.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<SyntheticSequence> {
    let seq = &spec.sequence;
    let margin = required_margin(&spec.motion, seq.frame_width, seq.frame_height).ceil();
    let texture = generate_texture(
        seq.frame_width + 2 * margin as usize,
        seq.frame_height + 2 * margin as usize,
        seq.seed,
    )?;
    let transforms = spec
        .motion
        .sample_transforms(seq.frame_width, seq.frame_height, seq.n_frames)?;
    let mut out = generate_sequence(&texture, &transforms, Point2::new(margin, margin), seq)?;
    if spec.n_fish > 0 {
        let tracks = generate_fish_tracks(&FishTrackSpec {
            n_fish: spec.n_fish,
            n_frames: seq.n_frames,
            seed: seq.seed,
            area: (seq.frame_width as f64, seq.frame_height as f64),
        })?;
        out.truth.annotations = localize_annotations(&tracks, &transforms)?;
    }
    Ok(out)
}
