// SPDX-License-Identifier: Apache-2.0

//! Value types shared by every stage: points, affine transforms, RGB rasters
//! and the stitched-canvas layout.
//!
//! Coordinates follow raster order. `x` is the column (growing rightward),
//! `y` is the row (growing downward) and the origin sits on the center of the
//! top-left pixel, so pixel `(i, j)` is sampled at exactly `(i as f64, j as f64)`.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Determinant magnitude below which a transform is treated as singular.
pub const SINGULAR_DET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product of two planar vectors.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

/// A 2×3 affine map `[[a, b, tx], [c, d, ty]]` taking frame coordinates to
/// reference (or map) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 2]", into = "[[f64; 3]; 2]")]
pub struct AffineTransform {
    m: [[f64; 3]; 2],
}

impl TryFrom<[[f64; 3]; 2]> for AffineTransform {
    type Error = Error;
    fn try_from(m: [[f64; 3]; 2]) -> Result<Self> {
        AffineTransform::new(m)
    }
}

impl From<AffineTransform> for [[f64; 3]; 2] {
    fn from(t: AffineTransform) -> Self {
        t.m
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn new(m: [[f64; 3]; 2]) -> Result<Self> {
        if m.iter().flatten().all(|v| v.is_finite()) {
            Ok(AffineTransform { m })
        } else {
            Err(Error::NonFiniteInput("affine transform"))
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineTransform {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty]],
        }
    }

    /// Rotation by `angle` radians (counter-clockwise in a y-up frame) and
    /// uniform `scale`, followed by translation.
    pub fn similarity(angle: f64, scale: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        AffineTransform {
            m: [[scale * c, -scale * s, tx], [scale * s, scale * c, ty]],
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 2] {
        self.m
    }

    pub fn translation_part(&self) -> Point2 {
        Point2::new(self.m[0][2], self.m[1][2])
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let [[a, b, tx], [c, d, ty]] = self.m;
        Point2::new(a * p.x + b * p.y + tx, c * p.x + d * p.y + ty)
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if det.is_nan() || det.abs() <= SINGULAR_DET {
            return Err(Error::SingularTransform { det });
        }
        let [[a, b, tx], [c, d, ty]] = self.m;
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Ok(AffineTransform {
            m: [[ia, ib, -(ia * tx + ib * ty)], [ic, id, -(ic * tx + id * ty)]],
        })
    }

    /// The transform equivalent to applying `self` first and `after` second.
    pub fn then(&self, after: &AffineTransform) -> AffineTransform {
        let [[a1, b1, t1], [c1, d1, u1]] = self.m;
        let [[a2, b2, t2], [c2, d2, u2]] = after.m;
        AffineTransform {
            m: [
                [a2 * a1 + b2 * c1, a2 * b1 + b2 * d1, a2 * t1 + b2 * u1 + t2],
                [c2 * a1 + d2 * c1, c2 * b1 + d2 * d1, c2 * t1 + d2 * u1 + u2],
            ],
        }
    }

    /// Adds `offset` to the translation column.
    pub fn shifted(&self, offset: Point2) -> AffineTransform {
        let mut m = self.m;
        m[0][2] += offset.x;
        m[1][2] += offset.y;
        AffineTransform { m }
    }

    /// Largest absolute entry-wise difference between two transforms.
    pub fn max_abs_diff(&self, other: &AffineTransform) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub type Rgb = [f64; 3];

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions { width, height });
    }
    if width * height != len {
        return Err(Error::BufferSizeMismatch {
            expected: width * height,
            actual: len,
        });
    }
    Ok(())
}

/// A three-channel raster with every intensity finite and inside `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        for (i, px) in pixels.iter().enumerate() {
            for &v in px {
                if !v.is_finite() {
                    return Err(Error::NonFiniteInput("image"));
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfRange {
                        x: i % width,
                        y: i / width,
                        value: v,
                    });
                }
            }
        }
        Ok(ImageBuffer { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: Rgb) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn black(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Caller guarantees the range invariant.
    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<Rgb>) -> Self {
        debug_assert_eq!(width * height, pixels.len());
        ImageBuffer { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    /// Overwrites a pixel, clamping the value into `[0, 1]`.
    pub fn put(&mut self, x: usize, y: usize, value: Rgb) {
        self.pixels[y * self.width + x] = value.map(|v| v.clamp(0.0, 1.0));
    }

    pub fn into_unclamped(self) -> UnclampedImage {
        UnclampedImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels,
        }
    }
}

/// An intermediate raster whose intensities may leave `[0, 1]`; turn it into
/// an [`ImageBuffer`] with [`UnclampedImage::clamp`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnclampedImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl UnclampedImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(UnclampedImage { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn clamp(self) -> Result<ImageBuffer> {
        let mut pixels = self.pixels;
        for px in &mut pixels {
            for v in px.iter_mut() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteInput("unclamped image"));
                }
                *v = v.clamp(0.0, 1.0);
            }
        }
        Ok(ImageBuffer::from_raw(self.width, self.height, pixels))
    }
}

/// Canvas size, padding shift and per-frame shifted transforms that place
/// every frame in one map coordinate system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchLayout {
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub offset: Point2,
    pub shifted_transforms: Vec<AffineTransform>,
}

impl StitchLayout {
    pub fn frame_count(&self) -> usize {
        self.shifted_transforms.len()
    }

    pub fn shifted_transform(&self, frame: usize) -> Result<&AffineTransform> {
        self.shifted_transforms.get(frame).ok_or(Error::FrameOutOfRange {
            frame,
            frames: self.shifted_transforms.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(p: Point2, x: f64, y: f64) {
        assert!(
            (p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12,
            "{p:?} vs ({x}, {y})"
        );
    }

    #[test]
    fn apply_examples() {
        assert_close(AffineTransform::IDENTITY.apply(Point2::new(7.5, -2.0)), 7.5, -2.0);
        let t = AffineTransform::new([[1.0, 0.0, 10.0], [0.0, 1.0, 5.0]]).unwrap();
        assert_close(t.apply(Point2::ORIGIN), 10.0, 5.0);
        let rot = AffineTransform::new([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        assert_close(rot.apply(Point2::new(1.0, 0.0)), 0.0, 1.0);
    }

    #[test]
    fn invert_examples() {
        assert_eq!(AffineTransform::IDENTITY.inverse().unwrap(), AffineTransform::IDENTITY);
        let inv = AffineTransform::translation(10.0, 5.0).inverse().unwrap();
        assert_eq!(inv.matrix(), [[1.0, 0.0, -10.0], [0.0, 1.0, -5.0]]);
        let scale = AffineTransform::new([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
        assert_eq!(scale.inverse().unwrap().matrix(), [[0.5, 0.0, 0.0], [0.0, 0.5, 0.0]]);
    }

    #[test]
    fn singular_inverse_rejected() {
        let t = AffineTransform::new([[1.0, 2.0, 0.0], [2.0, 4.0, 1.0]]).unwrap();
        assert!(matches!(t.inverse(), Err(Error::SingularTransform { .. })));
        assert!(AffineTransform::new([[f64::NAN, 0.0, 0.0], [0.0, 1.0, 0.0]]).is_err());
    }

    #[test]
    fn clamp_examples() {
        let img = UnclampedImage::new(2, 1, vec![[0.2, 0.4, 0.6], [1.2, -0.3, 1.0]]).unwrap();
        let c = img.clamp().unwrap();
        assert_eq!(c.pixels(), &[[0.2, 0.4, 0.6], [1.0, 0.0, 1.0]]);

        let inside = ImageBuffer::filled(3, 2, [0.1, 0.5, 0.9]).unwrap();
        assert_eq!(inside.clone().into_unclamped().clamp().unwrap(), inside);

        let bad = UnclampedImage::new(1, 1, vec![[f64::NAN, 0.0, 0.0]]).unwrap();
        assert!(matches!(bad.clamp(), Err(Error::NonFiniteInput(_))));
        let inf = UnclampedImage::new(1, 1, vec![[0.0, f64::INFINITY, 0.0]]).unwrap();
        assert!(matches!(inf.clamp(), Err(Error::NonFiniteInput(_))));
    }

    #[test]
    fn image_constructor_validates() {
        assert!(matches!(ImageBuffer::black(0, 3), Err(Error::InvalidDimensions { .. })));
        assert!(matches!(
            ImageBuffer::new(2, 2, vec![[0.0; 3]; 3]),
            Err(Error::BufferSizeMismatch { .. })
        ));
        assert!(matches!(
            ImageBuffer::new(1, 1, vec![[1.5, 0.0, 0.0]]),
            Err(Error::OutOfRange { .. })
        ));
    }

    fn transform() -> impl Strategy<Value = AffineTransform> {
        prop::array::uniform6(-10.0f64..10.0)
            .prop_map(|[a, b, c, d, tx, ty]| AffineTransform::new([[a, b, tx * 50.0], [c, d, ty * 50.0]]).unwrap())
    }

    proptest! {
        #[test]
        fn composition_matches_sequential_application(
            t1 in transform(), t2 in transform(), x in -1e3f64..1e3, y in -1e3f64..1e3
        ) {
            let p = Point2::new(x, y);
            let seq = t2.apply(t1.apply(p));
            let comp = t1.then(&t2).apply(p);
            let scale = 1.0 + seq.norm();
            prop_assert!((seq - comp).norm() <= 1e-9 * scale);
        }

        #[test]
        fn inverse_round_trips(
            angle in -3.2f64..3.2, scale in 0.2f64..5.0, shear in -0.5f64..0.5,
            tx in -1e3f64..1e3, ty in -1e3f64..1e3,
            x in -1e6f64..1e6, y in -1e6f64..1e6
        ) {
            let base = AffineTransform::similarity(angle, scale, tx, ty);
            let shear = AffineTransform::new([[1.0, shear, 0.0], [0.0, 1.0, 0.0]]).unwrap();
            let t = shear.then(&base);
            let p = Point2::new(x, y);
            let back = t.inverse().unwrap().apply(t.apply(p));
            prop_assert!((back - p).norm() <= 1e-6, "{:?} -> {:?}", p, back);
        }

        #[test]
        fn clamp_is_idempotent(values in prop::collection::vec(-2.0f64..3.0, 12)) {
            let pixels: Vec<Rgb> = values.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            let once = UnclampedImage::new(2, 2, pixels).unwrap().clamp().unwrap();
            let twice = once.clone().into_unclamped().clamp().unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
