// SPDX-License-Identifier: Apache-2.0

//! Least-squares affine fitting and RANSAC over labeled point correspondences.
//!
//! Every frame is registered against the reference frame (frame 0) from
//! manually labeled keypoint pairs. RANSAC draws minimal samples of three
//! pairs, fits an exact affine map to each, and counts the pairs whose
//! residual is below `epsilon`. As soon as the inlier fraction reaches `tau`
//! the model is refit on all inliers and returned; otherwise the best
//! consensus set found within `max_iterations` is refit and returned with
//! `converged = false`.
//!
//! Sampling uses ChaCha8 seeded from [`RansacConfig::seed`], so a run is a
//! pure function of its inputs.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{AffineTransform, Point2};
use crate::linalg::solve_2x2;

/// Minimal sample size for a 6-DOF affine model.
pub const MIN_SAMPLE: usize = 3;
/// A sampled triple is rejected when `|(p2 - p1) x (p3 - p1)|` is at or below this.
pub const COLLINEAR_SAMPLE_AREA: f64 = 1e-6;
/// Redraws allowed per iteration before giving up on a collinear sample.
pub const SAMPLE_RETRIES: usize = 100;
/// Minimum triangle area (px²) required of a least-squares input.
pub const MIN_TRIANGLE_AREA: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    /// Point in the current frame.
    pub source: Point2,
    /// The same scene point in the reference frame.
    pub reference: Point2,
}

impl PointPair {
    pub fn new(source: Point2, reference: Point2) -> Self {
        PointPair { source, reference }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub frame_index: usize,
    pub pairs: Vec<PointPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Inlier residual tolerance in pixels.
    pub epsilon: f64,
    /// Inlier fraction that triggers refit-and-terminate.
    pub tau: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            epsilon: 3.0,
            tau: 0.8,
            max_iterations: 1000,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidConfig(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub transform: AffineTransform,
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
    pub iterations_used: usize,
    /// The inlier fraction reached `tau`.
    pub converged: bool,
}

/// Euclidean distance between the mapped source and the reference point.
pub fn residual(t: &AffineTransform, pair: &PointPair) -> f64 {
    t.apply(pair.source).distance(pair.reference)
}

fn max_triangle_area(points: &[Point2]) -> f64 {
    // Anchor on the first point and the point farthest from it; the largest
    // triangle over that base bounds the configuration's spread.
    let p0 = points[0];
    let far = points
        .iter()
        .copied()
        .max_by(|a, b| a.distance(p0).total_cmp(&b.distance(p0)))
        .unwrap_or(p0);
    let base = far - p0;
    points
        .iter()
        .map(|&p| 0.5 * base.cross(p - p0).abs())
        .fold(0.0, f64::max)
}

/// Least-squares affine fit minimizing `sum |M * source - reference|^2`.
///
/// The x and y output rows decouple into two independent linear regressions
/// sharing one design matrix; both are solved on centered coordinates.
pub fn fit_affine_least_squares(pairs: &[PointPair]) -> Result<AffineTransform> {
    if pairs.len() < MIN_SAMPLE {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least {MIN_SAMPLE} pairs, got {}",
            pairs.len()
        )));
    }
    let sources: Vec<Point2> = pairs.iter().map(|p| p.source).collect();
    if !pairs.iter().all(|p| p.source.is_finite() && p.reference.is_finite()) {
        return Err(Error::NonFiniteInput("point pair"));
    }
    if max_triangle_area(&sources) <= MIN_TRIANGLE_AREA {
        return Err(Error::DegenerateConfiguration("source points are collinear".into()));
    }

    let n = pairs.len() as f64;
    let (mut ms, mut mr) = (Point2::ORIGIN, Point2::ORIGIN);
    for p in pairs {
        ms = ms + p.source;
        mr = mr + p.reference;
    }
    let (ms, mr) = (ms * (1.0 / n), mr * (1.0 / n));

    // Scatter of centered sources, and cross-covariances with each output axis.
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut ux, mut uy, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
    for p in pairs {
        let s = p.source - ms;
        let r = p.reference - mr;
        sxx += s.x * s.x;
        sxy += s.x * s.y;
        syy += s.y * s.y;
        ux += r.x * s.x;
        uy += r.x * s.y;
        vx += r.y * s.x;
        vy += r.y * s.y;
    }
    let scatter = [[sxx, sxy], [sxy, syy]];
    let degenerate = || Error::DegenerateConfiguration("singular normal equations".into());
    let [a, b] = solve_2x2(scatter, [ux, uy], 1e-12).ok_or_else(degenerate)?;
    let [c, d] = solve_2x2(scatter, [vx, vy], 1e-12).ok_or_else(degenerate)?;
    let tx = mr.x - (a * ms.x + b * ms.y);
    let ty = mr.y - (c * ms.x + d * ms.y);
    AffineTransform::new([[a, b, tx], [c, d, ty]])
}

fn consensus(t: &AffineTransform, pairs: &[PointPair], epsilon: f64) -> (Vec<bool>, usize) {
    let mask: Vec<bool> = pairs.iter().map(|p| residual(t, p) < epsilon).collect();
    let count = mask.iter().filter(|&&m| m).count();
    (mask, count)
}

fn select(pairs: &[PointPair], mask: &[bool]) -> Vec<PointPair> {
    pairs.iter().zip(mask).filter_map(|(p, &m)| m.then_some(*p)).collect()
}

/// Draws a non-collinear triple and fits it, retrying up to the budget.
fn draw_minimal_model(rng: &mut ChaCha8Rng, pairs: &[PointPair]) -> Option<AffineTransform> {
    for _ in 0..SAMPLE_RETRIES {
        let idx = index::sample(rng, pairs.len(), MIN_SAMPLE);
        let sample = [pairs[idx.index(0)], pairs[idx.index(1)], pairs[idx.index(2)]];
        let (p1, p2, p3) = (sample[0].source, sample[1].source, sample[2].source);
        if (p2 - p1).cross(p3 - p1).abs() <= COLLINEAR_SAMPLE_AREA {
            continue;
        }
        if let Ok(t) = fit_affine_least_squares(&sample) {
            return Some(t);
        }
    }
    None
}

/// Refits on the consensus set and recomputes the mask once. Keeps the
/// minimal-sample model when the refit would lose inliers.
fn refit(
    pairs: &[PointPair],
    model: AffineTransform,
    mask: Vec<bool>,
    count: usize,
    epsilon: f64,
) -> (AffineTransform, Vec<bool>, usize) {
    match fit_affine_least_squares(&select(pairs, &mask)) {
        Ok(t) => {
            let (new_mask, new_count) = consensus(&t, pairs, epsilon);
            if new_count >= count {
                (t, new_mask, new_count)
            } else {
                (model, mask, count)
            }
        }
        Err(_) => (model, mask, count),
    }
}

pub fn ransac_affine(pairs: &[PointPair], cfg: &RansacConfig) -> Result<RansacResult> {
    cfg.validate()?;
    if pairs.len() < MIN_SAMPLE {
        return Err(Error::DegenerateConfiguration(format!(
            "need at least {MIN_SAMPLE} pairs, got {}",
            pairs.len()
        )));
    }
    let total = pairs.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(AffineTransform, Vec<bool>, usize)> = None;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let Some(model) = draw_minimal_model(&mut rng, pairs) else {
            if best.is_some() {
                break;
            }
            return Err(Error::NoValidSample {
                retries: SAMPLE_RETRIES,
            });
        };
        let (mask, count) = consensus(&model, pairs, cfg.epsilon);
        if count as f64 / total >= cfg.tau {
            let (transform, inlier_mask, inlier_count) = refit(pairs, model, mask, count, cfg.epsilon);
            return Ok(RansacResult {
                transform,
                inlier_mask,
                inlier_count,
                iterations_used: iterations,
                converged: true,
            });
        }
        if best.as_ref().map_or(true, |b| count > b.2) {
            best = Some((model, mask, count));
        }
    }

    let (model, mask, count) = best.expect("at least one iteration ran");
    let (transform, inlier_mask, inlier_count) = refit(pairs, model, mask, count, cfg.epsilon);
    Ok(RansacResult {
        transform,
        inlier_mask,
        inlier_count,
        iterations_used: iterations,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(sx: f64, sy: f64, rx: f64, ry: f64) -> PointPair {
        PointPair::new(Point2::new(sx, sy), Point2::new(rx, ry))
    }

    fn grid(n: usize) -> Vec<Point2> {
        (0..n)
            .map(|i| {
                Point2::new(
                    (i % 5) as f64 * 17.0 + (i / 5) as f64 * 3.0,
                    (i / 5) as f64 * 23.0 + (i % 3) as f64,
                )
            })
            .collect()
    }

    #[test]
    fn least_squares_examples() {
        let same: Vec<_> = [(0.0, 0.0), (4.0, 1.0), (2.0, 7.0)]
            .iter()
            .map(|&(x, y)| pair(x, y, x, y))
            .collect();
        assert!(
            fit_affine_least_squares(&same)
                .unwrap()
                .max_abs_diff(&AffineTransform::IDENTITY)
                < 1e-12
        );

        let shifted = [
            pair(0.0, 0.0, 10.0, 5.0),
            pair(1.0, 0.0, 11.0, 5.0),
            pair(0.0, 1.0, 10.0, 6.0),
        ];
        let t = fit_affine_least_squares(&shifted).unwrap();
        assert!(
            t.max_abs_diff(&AffineTransform::translation(10.0, 5.0)) < 1e-12,
            "{t:?}"
        );

        assert!(matches!(
            fit_affine_least_squares(&shifted[..2]),
            Err(Error::DegenerateConfiguration(_))
        ));
        let collinear = [
            pair(0.0, 0.0, 0.0, 0.0),
            pair(1.0, 1.0, 1.0, 1.0),
            pair(2.0, 2.0, 2.0, 2.0),
        ];
        assert!(matches!(
            fit_affine_least_squares(&collinear),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn exact_fit_for_three_pairs() {
        let t = AffineTransform::new([[1.1, -0.3, 12.0], [0.2, 0.9, -7.0]]).unwrap();
        let src = [Point2::new(3.0, 4.0), Point2::new(40.0, 2.0), Point2::new(10.0, 30.0)];
        let pairs: Vec<_> = src.iter().map(|&s| PointPair::new(s, t.apply(s))).collect();
        let fit = fit_affine_least_squares(&pairs).unwrap();
        for p in &pairs {
            assert!(residual(&fit, p) <= 1e-9);
        }
    }

    #[test]
    fn residual_examples() {
        let id = AffineTransform::IDENTITY;
        assert_eq!(residual(&id, &pair(2.0, 3.0, 2.0, 3.0)), 0.0);
        assert_eq!(residual(&id, &pair(0.0, 0.0, 3.0, 4.0)), 5.0);
        assert_eq!(
            residual(&AffineTransform::translation(3.0, 4.0), &pair(0.0, 0.0, 3.0, 4.0)),
            0.0
        );
    }

    #[test]
    fn ransac_translation() {
        let t = AffineTransform::translation(10.0, 5.0);
        let pairs: Vec<_> = grid(10).into_iter().map(|s| PointPair::new(s, t.apply(s))).collect();
        let cfg = RansacConfig {
            epsilon: 1.0,
            tau: 0.8,
            ..Default::default()
        };
        let r = ransac_affine(&pairs, &cfg).unwrap();
        assert!(r.transform.max_abs_diff(&t) < 1e-6);
        assert_eq!(r.inlier_count, 10);
        assert!(r.converged);
        assert_eq!(r.iterations_used, 1);
    }

    #[test]
    fn ransac_rejects_gross_outliers() {
        let mut pairs: Vec<_> = grid(10).into_iter().map(|s| PointPair::new(s, s)).collect();
        for i in [1, 4, 8] {
            pairs[i].reference = pairs[i].reference + Point2::new(100.0, 0.0);
        }
        let cfg = RansacConfig {
            tau: 0.6,
            ..Default::default()
        };
        let r = ransac_affine(&pairs, &cfg).unwrap();
        assert!(r.transform.max_abs_diff(&AffineTransform::IDENTITY) < 1e-9);
        let expected: Vec<bool> = (0..10).map(|i| ![1, 4, 8].contains(&i)).collect();
        assert_eq!(r.inlier_mask, expected);

        // Brute force: no 3-subset fit has a larger consensus than the clean set.
        let mut best = 0;
        for i in 0..10 {
            for j in i + 1..10 {
                for k in j + 1..10 {
                    if let Ok(t) = fit_affine_least_squares(&[pairs[i], pairs[j], pairs[k]]) {
                        best = best.max(consensus(&t, &pairs, cfg.epsilon).1);
                    }
                }
            }
        }
        assert_eq!(best, 7);
    }

    #[test]
    fn ransac_errors() {
        let two = [pair(0.0, 0.0, 0.0, 0.0), pair(1.0, 0.0, 1.0, 0.0)];
        assert!(matches!(
            ransac_affine(&two, &RansacConfig::default()),
            Err(Error::DegenerateConfiguration(_))
        ));
        let line: Vec<_> = (0..6).map(|i| pair(i as f64, 0.0, i as f64, 0.0)).collect();
        assert!(matches!(
            ransac_affine(&line, &RansacConfig::default()),
            Err(Error::NoValidSample { .. })
        ));
        let bad = RansacConfig {
            tau: 0.0,
            ..Default::default()
        };
        assert!(matches!(ransac_affine(&line, &bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn non_convergence_returns_best_model() {
        // Half the pairs follow a translation; the tau threshold is out of reach.
        let t = AffineTransform::translation(4.0, -2.0);
        let mut pairs: Vec<_> = grid(12).into_iter().map(|s| PointPair::new(s, t.apply(s))).collect();
        for (i, p) in pairs.iter_mut().enumerate().filter(|(i, _)| i % 2 == 1) {
            p.reference = p.reference + Point2::new(60.0 + i as f64 * 7.0, 45.0 - i as f64 * 11.0);
        }
        let cfg = RansacConfig {
            tau: 0.9,
            max_iterations: 50,
            ..Default::default()
        };
        let r = ransac_affine(&pairs, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations_used, 50);
        assert_eq!(r.inlier_count, 6);
        assert!(r.transform.max_abs_diff(&t) < 1e-9);
    }

    fn affine() -> impl Strategy<Value = AffineTransform> {
        (
            -0.6f64..0.6,
            0.7f64..1.4,
            -0.2f64..0.2,
            -200.0f64..200.0,
            -200.0f64..200.0,
        )
            .prop_map(|(angle, scale, shear, tx, ty)| {
                AffineTransform::new([[1.0, shear, 0.0], [0.0, 1.0, 0.0]])
                    .unwrap()
                    .then(&AffineTransform::similarity(angle, scale, tx, ty))
            })
    }

    proptest! {
        #[test]
        fn deterministic_given_seed(t in affine(), seed in any::<u64>()) {
            let mut pairs: Vec<_> = grid(15).into_iter().map(|s| PointPair::new(s, t.apply(s))).collect();
            pairs[3].reference = pairs[3].reference + Point2::new(80.0, 80.0);
            let cfg = RansacConfig { seed, ..Default::default() };
            prop_assert_eq!(ransac_affine(&pairs, &cfg).unwrap(), ransac_affine(&pairs, &cfg).unwrap());
        }

        #[test]
        fn zero_noise_completeness(t in affine(), n in 3usize..20, seed in any::<u64>()) {
            let pairs: Vec<_> = grid(n.max(4)).into_iter().map(|s| PointPair::new(s, t.apply(s))).collect();
            let cfg = RansacConfig { seed, ..Default::default() };
            let r = ransac_affine(&pairs, &cfg).unwrap();
            prop_assert_eq!(r.inlier_count, pairs.len());
            for p in &pairs {
                prop_assert!(residual(&r.transform, p) < cfg.epsilon);
            }
        }

        #[test]
        fn mask_is_consistent(t in affine(), seed in any::<u64>(), noise in prop::collection::vec(-4.0f64..4.0, 30)) {
            let pairs: Vec<_> = grid(15)
                .into_iter()
                .zip(noise.chunks(2))
                .map(|(s, n)| PointPair::new(s, t.apply(s) + Point2::new(n[0], n[1])))
                .collect();
            let cfg = RansacConfig { seed, max_iterations: 200, ..Default::default() };
            let r = ransac_affine(&pairs, &cfg).unwrap();
            prop_assert_eq!(r.inlier_mask.iter().filter(|&&m| m).count(), r.inlier_count);
            for (p, &m) in pairs.iter().zip(&r.inlier_mask) {
                prop_assert_eq!(residual(&r.transform, p) < cfg.epsilon, m);
            }
            if r.converged {
                prop_assert!(r.inlier_count >= MIN_SAMPLE);
            }
        }
    }
}
