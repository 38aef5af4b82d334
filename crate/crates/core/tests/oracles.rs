// SPDX-License-Identifier: Apache-2.0

//! Cross-checks against a general-purpose linear algebra library.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use proptest::prelude::*;
use reefstitch::color::compute_channel_stats;
use reefstitch::color::solve_awb_params;
use reefstitch::estimation::{fit_affine_least_squares, PointPair};
use reefstitch::imaging::{ImageBuffer, Point2};
use reefstitch::synth::generate_texture;

/// Solves the 2n x 6 normal problem directly with an SVD.
fn svd_affine(pairs: &[PointPair]) -> [[f64; 3]; 2] {
    let n = pairs.len();
    let mut a = DMatrix::zeros(2 * n, 6);
    let mut b = DVector::zeros(2 * n);
    for (k, p) in pairs.iter().enumerate() {
        let (x, y) = (p.source.x, p.source.y);
        a.row_mut(2 * k).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0]);
        a.row_mut(2 * k + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0]);
        b[2 * k] = p.reference.x;
        b[2 * k + 1] = p.reference.y;
    }
    let m = a.svd(true, true).solve(&b, 1e-14).unwrap();
    [[m[0], m[1], m[2]], [m[3], m[4], m[5]]]
}

fn pairs_strategy() -> impl Strategy<Value = Vec<PointPair>> {
    prop::collection::vec(
        ((0.0..640.0f64, 0.0..480.0f64), (-700.0..700.0f64, -700.0..700.0f64)),
        6..40,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|((sx, sy), (rx, ry))| PointPair::new(Point2::new(sx, sy), Point2::new(rx, ry)))
            .collect()
    })
}

proptest! {
    #[test]
    fn least_squares_matches_svd(pairs in pairs_strategy()) {
        let ours = fit_affine_least_squares(&pairs).unwrap().matrix();
        let oracle = svd_affine(&pairs);
        for r in 0..2 {
            for c in 0..3 {
                // Translation entries carry the coordinate magnitude.
                let scale = if c == 2 { 1e3 } else { 1.0 };
                prop_assert!((ours[r][c] - oracle[r][c]).abs() < 1e-8 * scale, "{:?} vs {:?}", ours, oracle);
            }
        }
    }
}

#[test]
fn white_balance_matches_lu() {
    for seed in 0..20 {
        let img = generate_texture(50 + seed as usize, 40, seed).unwrap();
        let params = solve_awb_params(&compute_channel_stats(&img)).unwrap();
        let px = img.pixels();
        let green_sum: f64 = px.iter().map(|p| p[1]).sum();
        let green_max = px.iter().map(|p| p[1]).fold(0.0, f64::max);
        for (c, coeffs) in [(0, params.red), (2, params.blue)] {
            let sum_sq: f64 = px.iter().map(|p| p[c] * p[c]).sum();
            let sum: f64 = px.iter().map(|p| p[c]).sum();
            let max = px.iter().map(|p| p[c]).fold(0.0, f64::max);
            let m = Matrix2::new(sum_sq, sum, max * max, max);
            let x = m.lu().solve(&Vector2::new(green_sum, green_max)).unwrap();
            assert_relative_eq!(coeffs.mu, x[0], max_relative = 1e-9);
            assert_relative_eq!(coeffs.v, x[1], max_relative = 1e-9);
        }
    }
}

#[test]
fn identity_for_balanced_image() {
    let img = ImageBuffer::from_fn(9, 7, |x, y| {
        let v = ((x * 7 + y * 3) % 11) as f64 / 10.0;
        [v, v, v]
    })
    .unwrap();
    let params = solve_awb_params(&compute_channel_stats(&img)).unwrap();
    assert_relative_eq!(params.red.mu, 0.0, epsilon = 1e-12);
    assert_relative_eq!(params.red.v, 1.0, epsilon = 1e-12);
}
