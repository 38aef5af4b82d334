// SPDX-License-Identifier: Apache-2.0

//! Small dense helpers: compensated summation and Gaussian elimination.

/// Neumaier-compensated running sum. Order-dependent but deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Solves the 2×2 system `a · x = rhs` by Gaussian elimination with partial
/// pivoting. Returns `None` when `|det| <= rel_tol * scale`, where `scale` is
/// the larger of the two products making up the determinant.
pub(crate) fn solve_2x2(a: [[f64; 2]; 2], rhs: [f64; 2], rel_tol: f64) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = (a[0][0] * a[1][1]).abs().max((a[0][1] * a[1][0]).abs());
    if !det.is_finite() || scale == 0.0 || det.abs() <= rel_tol * scale {
        return None;
    }
    let (mut a, mut rhs) = (a, rhs);
    if a[1][0].abs() > a[0][0].abs() {
        a.swap(0, 1);
        rhs.swap(0, 1);
    }
    let factor = a[1][0] / a[0][0];
    let a11 = a[1][1] - factor * a[0][1];
    let r1 = rhs[1] - factor * rhs[0];
    let x1 = r1 / a11;
    let x0 = (rhs[0] - a[0][1] * x1) / a[0][0];
    (x0.is_finite() && x1.is_finite()).then_some([x0, x1])
}
