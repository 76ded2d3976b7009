#![allow(dead_code)]

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ensemble_sysid::dynamics::CostMatrix;
use ensemble_sysid::measures::{DiscreteMeasure, ObservationSequence, Point};

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Point> {
    (0..n)
        .map(|_| Point((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()))
        .collect()
}

/// `T` snapshots of `n` unit-mass points each.
pub fn unit_sequence(rng: &mut ChaCha8Rng, horizon: usize, n: usize, d: usize) -> ObservationSequence {
    ObservationSequence::new(
        (0..horizon)
            .map(|_| DiscreteMeasure::uniform(random_points(rng, n, d)).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Snapshots of different sizes with random positive masses of equal total.
pub fn weighted_sequence(rng: &mut ChaCha8Rng, sizes: &[usize], d: usize) -> ObservationSequence {
    let measures = sizes
        .iter()
        .map(|&n| {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
            let s: f64 = raw.iter().sum();
            DiscreteMeasure::new(random_points(rng, n, d), raw.iter().map(|m| 3.0 * m / s).collect()).unwrap()
        })
        .collect();
    ObservationSequence::new(measures).unwrap()
}

pub fn random_costs(rng: &mut ChaCha8Rng, k: usize, sizes: &[usize]) -> Vec<Vec<CostMatrix>> {
    (0..k)
        .map(|_| {
            sizes
                .windows(2)
                .map(|w| CostMatrix::from_fn(w[0], w[1], |_, _| rng.random_range(0.0..10.0)).unwrap())
                .collect()
        })
        .collect()
}

/// Cheapest assignment by enumerating every permutation.
pub fn brute_force_assignment(cost: &CostMatrix) -> f64 {
    let n = cost.rows();
    assert_eq!(n, cost.cols());
    (0..n)
        .permutations(n)
        .map(|p| p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Weighted least squares `y ≈ A x + b` straight from the normal equations
/// `(ZᵀWZ) Θ = ZᵀWY` with `Z = [x 1]`.
pub fn normal_equations(xs: &[Vec<f64>], ys: &[Vec<f64>], ws: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let d = xs[0].len();
    let n = xs.len();
    let z = DMatrix::from_fn(n, d + 1, |r, c| if c < d { xs[r][c] } else { 1.0 });
    let y = DMatrix::from_fn(n, d, |r, c| ys[r][c]);
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(ws));
    let lhs = z.transpose() * &w * &z;
    let rhs = z.transpose() * &w * &y;
    let theta = lhs.try_inverse().expect("well-posed system") * rhs;
    let a = theta.rows(0, d).transpose();
    let b = theta.row(d).transpose();
    (a, b)
}
