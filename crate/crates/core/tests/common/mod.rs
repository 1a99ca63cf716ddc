//! Independent reference computations shared by the integration and
//! acceptance tests. Nothing here calls the code under test.
#![allow(dead_code)]

use gpdiff::diffusion::NoiseSchedule;
use gpdiff::maze::MazeMap;
use gpdiff::Trajectory;
use nalgebra::{DMatrix, DVector};

/// Condition `N(mean, cov)` on `y = τ[sel] + e`, `e ~ N(0, ky)`, by
/// partitioning the joint Gaussian of `(τ, y)` and inverting the observed
/// block with a general LU inverse.
pub fn brute_condition(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    sel: &[usize],
    y: &DVector<f64>,
    ky: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mean.len();
    let m = sel.len();
    let mut c = DMatrix::zeros(m, n);
    for (r, &k) in sel.iter().enumerate() {
        c[(r, k)] = 1.0;
    }
    let s_ty = cov * c.transpose();
    let s_yy = &c * cov * c.transpose() + ky;
    let s_yy_inv = s_yy.try_inverse().expect("observation block invertible");
    let post_mean = mean + &s_ty * &s_yy_inv * (y - &c * mean);
    let post_cov = cov - &s_ty * &s_yy_inv * s_ty.transpose();
    (post_mean, post_cov)
}

pub fn dense_mahalanobis(cov: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let inv = cov.clone().try_inverse().expect("invertible");
    (v.transpose() * inv * v)[(0, 0)]
}

/// Compose the one-step forward kernel `τᵏ = √αₖ τᵏ⁻¹ + (1−√αₖ) μ + √βₖ ε`
/// `i` times. Returns the coefficients `(a, b, s)` of
/// `τⁱ = a τ⁰ + b μ + noise` with noise covariance `s K`.
pub fn compose_forward(sched: &NoiseSchedule, i: usize) -> (f64, f64, f64) {
    let (mut a, mut b, mut s) = (1.0, 0.0, 0.0);
    for k in 1..=i {
        let beta = sched.betas()[k - 1];
        let sa = (1.0 - beta).sqrt();
        a *= sa;
        b = sa * b + (1.0 - sa);
        s = (1.0 - beta) * s + beta;
    }
    (a, b, s)
}

/// Scalar posterior of `τⁱ⁻¹` given `(τⁱ, τ⁰)` from the product
/// `q(τⁱ|τⁱ⁻¹) q(τⁱ⁻¹|τ⁰)`, found by fitting the log-density quadratic at three
/// points. Returns `(mean, variance)`.
pub fn scalar_posterior(sched: &NoiseSchedule, i: usize, tau0: f64, tau_i: f64, mu: f64, k: f64) -> (f64, f64) {
    let beta = sched.betas()[i - 1];
    let alpha = 1.0 - beta;
    let ab_prev: f64 = sched.betas()[..i - 1].iter().map(|b| 1.0 - b).product();
    if i == 1 {
        return (tau0, 0.0);
    }
    let log_density = |x: f64| {
        let m1 = alpha.sqrt() * x + (1.0 - alpha.sqrt()) * mu;
        let v1 = beta * k;
        let m2 = ab_prev.sqrt() * tau0 + (1.0 - ab_prev.sqrt()) * mu;
        let v2 = (1.0 - ab_prev) * k;
        -0.5 * (tau_i - m1).powi(2) / v1 - 0.5 * (x - m2).powi(2) / v2
    };
    let (fm, f0, fp) = (log_density(-1.0), log_density(0.0), log_density(1.0));
    let a = 0.5 * (fp + fm - 2.0 * f0);
    let b = 0.5 * (fp - fm);
    (-b / (2.0 * a), -1.0 / (2.0 * a))
}

/// Coefficients `(c0, ci, eta, beta_tilde)` read off the scalar oracle by
/// probing with unit inputs.
pub fn oracle_coeffs(sched: &NoiseSchedule, i: usize) -> (f64, f64, f64, f64) {
    let c0 = scalar_posterior(sched, i, 1.0, 0.0, 0.0, 1.0).0;
    let ci = scalar_posterior(sched, i, 0.0, 1.0, 0.0, 1.0).0;
    let eta = scalar_posterior(sched, i, 0.0, 0.0, 1.0, 1.0).0;
    let bt = scalar_posterior(sched, i, 0.0, 0.0, 0.0, 1.0).1;
    (c0, ci, eta, bt)
}

/// Collision check with 100 times the library's sub-step density.
pub fn oversampled_collision_free(map: &MazeMap, traj: &Trajectory) -> bool {
    let step = map.cell_size / 400.0;
    (0..traj.horizon().saturating_sub(1)).all(|t| {
        let a = [traj.get(t, 0), traj.get(t, 1)];
        let b = [traj.get(t + 1, 0), traj.get(t + 1, 1)];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let n = ((len / step).ceil() as usize).max(1);
        (0..=n).all(|k| {
            let s = k as f64 / n as f64;
            let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let cx = (p[0] / map.cell_size).floor();
            let cy = (p[1] / map.cell_size).floor();
            cx >= 0.0
                && cy >= 0.0
                && (cx as usize) < map.width()
                && (cy as usize) < map.height()
                && !map.is_occupied(cx as usize, cy as usize)
        })
    })
}

/// Empirical mean and covariance of column samples.
pub fn empirical_moments(samples: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples[0].len();
    let m = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(n), |acc, s| acc + s) / m;
    let mut x = DMatrix::zeros(n, samples.len());
    for (k, s) in samples.iter().enumerate() {
        x.set_column(k, &(s - &mean));
    }
    let cov = &x * x.transpose() / (m - 1.0);
    (mean, cov)
}
