//! Discrete constant-velocity Gaussian-process trajectory prior.
//!
//! States are stacked per timestep as `[position (d_pos), velocity (d_pos)]`,
//! and a trajectory is the concatenation of `H` such states.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Default limit on the number of rows of a dense trajectory kernel.
pub const DEFAULT_DENSE_BUDGET: usize = 4096;

/// Linear constant-velocity model driven by white-noise acceleration.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvModel {
    pub dt: f64,
    pub d_pos: usize,
    /// Spectral density of the acceleration noise, shared by all axes.
    pub q_c: f64,
    pub mu0: DVector<f64>,
    pub k0: DMatrix<f64>,
}

impl LtvModel {
    /// Model with zero initial mean and `sigma0² I` initial covariance.
    pub fn new(dt: f64, d_pos: usize, q_c: f64, sigma0: f64) -> Result<Self> {
        let d = 2 * d_pos;
        let model = LtvModel {
            dt,
            d_pos,
            q_c,
            mu0: DVector::zeros(d),
            k0: DMatrix::from_diagonal_element(d, d, sigma0 * sigma0),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn state_dim(&self) -> usize {
        2 * self.d_pos
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.state_dim();
        if !(self.dt >= 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be >= 0, got {}", self.dt)));
        }
        if !(self.q_c >= 0.0 && self.q_c.is_finite()) {
            return Err(Error::InvalidArgument(format!("q_c must be >= 0, got {}", self.q_c)));
        }
        if self.d_pos == 0 {
            return Err(Error::InvalidArgument("d_pos must be positive".into()));
        }
        if self.mu0.len() != d {
            return Err(Error::ShapeMismatch { expected: d, actual: self.mu0.len() });
        }
        if self.k0.nrows() != d || self.k0.ncols() != d {
            return Err(Error::ShapeMismatch { expected: d, actual: self.k0.nrows() });
        }
        let asym = linalg::max_abs(&(&self.k0 - self.k0.transpose()));
        if asym > 1e-12 * (1.0 + linalg::max_abs(&self.k0)) {
            return Err(Error::InvalidArgument("k0 is not symmetric".into()));
        }
        if linalg::min_eigenvalue(&self.k0) < -1e-12 {
            return Err(Error::InvalidArgument("k0 is not positive semidefinite".into()));
        }
        Ok(())
    }
}

/// One-step transition `[[I, dt I], [0, I]]`.
pub fn transition_matrix(model: &LtvModel) -> DMatrix<f64> {
    let p = model.d_pos;
    let mut phi = DMatrix::identity(2 * p, 2 * p);
    for k in 0..p {
        phi[(k, p + k)] = model.dt;
    }
    phi
}

/// One-step process noise of the white-noise-acceleration model.
pub fn process_noise(model: &LtvModel) -> DMatrix<f64> {
    let p = model.d_pos;
    let dt = model.dt;
    let qc = model.q_c;
    let mut q = DMatrix::zeros(2 * p, 2 * p);
    for k in 0..p {
        q[(k, k)] = dt.powi(3) / 3.0 * qc;
        q[(k, p + k)] = dt.powi(2) / 2.0 * qc;
        q[(p + k, k)] = dt.powi(2) / 2.0 * qc;
        q[(p + k, p + k)] = dt * qc;
    }
    q
}

/// Mean trajectory `Φ^t x0` for `t = 0..horizon`, stacked.
pub fn propagate_mean(model: &LtvModel, horizon: usize, x0: &DVector<f64>) -> DVector<f64> {
    let d = model.state_dim();
    let phi = transition_matrix(model);
    let mut out = DVector::zeros(horizon * d);
    let mut x = x0.clone();
    for t in 0..horizon {
        out.rows_mut(t * d, d).copy_from(&x);
        x = &phi * x;
    }
    out
}

/// Unconditioned trajectory-level Gaussian.
#[derive(Debug, Clone)]
pub struct GpPrior {
    pub mean: DVector<f64>,
    pub cov: Arc<DMatrix<f64>>,
    pub horizon: usize,
    pub state_dim: usize,
    fingerprint: u64,
}

impl GpPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, horizon: usize, state_dim: usize) -> Result<Self> {
        let n = horizon * state_dim;
        if mean.len() != n {
            return Err(Error::ShapeMismatch { expected: n, actual: mean.len() });
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::ShapeMismatch { expected: n, actual: cov.nrows() });
        }
        let fingerprint = fingerprint(&cov);
        Ok(GpPrior {
            mean,
            cov: Arc::new(cov),
            horizon,
            state_dim,
            fingerprint,
        })
    }

    pub fn dim(&self) -> usize {
        self.horizon * self.state_dim
    }

    /// Stable hash of the kernel bits; identifies the kernel in gain caches.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Same kernel with a different mean.
    pub fn with_mean(&self, mean: DVector<f64>) -> Result<Self> {
        if mean.len() != self.dim() {
            return Err(Error::ShapeMismatch { expected: self.dim(), actual: mean.len() });
        }
        Ok(GpPrior {
            mean,
            cov: Arc::clone(&self.cov),
            horizon: self.horizon,
            state_dim: self.state_dim,
            fingerprint: self.fingerprint,
        })
    }

    /// Push the prior through the per-dimension map `x ↦ (x - offset) / scale`.
    pub fn normalized(&self, offset: &[f64], scale: &[f64]) -> Result<Self> {
        let d = self.state_dim;
        if offset.len() != d || scale.len() != d {
            return Err(Error::ShapeMismatch { expected: d, actual: offset.len().min(scale.len()) });
        }
        let n = self.dim();
        let inv: Vec<f64> = (0..n).map(|k| 1.0 / scale[k % d]).collect();
        let mean = DVector::from_fn(n, |k, _| (self.mean[k] - offset[k % d]) * inv[k]);
        let cov = DMatrix::from_fn(n, n, |r, c| self.cov[(r, c)] * inv[r] * inv[c]);
        GpPrior::new(mean, cov, self.horizon, d)
    }
}

pub fn build_gp_prior(model: &LtvModel, horizon: usize) -> Result<GpPrior> {
    build_gp_prior_with_budget(model, horizon, DEFAULT_DENSE_BUDGET)
}

/// Assemble the dense kernel by the forward recursion
/// `P_{t+1} = Φ P_t Φᵀ + Q` with cross-covariance `cov(t, t') = P_t (Φ^{t'-t})ᵀ`.
pub fn build_gp_prior_with_budget(model: &LtvModel, horizon: usize, budget: usize) -> Result<GpPrior> {
    model.validate()?;
    if horizon < 2 {
        return Err(Error::InvalidArgument(format!("horizon must be >= 2, got {horizon}")));
    }
    let d = model.state_dim();
    let n = horizon * d;
    if n > budget {
        return Err(Error::DenseBudgetExceeded { rows: n, budget });
    }
    let phi = transition_matrix(model);
    let q = process_noise(model);

    let mut cov = DMatrix::zeros(n, n);
    let mut p_t = model.k0.clone();
    for t in 0..horizon {
        // Walk forward from the marginal at t: block (t', t) = Φ^{t'-t} P_t.
        let mut cross = p_t.clone();
        for t2 in t..horizon {
            cov.view_mut((t2 * d, t * d), (d, d)).copy_from(&cross);
            if t2 != t {
                cov.view_mut((t * d, t2 * d), (d, d)).copy_from(&cross.transpose());
            }
            cross = &phi * cross;
        }
        p_t = &phi * &p_t * phi.transpose() + &q;
        linalg::symmetrize(&mut p_t);
    }
    let mean = propagate_mean(model, horizon, &model.mu0);
    GpPrior::new(mean, cov, horizon, d)
}

fn fingerprint(m: &DMatrix<f64>) -> u64 {
    // FNV-1a over the raw bits; stable across runs and platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in (m.nrows() as u64)
        .to_le_bytes()
        .into_iter()
        .chain(m.iter().flat_map(|v| v.to_bits().to_le_bytes()))
    {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(dt: f64, d_pos: usize, q_c: f64) -> LtvModel {
        LtvModel::new(dt, d_pos, q_c, 1.0).unwrap()
    }

    #[test]
    fn transition_examples() {
        let phi = transition_matrix(&model(0.1, 1, 1.0));
        assert_eq!(phi, DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]));

        let phi = transition_matrix(&model(0.0, 2, 1.0));
        assert_eq!(phi, DMatrix::identity(4, 4));

        let phi = transition_matrix(&model(1.0, 2, 1.0));
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 1.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ]);
        assert_eq!(phi, expected);
    }

    #[test]
    fn process_noise_examples() {
        let q = process_noise(&model(1.0, 1, 1.0));
        let expected = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 0.5, 0.5, 1.0]);
        assert!(linalg::max_abs(&(q - expected)) < 1e-15);

        let q = process_noise(&model(0.7, 2, 0.0));
        assert_eq!(q, DMatrix::zeros(4, 4));

        let q = process_noise(&model(0.5, 1, 2.0));
        let expected = DMatrix::from_row_slice(2, 2, &[1.0 / 12.0, 0.25, 0.25, 1.0]);
        assert!(linalg::max_abs(&(&q - expected)) < 1e-15);
        assert!(linalg::min_eigenvalue(&q) >= 0.0);
    }

    #[test]
    fn zero_initial_uncertainty() {
        let mut m = model(1.0, 1, 1.0);
        m.k0 = DMatrix::zeros(2, 2);
        let prior = build_gp_prior(&m, 2).unwrap();
        assert!(prior.mean.iter().all(|&v| v == 0.0));
        let mut expected = DMatrix::zeros(4, 4);
        expected.view_mut((2, 2), (2, 2)).copy_from(&process_noise(&m));
        assert!(linalg::max_abs(&(prior.cov.as_ref() - expected)) < 1e-15);
    }

    #[test]
    fn one_recursion_step() {
        let m = model(0.3, 2, 0.7);
        let prior = build_gp_prior(&m, 3).unwrap();
        let phi = transition_matrix(&m);
        let expected = &phi * phi.transpose() + process_noise(&m);
        let block = prior.cov.view((4, 4), (4, 4)).into_owned();
        assert!(linalg::max_abs(&(block - expected)) < 1e-14);
    }

    #[test]
    fn rejects_short_horizon_and_budget() {
        let m = model(0.1, 2, 1.0);
        assert!(matches!(build_gp_prior(&m, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            build_gp_prior_with_budget(&m, 10, 39),
            Err(Error::DenseBudgetExceeded { rows: 40, budget: 39 })
        ));
        assert!(build_gp_prior(&m, 1025).is_err());
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(LtvModel::new(-0.1, 2, 1.0, 1.0).is_err());
        assert!(LtvModel::new(0.1, 2, -1.0, 1.0).is_err());
        let mut m = model(0.1, 1, 1.0);
        m.k0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(m.validate().is_err());
    }

    #[test]
    fn mean_follows_constant_velocity() {
        let mut m = model(0.5, 1, 1.0);
        m.mu0 = DVector::from_vec(vec![1.0, 2.0]);
        let prior = build_gp_prior(&m, 4).unwrap();
        let expected = [1.0, 2.0, 2.0, 2.0, 3.0, 2.0, 4.0, 2.0];
        for (a, b) in prior.mean.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_is_an_affine_pushforward() {
        let m = model(0.1, 1, 1.0);
        let prior = build_gp_prior(&m, 3).unwrap();
        let shifted = prior
            .with_mean(DVector::from_element(6, 2.0))
            .unwrap()
            .normalized(&[1.0, 0.0], &[2.0, 4.0])
            .unwrap();
        assert!((shifted.mean[0] - 0.5).abs() < 1e-15);
        assert!((shifted.mean[1] - 0.5).abs() < 1e-15);
        assert!((shifted.cov[(0, 1)] - prior.cov[(0, 1)] / 8.0).abs() < 1e-15);
        assert_ne!(shifted.fingerprint(), prior.fingerprint());
    }
}
