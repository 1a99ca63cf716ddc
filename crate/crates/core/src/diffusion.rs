//! Biased, non-isotropic Gaussian diffusion.
//!
//! The forward kernel is
//! `q(τⁱ | τⁱ⁻¹) = N(√αᵢ τⁱ⁻¹ + (1 − √αᵢ) μ, (1 − αᵢ) K)`, which keeps the
//! closed-form marginal and posterior of DDPM. Plain DDPM is `μ = 0, K = I`.
//! Only scalar multiples of the prior's `K` ever appear, so no per-step
//! covariance is materialized.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structured_prior::StructuredPrior;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear { beta_min: f64, beta_max: f64 },
    /// Squared-cosine `ᾱ` profile with offset `s`.
    Cosine { s: f64 },
}

impl Default for ScheduleKind {
    fn default() -> Self {
        ScheduleKind::Linear { beta_min: 1e-4, beta_max: 0.02 }
    }
}

const COSINE_MAX_BETA: f64 = 0.999;

/// Variance schedule `{βᵢ}` for `i = 1..=N`, with `ᾱ₀ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 diffusion steps, got {}", betas.len())));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::InvalidArgument(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        for a in &alphas {
            let prev = *alpha_bars.last().unwrap();
            alpha_bars.push(prev * a);
        }
        Ok(NoiseSchedule { betas, alphas, alpha_bars })
    }

    pub fn n_steps(&self) -> usize {
        self.betas.len()
    }

    /// `βᵢ`, `1 ≤ i ≤ N`.
    pub fn beta(&self, i: usize) -> f64 {
        self.betas[i - 1]
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alphas[i - 1]
    }

    /// `ᾱᵢ`, `0 ≤ i ≤ N`.
    pub fn alpha_bar(&self, i: usize) -> f64 {
        self.alpha_bars[i]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check_step(&self, i: usize) {
        assert!(i >= 1 && i <= self.n_steps(), "diffusion step {i} outside 1..={}", self.n_steps());
    }
}

pub fn make_schedule(kind: ScheduleKind, n_steps: usize) -> Result<NoiseSchedule> {
    if n_steps < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 diffusion steps, got {n_steps}")));
    }
    let betas = match kind {
        ScheduleKind::Linear { beta_min, beta_max } => {
            for b in [beta_min, beta_max] {
                if !(b > 0.0 && b < 1.0) {
                    return Err(Error::InvalidArgument(format!("beta bound {b} outside (0, 1)")));
                }
            }
            (0..n_steps)
                .map(|k| beta_min + (beta_max - beta_min) * k as f64 / (n_steps - 1) as f64)
                .collect()
        }
        ScheduleKind::Cosine { s } => {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("cosine offset {s} must be >= 0")));
            }
            let f = |t: f64| ((t / n_steps as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos().powi(2);
            (1..=n_steps)
                .map(|i| (1.0 - f(i as f64) / f((i - 1) as f64)).clamp(f64::MIN_POSITIVE, COSINE_MAX_BETA))
                .collect()
        }
    };
    NoiseSchedule::from_betas(betas)
}

/// Coefficients of the one-step posterior mean `c0 τ⁰ + ci τⁱ + η μ` and its
/// variance scale `β̃ᵢ` (the posterior covariance is `β̃ᵢ K`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCoeffs {
    pub c0: f64,
    pub ci: f64,
    pub eta: f64,
    pub beta_tilde: f64,
}

pub fn posterior_coeffs(i: usize, sched: &NoiseSchedule) -> PosteriorCoeffs {
    sched.check_step(i);
    let beta = sched.beta(i);
    let alpha = sched.alpha(i);
    let ab = sched.alpha_bar(i);
    let ab_prev = sched.alpha_bar(i - 1);
    let denom = 1.0 - ab;
    let c0 = ab_prev.sqrt() * beta / denom;
    let ci = alpha.sqrt() * (1.0 - ab_prev) / denom;
    let eta = (beta * (1.0 - ab_prev.sqrt()) - alpha.sqrt() * (1.0 - ab_prev) * (1.0 - alpha.sqrt())) / denom;
    // ᾱ₀ = 1 makes the last reverse step deterministic.
    let beta_tilde = if i == 1 {
        0.0
    } else {
        1.0 / (alpha / (1.0 - alpha) + 1.0 / (1.0 - ab_prev))
    };
    PosteriorCoeffs { c0, ci, eta, beta_tilde }
}

/// Mean of the one-step kernel `q(τⁱ | τⁱ⁻¹)`; its covariance is `βᵢ K`.
pub fn forward_step_mean(tau_prev: &DVector<f64>, i: usize, prior: &StructuredPrior, sched: &NoiseSchedule) -> DVector<f64> {
    sched.check_step(i);
    let sa = sched.alpha(i).sqrt();
    tau_prev * sa + &prior.mean * (1.0 - sa)
}

/// Mean and covariance scale of `q(τⁱ | τ⁰)`; the covariance is `scale · K`.
pub fn forward_marginal(
    tau0: &DVector<f64>,
    i: usize,
    prior: &StructuredPrior,
    sched: &NoiseSchedule,
) -> (DVector<f64>, f64) {
    sched.check_step(i);
    let sab = sched.alpha_bar(i).sqrt();
    (tau0 * sab + &prior.mean * (1.0 - sab), 1.0 - sched.alpha_bar(i))
}

/// `τⁱ` given a standard-normal draw `z`.
pub fn forward_sample_with_noise(
    tau0: &DVector<f64>,
    i: usize,
    prior: &StructuredPrior,
    sched: &NoiseSchedule,
    z: &DVector<f64>,
) -> DVector<f64> {
    let (mean, scale) = forward_marginal(tau0, i, prior, sched);
    if scale == 0.0 {
        return mean;
    }
    mean + prior.color(z) * scale.sqrt()
}

pub fn forward_sample<R: Rng + ?Sized>(
    tau0: &DVector<f64>,
    i: usize,
    prior: &StructuredPrior,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> DVector<f64> {
    let z = prior.standard_normal(rng);
    forward_sample_with_noise(tau0, i, prior, sched, &z)
}

/// Posterior mean `μ̃ᵢ(τⁱ, τ⁰, μ)`.
pub fn true_posterior_mean(
    tau_i: &DVector<f64>,
    tau0: &DVector<f64>,
    i: usize,
    prior: &StructuredPrior,
    sched: &NoiseSchedule,
) -> DVector<f64> {
    let c = posterior_coeffs(i, sched);
    tau0 * c.c0 + tau_i * c.ci + &prior.mean * c.eta
}

/// Draw `τⁱ⁻¹ ~ N(pred_mean, β̃ᵢ K)`; step 1 returns `pred_mean` unchanged.
pub fn reverse_step<R: Rng + ?Sized>(
    i: usize,
    pred_mean: &DVector<f64>,
    prior: &StructuredPrior,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> DVector<f64> {
    let bt = posterior_coeffs(i, sched).beta_tilde;
    if bt == 0.0 {
        return pred_mean.clone();
    }
    let z = prior.standard_normal(rng);
    pred_mean + prior.color(&z) * bt.sqrt()
}
