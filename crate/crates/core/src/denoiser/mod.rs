//! Trajectory denoiser `μ_θ(τⁱ, i, cond)` and its Mahalanobis training loss.

mod checkpoint;
mod mlp;
mod train;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{self, posterior_coeffs, NoiseSchedule};
use crate::error::{Error, Result};
use crate::structured_prior::StructuredPrior;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use mlp::{Linear, Mlp};
pub use train::{train, LossRecord, SgdMomentum, TrainConfig, TrainOutcome, TrainingSet};

/// What the network head predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// Predict `τ⁰`; the posterior mean is rebuilt from the posterior coefficients.
    #[default]
    PredictClean,
    /// Predict `μ̃ᵢ` directly.
    PredictPosteriorMean,
    /// Predict `τ⁰` in the prior's whitened coordinates, `τ̂⁰ = μ + L·out`.
    /// The loss becomes `c0² ‖L⁻¹(τ⁰ − μ) − out‖²`, and output errors are
    /// shaped by `K`. Identical to `PredictClean` when `μ = 0, K = I`.
    PredictWhitenedClean,
}

/// Per-step weight of the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    /// `‖μ̃ᵢ − μ_θ‖²` in the metric `K⁻¹`, the same at every step.
    #[default]
    PosteriorMean,
    /// The same term divided by `c0²`, i.e. the error of the implied `τ⁰`
    /// in the metric `K⁻¹`. Puts more weight on high-noise steps.
    Clean,
}

impl LossWeighting {
    fn factor(self, c0: f64) -> f64 {
        match self {
            LossWeighting::PosteriorMean => 1.0,
            LossWeighting::Clean => 1.0 / (c0 * c0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub data_dim: usize,
    pub cond_dim: usize,
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub embed_dim: usize,
    pub parameterization: Parameterization,
    pub zero_init_output: bool,
}

impl DenoiserConfig {
    pub fn new(data_dim: usize, cond_dim: usize) -> Self {
        DenoiserConfig {
            data_dim,
            cond_dim,
            hidden_dim: 256,
            hidden_layers: 4,
            embed_dim: 32,
            parameterization: Parameterization::PredictClean,
            zero_init_output: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.data_dim + self.embed_dim + self.cond_dim
    }
}

/// Sinusoidal embedding of the diffusion step.
pub fn step_embedding(i: usize, width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut out = vec![0.0; width];
    for k in 0..half {
        let freq = (-(10_000f64).ln() * k as f64 / half as f64).exp();
        out[k] = (i as f64 * freq).sin();
        out[half + k] = (i as f64 * freq).cos();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub net: Mlp,
}

/// One training example: clean trajectory, its noise model and conditioning.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub tau0: &'a DVector<f64>,
    pub prior: &'a StructuredPrior,
    pub cond: &'a DVector<f64>,
}

impl Denoiser {
    pub fn new<R: Rng + ?Sized>(config: DenoiserConfig, rng: &mut R) -> Self {
        let net = Mlp::new(
            config.input_dim(),
            config.hidden_dim,
            config.hidden_layers,
            config.data_dim,
            config.zero_init_output,
            rng,
        );
        Denoiser { config, net }
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    fn check_shapes(&self, tau_i: &DVector<f64>, cond: &DVector<f64>) -> Result<()> {
        if tau_i.len() != self.config.data_dim {
            return Err(Error::ShapeMismatch { expected: self.config.data_dim, actual: tau_i.len() });
        }
        if cond.len() != self.config.cond_dim {
            return Err(Error::ShapeMismatch { expected: self.config.cond_dim, actual: cond.len() });
        }
        Ok(())
    }

    fn input_matrix(&self, columns: &[(&DVector<f64>, usize, &DVector<f64>)]) -> DMatrix<f64> {
        let c = &self.config;
        let mut x = DMatrix::zeros(c.input_dim(), columns.len());
        for (col, (tau, i, cond)) in columns.iter().enumerate() {
            let mut dst = x.column_mut(col);
            dst.rows_mut(0, c.data_dim).copy_from(*tau);
            let emb = step_embedding(*i, c.embed_dim);
            dst.rows_mut(c.data_dim, c.embed_dim).copy_from_slice(&emb);
            dst.rows_mut(c.data_dim + c.embed_dim, c.cond_dim).copy_from(*cond);
        }
        x
    }

    /// Raw network output for one input.
    pub fn output(&self, tau_i: &DVector<f64>, i: usize, cond: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_shapes(tau_i, cond)?;
        let out = self.net.forward(&self.input_matrix(&[(tau_i, i, cond)]));
        Ok(out.column(0).into_owned())
    }

    /// `μ_θ(τⁱ, i, cond)`, the mean of the learned reverse kernel.
    pub fn predict_mean(
        &self,
        tau_i: &DVector<f64>,
        i: usize,
        cond: &DVector<f64>,
        prior: &StructuredPrior,
        sched: &NoiseSchedule,
    ) -> Result<DVector<f64>> {
        if prior.dim() != self.config.data_dim {
            return Err(Error::ShapeMismatch { expected: self.config.data_dim, actual: prior.dim() });
        }
        let out = self.output(tau_i, i, cond)?;
        Ok(match self.config.parameterization {
            Parameterization::PredictClean => diffusion::true_posterior_mean(tau_i, &out, i, prior, sched),
            Parameterization::PredictPosteriorMean => out,
            Parameterization::PredictWhitenedClean => {
                let tau0 = &prior.mean + prior.color(&out);
                diffusion::true_posterior_mean(tau_i, &tau0, i, prior, sched)
            }
        })
    }

    /// Loss and gradient at fixed diffusion steps and standard-normal draws.
    ///
    /// The loss is the batch mean of `‖μ̃ᵢ − μ_θ‖²` in the metric `K⁻¹` of
    /// each example's own prior.
    pub fn loss_and_grad_at(
        &self,
        batch: &[Example<'_>],
        steps: &[usize],
        noise: &[DVector<f64>],
        sched: &NoiseSchedule,
        weighting: LossWeighting,
    ) -> Result<(f64, Mlp)> {
        assert_eq!(batch.len(), steps.len());
        assert_eq!(batch.len(), noise.len());
        let mut tau_is = Vec::with_capacity(batch.len());
        for (ex, (&i, z)) in batch.iter().zip(steps.iter().zip(noise)) {
            if ex.prior.dim() != self.config.data_dim || ex.tau0.len() != self.config.data_dim {
                return Err(Error::ShapeMismatch { expected: self.config.data_dim, actual: ex.tau0.len() });
            }
            tau_is.push(diffusion::forward_sample_with_noise(ex.tau0, i, ex.prior, sched, z));
        }
        for (ex, tau_i) in batch.iter().zip(&tau_is) {
            self.check_shapes(tau_i, ex.cond)?;
        }
        let columns: Vec<_> = batch
            .iter()
            .zip(&tau_is)
            .zip(steps)
            .map(|((ex, tau_i), &i)| (tau_i, i, ex.cond))
            .collect();
        let input = self.input_matrix(&columns);
        let (out, cache) = self.net.forward_cached(&input);

        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut d_out = DMatrix::zeros(out.nrows(), out.ncols());
        for (b, ex) in batch.iter().enumerate() {
            let i = steps[b];
            let c = posterior_coeffs(i, sched);
            let target = diffusion::true_posterior_mean(&tau_is[b], ex.tau0, i, ex.prior, sched);
            let o = out.column(b).into_owned();
            let pred = match self.config.parameterization {
                Parameterization::PredictClean => diffusion::true_posterior_mean(&tau_is[b], &o, i, ex.prior, sched),
                Parameterization::PredictPosteriorMean => o,
                Parameterization::PredictWhitenedClean => {
                    let tau0 = &ex.prior.mean + ex.prior.color(&o);
                    diffusion::true_posterior_mean(&tau_is[b], &tau0, i, ex.prior, sched)
                }
            };
            let resid = target - pred;
            let whitened = ex.prior.whiten(&resid);
            let scale = scale * weighting.factor(c.c0);
            loss += scale * whitened.norm_squared();
            // d loss / d pred = −2 K⁻¹ r, pulled back through pred(out).
            let grad = match self.config.parameterization {
                Parameterization::PredictClean => ex.prior.inv_apply(&resid) * (-2.0 * scale * c.c0),
                Parameterization::PredictPosteriorMean => ex.prior.inv_apply(&resid) * (-2.0 * scale),
                Parameterization::PredictWhitenedClean => whitened * (-2.0 * scale * c.c0),
            };
            d_out.column_mut(b).copy_from(&grad);
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(loss));
        }
        Ok((loss, self.net.backward(&cache, &d_out)))
    }

    /// Draw `i ~ U{1..N}` and the forward noise per example, then evaluate
    /// the loss and its gradient.
    pub fn loss_and_grad<R: Rng + ?Sized>(
        &self,
        batch: &[Example<'_>],
        sched: &NoiseSchedule,
        weighting: LossWeighting,
        rng: &mut R,
    ) -> Result<(f64, Mlp)> {
        let mut steps = Vec::with_capacity(batch.len());
        let mut noise = Vec::with_capacity(batch.len());
        for ex in batch {
            steps.push(rng.random_range(1..=sched.n_steps()));
            noise.push(ex.prior.standard_normal(rng));
        }
        self.loss_and_grad_at(batch, &steps, &noise, sched, weighting)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{make_schedule, ScheduleKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(parameterization: Parameterization, zero_init_output: bool) -> Denoiser {
        let mut cfg = DenoiserConfig::new(4, 2);
        cfg.hidden_dim = 6;
        cfg.hidden_layers = 2;
        cfg.embed_dim = 4;
        cfg.parameterization = parameterization;
        cfg.zero_init_output = zero_init_output;
        Denoiser::new(cfg, &mut ChaCha8Rng::seed_from_u64(5))
    }

    #[test]
    fn zero_head_predicts_posterior_mean_of_zero() {
        let d = small(Parameterization::PredictClean, true);
        let sched = make_schedule(ScheduleKind::default(), 10).unwrap();
        let prior = StructuredPrior::isotropic(2, 2).with_mean(DVector::from_element(4, 0.3)).unwrap();
        let tau = DVector::from_vec(vec![0.1, -0.4, 0.9, 0.0]);
        let cond = DVector::zeros(2);
        for i in [1, 4, 10] {
            let got = d.predict_mean(&tau, i, &cond, &prior, &sched).unwrap();
            let want = diffusion::true_posterior_mean(&tau, &DVector::zeros(4), i, &prior, &sched);
            assert!((got - want).amax() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let d = small(Parameterization::PredictClean, false);
        let sched = make_schedule(ScheduleKind::default(), 10).unwrap();
        let prior = StructuredPrior::isotropic(2, 2);
        let bad = DVector::zeros(3);
        assert!(matches!(
            d.predict_mean(&bad, 2, &DVector::zeros(2), &prior, &sched),
            Err(Error::ShapeMismatch { expected: 4, actual: 3 })
        ));
        assert!(d.predict_mean(&DVector::zeros(4), 2, &DVector::zeros(1), &prior, &sched).is_err());
    }

    #[test]
    fn conditioning_channel_changes_output() {
        let d = small(Parameterization::PredictPosteriorMean, false);
        let tau = DVector::from_element(4, 0.2);
        let a = d.output(&tau, 3, &DVector::zeros(2)).unwrap();
        let b = d.output(&tau, 3, &DVector::from_vec(vec![1.0, -1.0])).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn whitened_head_loss_is_scaled_whitened_error() {
        let d = small(Parameterization::PredictWhitenedClean, false);
        let sched = make_schedule(ScheduleKind::Cosine { s: 0.008 }, 12).unwrap();
        let cov = DMatrix::from_row_slice(4, 4, &[2.0, 0.3, 0.1, 0.0, 0.3, 1.0, 0.2, 0.1, 0.1, 0.2, 1.5, 0.4, 0.0, 0.1, 0.4, 0.8]);
        let prior = StructuredPrior::from_mean_cov(DVector::from_vec(vec![0.2, -0.1, 0.4, 0.0]), cov, 2, 2).unwrap();
        let tau0 = DVector::from_vec(vec![0.5, 0.1, -0.3, 0.7]);
        let cond = DVector::from_vec(vec![0.2, -0.6]);
        let z = DVector::from_vec(vec![0.3, -1.2, 0.8, 0.1]);
        let ex = Example { tau0: &tau0, prior: &prior, cond: &cond };
        for i in [1, 5, 12] {
            let (loss, _) = d.loss_and_grad_at(&[ex], &[i], std::slice::from_ref(&z), &sched, LossWeighting::PosteriorMean).unwrap();
            let (clean, _) = d.loss_and_grad_at(&[ex], &[i], std::slice::from_ref(&z), &sched, LossWeighting::Clean).unwrap();
            let tau_i = diffusion::forward_sample_with_noise(&tau0, i, &prior, &sched, &z);
            let out = d.output(&tau_i, i, &cond).unwrap();
            let w0 = prior.whiten(&(&tau0 - &prior.mean));
            let c0 = posterior_coeffs(i, &sched).c0;
            let want = c0 * c0 * (w0 - out).norm_squared();
            assert!((loss - want).abs() < 1e-10 * want.max(1.0), "i={i}: {loss} vs {want}");
            assert!((clean * c0 * c0 - loss).abs() < 1e-10 * loss.max(1.0));
        }
    }

    #[test]
    fn whitened_head_matches_clean_head_when_isotropic() {
        let clean = small(Parameterization::PredictClean, false);
        let mut white = clean.clone();
        white.config.parameterization = Parameterization::PredictWhitenedClean;
        let sched = make_schedule(ScheduleKind::default(), 10).unwrap();
        let prior = StructuredPrior::isotropic(2, 2);
        let tau = DVector::from_vec(vec![0.1, -0.4, 0.9, 0.0]);
        let cond = DVector::from_vec(vec![1.0, 0.5]);
        let a = clean.predict_mean(&tau, 6, &cond, &prior, &sched).unwrap();
        let b = white.predict_mean(&tau, 6, &cond, &prior, &sched).unwrap();
        assert!((a - b).amax() < 1e-15);
    }

    #[test]
    fn step_embedding_has_sin_cos_halves() {
        let e = step_embedding(3, 8);
        assert_eq!(e.len(), 8);
        assert!((e[0] - 3f64.sin()).abs() < 1e-15);
        assert!((e[4] - 3f64.cos()).abs() < 1e-15);
    }
}
