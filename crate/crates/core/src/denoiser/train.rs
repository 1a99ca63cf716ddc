use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Denoiser, Example, LossWeighting, Mlp};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::structured_prior::StructuredPrior;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub momentum: f64,
    pub clip_norm: f64,
    pub log_every: usize,
    pub weighting: LossWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            steps: 10_000,
            momentum: 0.9,
            clip_norm: 10.0,
            log_every: 500,
            weighting: LossWeighting::PosteriorMean,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.batch_size > 0
            && self.steps > 0
            && (0.0..1.0).contains(&self.momentum)
            && self.clip_norm > 0.0
            && self.log_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Clean trajectories with their per-example noise models and conditioning.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub tau0: Vec<DVector<f64>>,
    pub priors: Vec<StructuredPrior>,
    pub conds: Vec<DVector<f64>>,
}

impl TrainingSet {
    pub fn push(&mut self, tau0: DVector<f64>, prior: StructuredPrior, cond: DVector<f64>) {
        self.tau0.push(tau0);
        self.priors.push(prior);
        self.conds.push(cond);
    }

    pub fn len(&self) -> usize {
        self.tau0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau0.is_empty()
    }

    pub fn example(&self, k: usize) -> Example<'_> {
        Example {
            tau0: &self.tau0[k],
            prior: &self.priors[k],
            cond: &self.conds[k],
        }
    }
}

/// SGD with heavy-ball momentum and global gradient-norm clipping.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    velocity: Mlp,
}

impl SgdMomentum {
    pub fn new(model: &Mlp, learning_rate: f64, momentum: f64, clip_norm: f64) -> Self {
        SgdMomentum {
            learning_rate,
            momentum,
            clip_norm,
            velocity: model.zeros_like(),
        }
    }

    /// Apply one update; returns the gradient norm before clipping.
    pub fn step(&mut self, model: &mut Mlp, grads: &Mlp) -> f64 {
        let norm = grads
            .buffers()
            .iter()
            .flat_map(|b| b.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        let factor = if norm > self.clip_norm { self.clip_norm / norm } else { 1.0 };
        for ((p, v), g) in model
            .buffers_mut()
            .into_iter()
            .zip(self.velocity.buffers_mut())
            .zip(grads.buffers())
        {
            for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = self.momentum * *v + factor * g;
                *p -= self.learning_rate * *v;
            }
        }
        norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    /// Mean loss over the steps since the previous record.
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Denoiser,
    pub step_losses: Vec<f64>,
    pub records: Vec<LossRecord>,
}

const DIVERGENCE_FACTOR: f64 = 1e3;

/// Stochastic gradient descent on the Mahalanobis denoising loss.
pub fn train<R: Rng + ?Sized>(
    mut model: Denoiser,
    set: &TrainingSet,
    config: &TrainConfig,
    sched: &NoiseSchedule,
    rng: &mut R,
    mut progress: impl FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut opt = SgdMomentum::new(&model.net, config.learning_rate, config.momentum, config.clip_norm);
    let mut step_losses = Vec::with_capacity(config.steps);
    let mut records = Vec::new();
    let mut reference = f64::NAN;
    let mut last_finite = f64::NAN;

    for step in 1..=config.steps {
        let batch: Vec<Example<'_>> = (0..config.batch_size)
            .map(|_| set.example(rng.random_range(0..set.len())))
            .collect();
        let (loss, grads) = match model.loss_and_grad(&batch, sched, config.weighting, rng) {
            Ok(v) => v,
            Err(Error::NonFiniteLoss(loss)) => return Err(Error::Diverged { step, loss, last_finite }),
            Err(e) => return Err(e),
        };
        if step == 1 {
            reference = loss;
        }
        if reference.is_finite() && loss > DIVERGENCE_FACTOR * reference {
            return Err(Error::Diverged { step, loss, last_finite });
        }
        opt.step(&mut model.net, &grads);
        step_losses.push(loss);
        last_finite = loss;

        if step % config.log_every == 0 || step == config.steps {
            let from = records.last().map_or(0, |r: &LossRecord| r.step);
            let window = &step_losses[from..step];
            let rec = LossRecord { step, mean_loss: window.iter().sum::<f64>() / window.len() as f64 };
            progress(&rec);
            records.push(rec);
        }
    }
    Ok(TrainOutcome { model, step_losses, records })
}
