use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::TrainExample;
use super::model::DenoiserParams;
use crate::diffusion::{forward_sample, Condition, Sample, VarianceSchedule};
use crate::error::{Error, Result};
use crate::optim::FlatAdam;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Probability of replacing the condition with the blank token.
    pub dropout_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, batch_size: 2, dropout_prob: 0.1 }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::param(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::param(format!("dropout probability must lie in [0, 1], got {}", self.dropout_prob)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    /// Mean squared noise-prediction error over the batch.
    pub loss: T,
    pub gradient: Vec<T>,
    /// Examples whose condition was dropped to blank.
    pub blank_count: usize,
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn noise_prediction_loss<T: Real>(pred: &Sample<T>, target: &Sample<T>) -> Result<(T, Sample<T>)> {
    pred.check_same_shape(target)?;
    let n = T::from_usize_lossy(pred.len());
    let mut grad = Sample::zeros(pred.channels, pred.height, pred.width);
    let mut loss = T::zero();
    for ((g, &p), &e) in grad.data.iter_mut().zip(&pred.data).zip(&target.data) {
        let d = p - e;
        loss += d * d;
        *g = T::two() * d / n;
    }
    Ok((loss / n, grad))
}

/// One batch of the noise-prediction objective with condition dropout.
pub fn train_step<T: Real, R: Rng + ?Sized>(
    params: &DenoiserParams<T>,
    batch: &[TrainExample<T>],
    timesteps: &[usize],
    noise: &[Sample<T>],
    dropout_prob: f64,
    schedule: &VarianceSchedule<T>,
    rng: &mut R,
) -> Result<StepOutput<T>> {
    if batch.is_empty() {
        return Err(Error::param("empty batch"));
    }
    if timesteps.len() != batch.len() || noise.len() != batch.len() {
        return Err(Error::shape(
            format!("{} timesteps and noise samples", batch.len()),
            format!("{} and {}", timesteps.len(), noise.len()),
        ));
    }
    let mut loss = T::zero();
    let mut gradient = vec![T::zero(); params.len()];
    let mut blank_count = 0;
    let scale = T::one() / T::from_usize_lossy(batch.len());
    for ((ex, &t), eps) in batch.iter().zip(timesteps).zip(noise) {
        let x0 = ex.target_sample()?;
        let x_t = forward_sample(&x0, t, eps, schedule)?;
        let blank = rng.gen::<f64>() < dropout_prob;
        let cond = ex.cond_sample();
        let c = if blank {
            blank_count += 1;
            Condition::Blank
        } else {
            Condition::Map(&cond)
        };
        let (input, blank) = DenoiserParams::network_input(&x_t, c)?;
        let (pred, cache) = params.forward_cached(&input, t, blank)?;
        let (l, g_out) = noise_prediction_loss(&pred, eps)?;
        loss += l * scale;
        for (acc, g) in gradient.iter_mut().zip(params.backward(&cache, &g_out)?) {
            *acc += g * scale;
        }
    }
    Ok(StepOutput { loss, gradient, blank_count })
}

/// Trains from `init`; returns the final parameters and the mean loss of every epoch.
pub fn train<T: Real, R: Rng + ?Sized>(
    init: DenoiserParams<T>,
    dataset: &[TrainExample<T>],
    epochs: usize,
    config: &TrainConfig,
    schedule: &VarianceSchedule<T>,
    rng: &mut R,
) -> Result<(DenoiserParams<T>, Vec<T>)> {
    config.check()?;
    if dataset.is_empty() {
        return Err(Error::param("empty training set"));
    }
    if init.arch.steps != schedule.steps() {
        return Err(Error::param(format!(
            "network covers {} timesteps but the schedule has {}",
            init.arch.steps,
            schedule.steps()
        )));
    }
    let shape = dataset[0].target_sample()?.shape();
    for ex in dataset {
        if ex.target_sample()?.shape() != shape {
            return Err(Error::shape(format!("{shape:?} for every example"), format!("{:?}", ex.target_sample()?.shape())));
        }
    }
    let mut params = init;
    let mut opt = FlatAdam::new(params.len());
    let lr = T::lit(config.learning_rate);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut total = T::zero();
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainExample<T>> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let timesteps: Vec<usize> = chunk.iter().map(|_| rng.gen_range(1..=schedule.steps())).collect();
            let noise: Vec<Sample<T>> = chunk.iter().map(|_| Sample::randn(shape[0], shape[1], shape[2], rng)).collect();
            let out = train_step(&params, &batch, &timesteps, &noise, config.dropout_prob, schedule, rng)?;
            if !out.loss.is_finite() || out.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            opt.step(&mut params.data, &out.gradient, lr);
            total += out.loss;
            batches += 1;
        }
        let mean = total / T::from_usize_lossy(batches);
        log::debug!("epoch {epoch}: loss {mean}");
        curve.push(mean);
    }
    Ok((params, curve))
}
