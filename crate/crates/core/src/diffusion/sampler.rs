use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sample::{Condition, Denoiser, Sample, MAP_CHANNELS};
use super::schedule::VarianceSchedule;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Classifier-free guidance settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceParams {
    pub lambda: f64,
    /// Probability of replacing the condition by [`Condition::Blank`] during training.
    pub dropout_prob: f64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        GuidanceParams { lambda: 2.0, dropout_prob: 0.1 }
    }
}

impl GuidanceParams {
    pub fn new(lambda: f64) -> Self {
        GuidanceParams { lambda, ..Default::default() }
    }

    pub fn check(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::param("guidance strength must be finite"));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::param(format!("dropout_prob {} outside [0, 1]", self.dropout_prob)));
        }
        Ok(())
    }
}

/// Perturb-and-denoise settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleParams {
    /// Perturbation depth as a fraction of `T`.
    pub t0: f64,
    pub repeats: usize,
}

impl Default for ResampleParams {
    fn default() -> Self {
        ResampleParams { t0: 0.02, repeats: 2 }
    }
}

impl ResampleParams {
    /// The perturbation timestep `round(t0 · T)`; errors if it rounds to zero.
    pub fn timestep(&self, steps: usize) -> Result<usize> {
        if !(self.t0 > 0.0 && self.t0 < 1.0) {
            return Err(Error::param(format!("t0 = {} outside (0, 1)", self.t0)));
        }
        if self.repeats == 0 {
            return Err(Error::param("resample repeats must be at least 1"));
        }
        let t = (self.t0 * steps as f64).round() as usize;
        if t == 0 {
            return Err(Error::param(format!("t0 = {} rounds to timestep 0 at T = {steps}", self.t0)));
        }
        Ok(t.min(steps))
    }
}

fn zip_map<T: Real>(a: &Sample<T>, b: &Sample<T>, f: impl Fn(T, T) -> T) -> Result<Sample<T>> {
    a.check_same_shape(b)?;
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    Ok(Sample { channels: a.channels, height: a.height, width: a.width, data })
}

/// `x_t = √ᾱ_t·x₀ + √(1−ᾱ_t)·ε`.
pub fn forward_sample<T: Real>(
    x0: &Sample<T>,
    t: usize,
    eps: &Sample<T>,
    schedule: &VarianceSchedule<T>,
) -> Result<Sample<T>> {
    schedule.check_timestep(t)?;
    let ab = schedule.alpha_bar(t);
    let (a, s) = (ab.sqrt(), (T::one() - ab).sqrt());
    zip_map(x0, eps, |x, e| a * x + s * e)
}

/// One reverse step `x_{t−1} = (x_t − β_t/√(1−ᾱ_t)·ε̂)/√α_t + √β_t·noise`.
pub fn posterior_step<T: Real>(
    x_t: &Sample<T>,
    eps_hat: &Sample<T>,
    t: usize,
    schedule: &VarianceSchedule<T>,
    noise: &Sample<T>,
) -> Result<Sample<T>> {
    schedule.check_timestep(t)?;
    eps_hat.check_same_shape(noise)?;
    let (alpha, beta, ab) = (schedule.alpha(t), schedule.beta(t), schedule.alpha_bar(t));
    let k = beta / (T::one() - ab).sqrt();
    let root = alpha.sqrt();
    let sigma = beta.sqrt();
    let mean = zip_map(x_t, eps_hat, |x, e| (x - k * e) / root)?;
    zip_map(&mean, noise, |m, z| m + sigma * z)
}

/// `λ·ε_cond + (1−λ)·ε_uncond`.
pub fn cfg_combine<T: Real>(eps_cond: &Sample<T>, eps_uncond: &Sample<T>, lambda: T) -> Result<Sample<T>> {
    let mu = T::one() - lambda;
    zip_map(eps_cond, eps_uncond, |c, u| lambda * c + mu * u)
}

/// Guided noise prediction: one conditional call when `λ = 1`, one blank call without a
/// condition, otherwise both combined by [`cfg_combine`].
pub fn guided_prediction<T: Real, D: Denoiser<T> + ?Sized>(
    denoiser: &D,
    x_t: &Sample<T>,
    t: usize,
    cond: Option<&Sample<T>>,
    lambda: T,
) -> Result<Sample<T>> {
    let check = |e: Sample<T>| -> Result<Sample<T>> {
        x_t.check_same_shape(&e)?;
        Ok(e)
    };
    match cond {
        None => check(denoiser.predict(x_t, t, Condition::Blank)?),
        Some(c) if lambda == T::one() => check(denoiser.predict(x_t, t, Condition::Map(c))?),
        Some(c) => {
            let ec = check(denoiser.predict(x_t, t, Condition::Map(c))?)?;
            let eu = check(denoiser.predict(x_t, t, Condition::Blank)?)?;
            cfg_combine(&ec, &eu, lambda)
        }
    }
}

/// Reverse chain from `x` at timestep `t_start` down to `x₀`. The optional hook rewrites the
/// state after every step; it receives the new timestep.
fn reverse_chain<T: Real, D: Denoiser<T> + ?Sized, R: Rng + ?Sized>(
    mut x: Sample<T>,
    t_start: usize,
    denoiser: &D,
    cond: Option<&Sample<T>>,
    schedule: &VarianceSchedule<T>,
    lambda: T,
    rng: &mut R,
    mut hook: impl FnMut(&mut Sample<T>, usize, &mut R) -> Result<()>,
) -> Result<Sample<T>> {
    schedule.check_timestep(t_start)?;
    for t in (1..=t_start).rev() {
        let eps = guided_prediction(denoiser, &x, t, cond, lambda)?;
        let noise = if t > 1 {
            Sample::randn(x.channels, x.height, x.width, rng)
        } else {
            Sample::zeros(x.channels, x.height, x.width)
        };
        x = posterior_step(&x, &eps, t, schedule, &noise)?;
        hook(&mut x, t - 1, rng)?;
        if !x.is_finite() {
            return Err(Error::param(format!("non-finite sample at timestep {}", t - 1)));
        }
    }
    Ok(x)
}

/// Full ancestral sampling from `x_T ~ N(0, I)`.
pub fn sample<T: Real, D: Denoiser<T> + ?Sized, R: Rng + ?Sized>(
    denoiser: &D,
    cond: Option<&Sample<T>>,
    schedule: &VarianceSchedule<T>,
    guidance: &GuidanceParams,
    shape: [usize; 3],
    rng: &mut R,
) -> Result<Sample<T>> {
    guidance.check()?;
    let x = Sample::randn(shape[0], shape[1], shape[2], rng);
    reverse_chain(x, schedule.steps(), denoiser, cond, schedule, T::lit(guidance.lambda), rng, |_, _, _| Ok(()))
}

/// Perturbs a clean sample to `round(t0·T)` and denoises it back, `repeats` times.
pub fn resample<T: Real, D: Denoiser<T> + ?Sized, R: Rng + ?Sized>(
    x: &Sample<T>,
    denoiser: &D,
    cond: Option<&Sample<T>>,
    params: &ResampleParams,
    schedule: &VarianceSchedule<T>,
    guidance: &GuidanceParams,
    rng: &mut R,
) -> Result<Sample<T>> {
    guidance.check()?;
    let t = params.timestep(schedule.steps())?;
    let lambda = T::lit(guidance.lambda);
    let mut cur = x.clone();
    for _ in 0..params.repeats {
        let eps = Sample::randn(x.channels, x.height, x.width, rng);
        let xt = forward_sample(&cur, t, &eps, schedule)?;
        cur = reverse_chain(xt, t, denoiser, cond, schedule, lambda, rng, |_, _, _| Ok(()))?;
    }
    Ok(cur)
}

/// Generates back channels for a known front map. Front channels are re-noised from
/// `front_x0` at every timestep and replaced by it exactly at the end.
pub fn guided_dual_complete<T: Real, D: Denoiser<T> + ?Sized, R: Rng + ?Sized>(
    front_x0: &Sample<T>,
    denoiser: &D,
    cond: Option<&Sample<T>>,
    schedule: &VarianceSchedule<T>,
    guidance: &GuidanceParams,
    rng: &mut R,
) -> Result<(Sample<T>, Sample<T>)> {
    guidance.check()?;
    if front_x0.channels != MAP_CHANNELS {
        return Err(Error::shape(format!("{MAP_CHANNELS}-channel front map"), front_x0.channels));
    }
    let (h, w) = (front_x0.height, front_x0.width);
    let known = front_x0.len();
    let steps = schedule.steps();

    let eps = Sample::randn(MAP_CHANNELS, h, w, rng);
    let front_t = forward_sample(front_x0, steps, &eps, schedule)?;
    let back_t = Sample::randn(MAP_CHANNELS, h, w, rng);
    let x = Sample::concat(&[&front_t, &back_t])?;

    let x0 = reverse_chain(x, steps, denoiser, cond, schedule, T::lit(guidance.lambda), rng, |x, t, rng| {
        if t == 0 {
            x.data[..known].copy_from_slice(&front_x0.data);
        } else {
            let eps = Sample::randn(MAP_CHANNELS, h, w, rng);
            let f = forward_sample(front_x0, t, &eps, schedule)?;
            x.data[..known].copy_from_slice(&f.data);
        }
        Ok(())
    })?;
    Ok((x0.channels_range(0, MAP_CHANNELS), x0.channels_range(MAP_CHANNELS, 2 * MAP_CHANNELS)))
}
