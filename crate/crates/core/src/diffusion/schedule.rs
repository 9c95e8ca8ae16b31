use crate::error::{Error, Result};
use crate::scalar::Real;

/// β, α and ᾱ tables for timesteps `1..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceSchedule<T> {
    betas: Vec<T>,
    alphas: Vec<T>,
    alpha_bars: Vec<T>,
}

/// β range for `steps` timesteps: the 1000-step `(1e-4, 0.02)` range rescaled by `1000 / steps`.
pub fn default_beta_range(steps: usize) -> (f64, f64) {
    let k = 1000.0 / steps.max(1) as f64;
    (1e-4 * k, 0.02 * k)
}

/// Linearly spaced β from `beta_start` to `beta_end` over `steps` timesteps.
pub fn linear_schedule<T: Real>(steps: usize, beta_start: f64, beta_end: f64) -> Result<VarianceSchedule<T>> {
    if steps < 2 {
        return Err(Error::param(format!("linear schedule needs at least 2 steps, got {steps}")));
    }
    if !(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0) {
        return Err(Error::param(format!(
            "need 0 < beta_start < beta_end < 1, got ({beta_start}, {beta_end})"
        )));
    }
    let span = (steps - 1) as f64;
    let betas = (0..steps)
        .map(|i| T::lit(beta_start + (beta_end - beta_start) * i as f64 / span))
        .collect();
    VarianceSchedule::from_betas(betas)
}

impl<T: Real> VarianceSchedule<T> {
    /// Linear schedule with [`default_beta_range`].
    pub fn default_linear(steps: usize) -> Result<Self> {
        let (a, b) = default_beta_range(steps);
        linear_schedule(steps, a, b)
    }

    pub fn from_betas(betas: Vec<T>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::param("empty variance schedule"));
        }
        for (i, &b) in betas.iter().enumerate() {
            if !(b > T::zero() && b < T::one()) {
                return Err(Error::param(format!("beta_{} = {b} outside (0, 1)", i + 1)));
            }
            if i > 0 && b <= betas[i - 1] {
                return Err(Error::param(format!("beta not strictly increasing at t = {}", i + 1)));
            }
        }
        let alphas: Vec<T> = betas.iter().map(|&b| T::one() - b).collect();
        let mut acc = T::one();
        let alpha_bars = alphas
            .iter()
            .map(|&a| {
                acc *= a;
                acc
            })
            .collect();
        Ok(VarianceSchedule { betas, alphas, alpha_bars })
    }

    /// Number of timesteps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::param(format!("timestep {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    /// Panics if `t` is outside `1..=T`.
    pub fn beta(&self, t: usize) -> T {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> T {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> T {
        self.alpha_bars[t - 1]
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[T] {
        &self.alpha_bars
    }

    pub fn cast<U: Real>(&self) -> VarianceSchedule<U> {
        let c = |v: &[T]| v.iter().map(|&x| crate::scalar::cast::<T, U>(x)).collect();
        VarianceSchedule { betas: c(&self.betas), alphas: c(&self.alphas), alpha_bars: c(&self.alpha_bars) }
    }
}
