use super::sample::{Condition, Denoiser, Sample};
use super::schedule::VarianceSchedule;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Bayes-optimal noise predictor for Gaussian data `x₀ ~ N(μ, Σ)`.
///
/// `Σ` is `σ²I`, or with a nonzero correlation block-diagonal over channel pairs
/// `(c, c + C/2)`, each pair having covariance `σ²[[1, ρ], [ρ, 1]]`.
/// The condition is ignored.
#[derive(Clone, Debug)]
pub struct GaussianDenoiser<T> {
    mean: Sample<T>,
    variance: T,
    correlation: T,
    schedule: VarianceSchedule<T>,
}

/// Oracle for `x₀ ~ N(μ, σ²I)`.
pub fn analytic_gaussian_denoiser<T: Real>(
    mean: Sample<T>,
    variance: T,
    schedule: &VarianceSchedule<T>,
) -> Result<GaussianDenoiser<T>> {
    paired_gaussian_denoiser(mean, variance, T::zero(), schedule)
}

/// Oracle whose first and second channel halves are correlated pairwise with `ρ`.
pub fn paired_gaussian_denoiser<T: Real>(
    mean: Sample<T>,
    variance: T,
    correlation: T,
    schedule: &VarianceSchedule<T>,
) -> Result<GaussianDenoiser<T>> {
    if !(variance > T::zero() && variance.is_finite()) {
        return Err(Error::param(format!("data variance must be positive, got {variance}")));
    }
    if correlation.abs() >= T::one() {
        return Err(Error::param(format!("correlation {correlation} outside (-1, 1)")));
    }
    if correlation != T::zero() && mean.channels % 2 != 0 {
        return Err(Error::shape("even channel count", mean.channels));
    }
    Ok(GaussianDenoiser { mean, variance, correlation, schedule: schedule.clone() })
}

impl<T: Real> GaussianDenoiser<T> {
    pub fn mean(&self) -> &Sample<T> {
        &self.mean
    }

    /// `E[x₀ | x_t]`.
    pub fn posterior_mean(&self, x_t: &Sample<T>, t: usize) -> Result<Sample<T>> {
        self.schedule.check_timestep(t)?;
        self.mean.check_same_shape(x_t)?;
        let ab = self.schedule.alpha_bar(t);
        let (a, s2) = (ab.sqrt(), T::one() - ab);
        let gain = |lambda: T| a * lambda / (a * a * lambda + s2);
        let mu = &self.mean.data;
        let d: Vec<T> = x_t.data.iter().zip(mu).map(|(&x, &m)| x - a * m).collect();

        let mut out = mu.clone();
        if self.correlation == T::zero() {
            let g = gain(self.variance);
            for (o, &di) in out.iter_mut().zip(&d) {
                *o += g * di;
            }
        } else {
            let gu = gain(self.variance * (T::one() + self.correlation));
            let gw = gain(self.variance * (T::one() - self.correlation));
            let (same, cross) = ((gu + gw) * T::half(), (gu - gw) * T::half());
            let half = self.mean.len() / 2;
            for i in 0..half {
                let (df, db) = (d[i], d[i + half]);
                out[i] += same * df + cross * db;
                out[i + half] += cross * df + same * db;
            }
        }
        Ok(Sample { data: out, ..x_t.clone() })
    }
}

impl<T: Real> Denoiser<T> for GaussianDenoiser<T> {
    fn predict(&self, x_t: &Sample<T>, t: usize, _cond: Condition<'_, T>) -> Result<Sample<T>> {
        let x0 = self.posterior_mean(x_t, t)?;
        let ab = self.schedule.alpha_bar(t);
        let (a, s) = (ab.sqrt(), (T::one() - ab).sqrt());
        let data = x_t.data.iter().zip(&x0.data).map(|(&x, &m)| (x - a * m) / s).collect();
        Ok(Sample { data, ..x0 })
    }
}
