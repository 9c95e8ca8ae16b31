use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::raster::NormalMap;
use crate::scalar::Real;

/// Channels of one normal map (rgb + alpha).
pub const MAP_CHANNELS: usize = 4;
/// Channels of a dual front ‖ back sample.
pub const DUAL_CHANNELS: usize = 2 * MAP_CHANNELS;

/// Planar `C×H×W` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Sample<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Sample { channels, height, width, data: vec![T::zero(); channels * height * width] }
    }

    pub fn from_data(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        let n = channels * height * width;
        if data.len() != n {
            return Err(Error::shape(format!("{n} values for {channels}x{height}x{width}"), data.len()));
        }
        Ok(Sample { channels, height, width, data })
    }

    /// Every element drawn from `N(0, 1)`.
    pub fn randn<R: Rng + ?Sized>(channels: usize, height: usize, width: usize, rng: &mut R) -> Self {
        let data = (0..channels * height * width)
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Sample { channels, height, width, data }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!("{:?}", self.shape()), format!("{:?}", other.shape())));
        }
        Ok(())
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let p = self.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    /// Channels `[lo, hi)` as a new sample.
    pub fn channels_range(&self, lo: usize, hi: usize) -> Self {
        let p = self.plane();
        Sample { channels: hi - lo, height: self.height, width: self.width, data: self.data[lo * p..hi * p].to_vec() }
    }

    /// Stacks samples of equal spatial size along the channel axis.
    pub fn concat(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::param("nothing to concatenate"))?;
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if (p.height, p.width) != (first.height, first.width) {
                return Err(Error::shape(
                    format!("{}x{}", first.height, first.width),
                    format!("{}x{}", p.height, p.width),
                ));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(Sample { channels, height: first.height, width: first.width, data })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Squared L2 distance.
    pub fn dist2(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b) * (a - b)).sum()
    }

    /// Planar copy of a map, values rescaled from `[0, 1]` to `[-1, 1]`.
    pub fn from_normal_map(map: &NormalMap<T>) -> Self {
        let (h, w) = (map.height, map.width);
        let mut s = Sample::zeros(MAP_CHANNELS, h, w);
        let p = h * w;
        for (i, px) in map.data.chunks_exact(MAP_CHANNELS).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                s.data[c * p + i] = T::two() * v - T::one();
            }
        }
        s
    }

    /// Inverse of [`Sample::from_normal_map`], clamped to `[0, 1]`. Needs exactly 4 channels.
    pub fn to_normal_map(&self) -> Result<NormalMap<T>> {
        if self.channels != MAP_CHANNELS {
            return Err(Error::shape(format!("{MAP_CHANNELS} channels"), self.channels));
        }
        let p = self.plane();
        let mut data = vec![T::zero(); p * MAP_CHANNELS];
        for i in 0..p {
            for c in 0..MAP_CHANNELS {
                let v = (self.data[c * p + i] + T::one()) * T::half();
                data[i * MAP_CHANNELS + c] = v.max(T::zero()).min(T::one());
            }
        }
        NormalMap::from_data(self.height, self.width, data)
    }

    /// Front ‖ back dual sample.
    pub fn from_dual_maps(front: &NormalMap<T>, back: &NormalMap<T>) -> Result<Self> {
        Sample::concat(&[&Sample::from_normal_map(front), &Sample::from_normal_map(back)])
    }

    /// Splits an 8-channel sample into its front and back maps.
    pub fn to_dual_maps(&self) -> Result<(NormalMap<T>, NormalMap<T>)> {
        if self.channels != DUAL_CHANNELS {
            return Err(Error::shape(format!("{DUAL_CHANNELS} channels"), self.channels));
        }
        Ok((
            self.channels_range(0, MAP_CHANNELS).to_normal_map()?,
            self.channels_range(MAP_CHANNELS, DUAL_CHANNELS).to_normal_map()?,
        ))
    }
}

/// Conditioning passed to a denoiser.
#[derive(Clone, Copy, Debug)]
pub enum Condition<'a, T> {
    /// The "no condition" input used for unconditional predictions.
    Blank,
    Map(&'a Sample<T>),
}

impl<T> Condition<'_, T> {
    pub fn is_blank(&self) -> bool {
        matches!(self, Condition::Blank)
    }
}

/// Noise predictor `ε̂(x_t, t, cond)`.
pub trait Denoiser<T: Real>: Sync {
    /// Returns a prediction with the shape of `x_t`.
    fn predict(&self, x_t: &Sample<T>, t: usize, cond: Condition<'_, T>) -> Result<Sample<T>>;
}

impl<T: Real, D: Denoiser<T> + ?Sized> Denoiser<T> for &D {
    fn predict(&self, x_t: &Sample<T>, t: usize, cond: Condition<'_, T>) -> Result<Sample<T>> {
        (**self).predict(x_t, t, cond)
    }
}
