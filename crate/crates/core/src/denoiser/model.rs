use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffusion::{Condition, Denoiser, Sample, DUAL_CHANNELS, MAP_CHANNELS};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Noisy dual sample followed by the conditioning map.
pub const INPUT_CHANNELS: usize = DUAL_CHANNELS + MAP_CHANNELS;
pub const OUTPUT_CHANNELS: usize = DUAL_CHANNELS;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    /// Widths of the hidden convolutions; one more convolution maps to the output.
    pub hidden: Vec<usize>,
    pub kernel: usize,
    pub embed_dim: usize,
    /// Diffusion steps covered by the timestep table.
    pub steps: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { hidden: vec![32, 32, 32], kernel: 3, embed_dim: 16, steps: 100 }
    }
}

impl Architecture {
    pub fn check(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.len() > 4 {
            return Err(Error::param(format!("need 1..=4 hidden layers, got {}", self.hidden.len())));
        }
        if self.hidden.iter().any(|&c| c == 0) {
            return Err(Error::param("hidden widths must be positive"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::param(format!("kernel size must be odd, got {}", self.kernel)));
        }
        if self.embed_dim < 2 || self.embed_dim % 2 != 0 {
            return Err(Error::param(format!("embedding size must be even and at least 2, got {}", self.embed_dim)));
        }
        if self.steps < 2 {
            return Err(Error::param(format!("need at least 2 diffusion steps, got {}", self.steps)));
        }
        Ok(())
    }

    /// Human-readable shape, used in error messages.
    pub fn describe(&self) -> String {
        let widths: Vec<String> = std::iter::once(INPUT_CHANNELS)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(OUTPUT_CHANNELS))
            .map(|c| c.to_string())
            .collect();
        format!("conv{k}x{k} {} emb{} T{}", widths.join("-"), self.embed_dim, self.steps, k = self.kernel)
    }

    pub fn num_params(&self) -> usize {
        Layout::new(self).total
    }
}

#[derive(Debug, Clone)]
struct ConvLayout {
    cin: usize,
    cout: usize,
    weight: Range<usize>,
    bias: Range<usize>,
    /// Timestep modulation `cout × embed`: per-channel scale `1 + S·e` and shift `P·e`.
    scale: Range<usize>,
    shift: Range<usize>,
}

#[derive(Debug, Clone)]
struct Layout {
    table: Range<usize>,
    convs: Vec<ConvLayout>,
    blank: Range<usize>,
    /// Per-timestep, per-channel gain of the `x_t → ε̂` skip path.
    skip: Range<usize>,
    total: usize,
}

impl Layout {
    fn new(arch: &Architecture) -> Self {
        let k2 = arch.kernel * arch.kernel;
        let e = arch.embed_dim;
        let mut at = 0;
        let mut take = |n: usize| {
            at += n;
            at - n..at
        };
        let table = take(arch.steps * e);
        let mut convs = Vec::new();
        let mut cin = INPUT_CHANNELS;
        for &cout in arch.hidden.iter().chain(std::iter::once(&OUTPUT_CHANNELS)) {
            let weight = take(cout * cin * k2);
            let bias = take(cout);
            let scale = take(cout * e);
            let shift = take(cout * e);
            convs.push(ConvLayout { cin, cout, weight, bias, scale, shift });
            cin = cout;
        }
        let blank = take(arch.hidden[0]);
        let skip = take(arch.steps * OUTPUT_CHANNELS);
        Layout { table, convs, blank, skip, total: at }
    }
}

/// Small convolutional noise predictor over `front ‖ back ‖ condition`.
///
/// `ε̂ = g_t ⊙ x_t + F(x_t, c, t)` with a learned skip gain per timestep and channel.
/// A blank condition is fed as zeros and adds a learned bias to the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams<T> {
    pub arch: Architecture,
    pub data: Vec<T>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    t: usize,
    blank: bool,
    height: usize,
    width: usize,
    /// Input of each convolution.
    inputs: Vec<Vec<T>>,
    /// Raw output of each convolution, before modulation.
    conv_out: Vec<Vec<T>>,
    /// Modulated pre-activation of each hidden layer.
    pre: Vec<Vec<T>>,
}

impl<T: Real> DenoiserParams<T> {
    /// Random hidden layers, sinusoidal timestep table, unit modulation, unit skip gains and
    /// a zero output layer, so the initial prediction is `ε̂ = x_t`.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        arch.check()?;
        let layout = Layout::new(arch);
        let mut data = vec![T::zero(); layout.total];
        let e = arch.embed_dim;
        for t in 0..arch.steps {
            for i in 0..e / 2 {
                let freq = (-(10000f64.ln()) * (2 * i) as f64 / e as f64).exp();
                let a = (t + 1) as f64 * freq;
                data[layout.table.start + t * e + 2 * i] = T::lit(a.sin());
                data[layout.table.start + t * e + 2 * i + 1] = T::lit(a.cos());
            }
        }
        let k2 = arch.kernel * arch.kernel;
        let pstd = (1.0 / e as f64).sqrt();
        for conv in &layout.convs[..layout.convs.len() - 1] {
            let std = (2.0 / (conv.cin * k2) as f64).sqrt();
            for v in &mut data[conv.weight.clone()] {
                *v = T::lit(std * rng.sample::<f64, _>(StandardNormal));
            }
            for v in &mut data[conv.shift.clone()] {
                *v = T::lit(pstd * rng.sample::<f64, _>(StandardNormal));
            }
        }
        data[layout.skip.clone()].iter_mut().for_each(|v| *v = T::one());
        Ok(Self { arch: arch.clone(), data })
    }

    pub fn from_data(arch: &Architecture, data: Vec<T>) -> Result<Self> {
        arch.check()?;
        let n = arch.num_params();
        if data.len() != n {
            return Err(Error::shape(format!("{n} parameters for {}", arch.describe()), data.len()));
        }
        Ok(Self { arch: arch.clone(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Real>(&self) -> DenoiserParams<U> {
        DenoiserParams { arch: self.arch.clone(), data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect() }
    }

    /// Stacks `x_t` and the condition into the network input.
    pub fn network_input(x_t: &Sample<T>, cond: Condition<T>) -> Result<(Sample<T>, bool)> {
        if x_t.channels != OUTPUT_CHANNELS {
            return Err(Error::shape(format!("{OUTPUT_CHANNELS} input channels"), x_t.channels));
        }
        match cond {
            Condition::Blank => {
                let zeros = Sample::zeros(MAP_CHANNELS, x_t.height, x_t.width);
                Ok((Sample::concat(&[x_t, &zeros])?, true))
            }
            Condition::Map(c) => {
                if c.shape() != [MAP_CHANNELS, x_t.height, x_t.width] {
                    return Err(Error::shape(
                        format!("condition {MAP_CHANNELS}x{}x{}", x_t.height, x_t.width),
                        format!("{}x{}x{}", c.channels, c.height, c.width),
                    ));
                }
                Ok((Sample::concat(&[x_t, c])?, false))
            }
        }
    }

    pub fn forward(&self, x_t: &Sample<T>, t: usize, cond: Condition<T>) -> Result<Sample<T>> {
        let (input, blank) = Self::network_input(x_t, cond)?;
        Ok(self.forward_cached(&input, t, blank)?.0)
    }

    pub fn forward_cached(&self, input: &Sample<T>, t: usize, blank: bool) -> Result<(Sample<T>, ForwardCache<T>)> {
        if t == 0 || t > self.arch.steps {
            return Err(Error::param(format!("timestep {t} outside 1..={}", self.arch.steps)));
        }
        if input.channels != INPUT_CHANNELS {
            return Err(Error::shape(format!("{INPUT_CHANNELS} network input channels"), input.channels));
        }
        let layout = Layout::new(&self.arch);
        if self.data.len() != layout.total {
            return Err(Error::shape(format!("{} parameters", layout.total), self.data.len()));
        }
        let (h, w, k) = (input.height, input.width, self.arch.kernel);
        let hw = h * w;
        let emb = self.embedding(&layout, t);
        let mut inputs = vec![input.data.clone()];
        let mut conv_out = Vec::new();
        let mut pre = Vec::new();
        let last = layout.convs.len() - 1;
        for (l, conv) in layout.convs.iter().enumerate() {
            let x = inputs.last().unwrap();
            let mut y = vec![T::zero(); conv.cout * hw];
            conv_forward(x, conv.cin, h, w, &self.data[conv.weight.clone()], &self.data[conv.bias.clone()], conv.cout, k, &mut y);
            let (gain, mut offset) = self.modulation(conv, emb);
            if l == 0 && blank {
                for (b, &v) in offset.iter_mut().zip(&self.data[layout.blank.clone()]) {
                    *b += v;
                }
            }
            let mut a = y.clone();
            for o in 0..conv.cout {
                for v in &mut a[o * hw..(o + 1) * hw] {
                    *v = *v * gain[o] + offset[o];
                }
            }
            if l == last {
                let gains = self.skip_gains(&layout, t);
                for (c, &g) in gains.iter().enumerate() {
                    for (v, &x) in a[c * hw..(c + 1) * hw].iter_mut().zip(&input.data[c * hw..(c + 1) * hw]) {
                        *v += g * x;
                    }
                }
            }
            conv_out.push(y);
            if l < last {
                inputs.push(a.iter().map(|&v| silu(v)).collect());
                pre.push(a);
            } else {
                let out = Sample::from_data(OUTPUT_CHANNELS, h, w, a)?;
                return Ok((out, ForwardCache { t, blank, height: h, width: w, inputs, conv_out, pre }));
            }
        }
        unreachable!("layout always ends with the output convolution")
    }

    /// Parameter gradient for the upstream gradient `grad_out` of the output.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Sample<T>) -> Result<Vec<T>> {
        let (h, w, k) = (cache.height, cache.width, self.arch.kernel);
        if grad_out.shape() != [OUTPUT_CHANNELS, h, w] {
            return Err(Error::shape(format!("{OUTPUT_CHANNELS}x{h}x{w} output gradient"), format!("{:?}", grad_out.shape())));
        }
        let layout = Layout::new(&self.arch);
        let hw = h * w;
        let e = self.arch.embed_dim;
        let emb = self.embedding(&layout, cache.t);
        let mut grad = vec![T::zero(); layout.total];
        let mut g_emb = vec![T::zero(); e];
        let srow = layout.skip.start + (cache.t - 1) * OUTPUT_CHANNELS;
        for c in 0..OUTPUT_CHANNELS {
            grad[srow + c] = dot(&grad_out.data[c * hw..(c + 1) * hw], &cache.inputs[0][c * hw..(c + 1) * hw]);
        }
        let mut g = grad_out.data.clone();
        for (l, conv) in layout.convs.iter().enumerate().rev() {
            if l + 1 < layout.convs.len() {
                // g holds d/d(activation); move it through SiLU.
                for (gv, &a) in g.iter_mut().zip(&cache.pre[l]) {
                    *gv *= silu_grad(a);
                }
            }
            // g is now d/d(modulated pre-activation).
            let (gain, _) = self.modulation(conv, emb);
            let y = &cache.conv_out[l];
            let mut g_gain = vec![T::zero(); conv.cout];
            let mut g_offset = vec![T::zero(); conv.cout];
            for o in 0..conv.cout {
                let (gs, ys) = (&mut g[o * hw..(o + 1) * hw], &y[o * hw..(o + 1) * hw]);
                g_gain[o] = dot(gs, ys);
                g_offset[o] = gs.iter().fold(T::zero(), |acc, &v| acc + v);
                gs.iter_mut().for_each(|v| *v *= gain[o]);
            }
            let mut gw = vec![T::zero(); conv.weight.len()];
            let mut gb = vec![T::zero(); conv.cout];
            let mut gx = if l > 0 { Some(vec![T::zero(); conv.cin * hw]) } else { None };
            conv_backward(
                &cache.inputs[l],
                conv.cin,
                h,
                w,
                &self.data[conv.weight.clone()],
                conv.cout,
                k,
                &g,
                &mut gw,
                &mut gb,
                gx.as_deref_mut(),
            );
            grad[conv.weight.clone()].copy_from_slice(&gw);
            grad[conv.bias.clone()].copy_from_slice(&gb);
            let (sm, pm) = (&self.data[conv.scale.clone()], &self.data[conv.shift.clone()]);
            for o in 0..conv.cout {
                for i in 0..e {
                    g_emb[i] += g_gain[o] * sm[o * e + i] + g_offset[o] * pm[o * e + i];
                }
            }
            for (o, (&gg, &go)) in g_gain.iter().zip(&g_offset).enumerate() {
                for i in 0..e {
                    grad[conv.scale.start + o * e + i] = gg * emb[i];
                    grad[conv.shift.start + o * e + i] = go * emb[i];
                }
            }
            if l == 0 && cache.blank {
                grad[layout.blank.clone()].copy_from_slice(&g_offset);
            }
            if let Some(next) = gx {
                g = next;
            }
        }
        let row = layout.table.start + (cache.t - 1) * e;
        grad[row..row + e].copy_from_slice(&g_emb);
        Ok(grad)
    }

    /// Per-channel gain `1 + S·e` and offset `P·e` of one layer at embedding `e`.
    fn modulation(&self, conv: &ConvLayout, emb: &[T]) -> (Vec<T>, Vec<T>) {
        let e = emb.len();
        let (sm, pm) = (&self.data[conv.scale.clone()], &self.data[conv.shift.clone()]);
        let gain = (0..conv.cout).map(|o| T::one() + dot(&sm[o * e..(o + 1) * e], emb)).collect();
        let offset = (0..conv.cout).map(|o| dot(&pm[o * e..(o + 1) * e], emb)).collect();
        (gain, offset)
    }

    fn skip_gains<'a>(&'a self, layout: &Layout, t: usize) -> &'a [T] {
        let at = layout.skip.start + (t - 1) * OUTPUT_CHANNELS;
        &self.data[at..at + OUTPUT_CHANNELS]
    }

    /// Skip gains as a `steps × channels` table, row `t − 1` for timestep `t`.
    pub fn skip_table_mut(&mut self) -> &mut [T] {
        let skip = Layout::new(&self.arch).skip;
        &mut self.data[skip]
    }

    fn embedding<'a>(&'a self, layout: &Layout, t: usize) -> &'a [T] {
        let e = self.arch.embed_dim;
        &self.data[layout.table.start + (t - 1) * e..layout.table.start + t * e]
    }
}

impl<T: Real> Denoiser<T> for DenoiserParams<T> {
    fn predict(&self, x_t: &Sample<T>, t: usize, cond: Condition<T>) -> Result<Sample<T>> {
        self.forward(x_t, t, cond)
    }
}

fn silu<T: Real>(z: T) -> T {
    z / (T::one() + (-z).exp())
}

fn silu_grad<T: Real>(z: T) -> T {
    let s = T::one() / (T::one() + (-z).exp());
    s * (T::one() + z * (T::one() - s))
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Row and column ranges of output pixels whose tap `(dy, dx)` lands inside the image.
fn valid(n: usize, d: isize) -> Range<usize> {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(lo as isize) as usize;
    lo..hi
}

/// Same-padded convolution; `weight` is `cout × cin × k × k`.
#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Real>(
    x: &[T],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    cout: usize,
    k: usize,
    out: &mut [T],
) {
    let hw = h * w;
    let r = (k / 2) as isize;
    for o in 0..cout {
        let plane = &mut out[o * hw..(o + 1) * hw];
        plane.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..cin {
            let src = &x[i * hw..(i + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - r;
                for kx in 0..k {
                    let dx = kx as isize - r;
                    let wv = weight[((o * cin + i) * k + ky) * k + kx];
                    let cols = valid(w, dx);
                    for y in valid(h, dy) {
                        let sy = (y as isize + dy) as usize;
                        let dst = &mut plane[y * w + cols.start..y * w + cols.end];
                        let s0 = (cols.start as isize + dx) as usize;
                        let s = &src[sy * w + s0..sy * w + s0 + cols.len()];
                        for (d, &v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    x: &[T],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    cout: usize,
    k: usize,
    gy: &[T],
    gw: &mut [T],
    gb: &mut [T],
    mut gx: Option<&mut [T]>,
) {
    let hw = h * w;
    let r = (k / 2) as isize;
    for o in 0..cout {
        let g = &gy[o * hw..(o + 1) * hw];
        gb[o] = g.iter().fold(T::zero(), |a, &v| a + v);
        for i in 0..cin {
            let src = &x[i * hw..(i + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - r;
                for kx in 0..k {
                    let dx = kx as isize - r;
                    let idx = ((o * cin + i) * k + ky) * k + kx;
                    let wv = weight[idx];
                    let cols = valid(w, dx);
                    let s0 = (cols.start as isize + dx) as usize;
                    let mut acc = T::zero();
                    for y in valid(h, dy) {
                        let sy = (y as isize + dy) as usize;
                        let grow = &g[y * w + cols.start..y * w + cols.end];
                        let srow = &src[sy * w + s0..sy * w + s0 + cols.len()];
                        acc += dot(grow, srow);
                        if let Some(gx) = gx.as_deref_mut() {
                            let drow = &mut gx[i * hw + sy * w + s0..i * hw + sy * w + s0 + cols.len()];
                            for (d, &v) in drow.iter_mut().zip(grow) {
                                *d += wv * v;
                            }
                        }
                    }
                    gw[idx] = acc;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(x: &[f64], cin: usize, h: usize, w: usize, wt: &[f64], b: &[f64], cout: usize, k: usize) -> Vec<f64> {
        let r = (k / 2) as isize;
        let mut out = vec![0.0; cout * h * w];
        for o in 0..cout {
            for y in 0..h {
                for xx in 0..w {
                    let mut s = b[o];
                    for i in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let (sy, sx) = (y as isize + ky as isize - r, xx as isize + kx as isize - r);
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                    s += wt[((o * cin + i) * k + ky) * k + kx] * x[(i * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                    }
                    out[(o * h + y) * w + xx] = s;
                }
            }
        }
        out
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (cin, cout, h, w, k) = (2, 3, 5, 7, 3);
        let x: Vec<f64> = (0..cin * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wt: Vec<f64> = (0..cout * cin * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = vec![0.1, -0.2, 0.3];
        let mut out = vec![0.0; cout * h * w];
        conv_forward(&x, cin, h, w, &wt, &b, cout, k, &mut out);
        let want = naive_conv(&x, cin, h, w, &wt, &b, cout, k);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn network_starts_as_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let arch = Architecture { hidden: vec![4, 4], kernel: 3, embed_dim: 4, steps: 10 };
        let p = DenoiserParams::<f64>::init(&arch, &mut rng).unwrap();
        let x = Sample::randn(OUTPUT_CHANNELS, 8, 8, &mut rng);
        let out = p.forward(&x, 3, Condition::Blank).unwrap();
        assert_eq!(out, x);
        assert_eq!(p.len(), arch.num_params());
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let arch = Architecture { hidden: vec![4], kernel: 3, embed_dim: 4, steps: 10 };
        let p = DenoiserParams::<f64>::init(&arch, &mut rng).unwrap();
        let x = Sample::zeros(OUTPUT_CHANNELS, 8, 8);
        let c = Sample::zeros(MAP_CHANNELS, 8, 9);
        assert!(matches!(p.forward(&x, 1, Condition::Map(&c)), Err(Error::Shape { .. })));
        assert!(p.forward(&x, 11, Condition::Blank).is_err());
        assert!(p.forward(&Sample::zeros(4, 8, 8), 1, Condition::Blank).is_err());
        assert!(Architecture { kernel: 2, ..arch.clone() }.check().is_err());
        assert!(DenoiserParams::<f64>::from_data(&arch, vec![0.0; 3]).is_err());
    }
}
