use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{cast, Real};
use crate::vec3::{self, Vec3};

/// RGB value of pixels not covered by any surface.
pub const BACKGROUND: f64 = 0.5;

const NMAP_MAGIC: &[u8; 4] = b"NMAP";

/// `H × W × 4` image, row-major with interleaved channels: encoded normal rgb then alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> NormalMap<T> {
    /// Background rgb and zero alpha.
    pub fn background(height: usize, width: usize) -> Self {
        let mut data = vec![T::lit(BACKGROUND); height * width * 4];
        for px in data.chunks_exact_mut(4) {
            px[3] = T::zero();
        }
        Self { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![T::zero(); height * width * 4],
        }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * 4 {
            return Err(Error::shape(format!("{height}x{width}x4"), format!("{} values", data.len())));
        }
        Ok(Self { height, width, data })
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[T] {
        let i = (row * self.width + col) * 4;
        &self.data[i..i + 4]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [T] {
        let i = (row * self.width + col) * 4;
        &mut self.data[i..i + 4]
    }

    #[inline]
    pub fn alpha(&self, p: usize) -> T {
        self.data[p * 4 + 3]
    }

    #[inline]
    pub fn rgb(&self, p: usize) -> [T; 3] {
        [self.data[p * 4], self.data[p * 4 + 1], self.data[p * 4 + 2]]
    }

    pub fn alpha_channel(&self) -> Vec<T> {
        self.data.chunks_exact(4).map(|px| px[3]).collect()
    }

    pub fn mask(&self, threshold: T) -> Vec<bool> {
        self.data.chunks_exact(4).map(|px| px[3] > threshold).collect()
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                out.pixel_mut(r, c).copy_from_slice(self.pixel(r, self.width - 1 - c));
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> NormalMap<U> {
        NormalMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&x| cast(x)).collect(),
        }
    }

    /// Serialises as `"NMAP"`, `H`, `W` (u32 LE) then `H·W·4` f32 LE values.
    pub fn to_nmap_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.data.len() * 4);
        out.extend_from_slice(NMAP_MAGIC);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for &x in &self.data {
            out.extend_from_slice(&cast::<T, f32>(x).to_le_bytes());
        }
        out
    }

    pub fn from_nmap_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < 12 || &bytes[0..4] != NMAP_MAGIC {
            return Err(Error::corrupt(origin, "missing NMAP header"));
        }
        let height = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let width = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let n = height
            .checked_mul(width)
            .and_then(|x| x.checked_mul(16))
            .ok_or_else(|| Error::corrupt(origin, "dimensions overflow"))?;
        if bytes.len() != 12 + n {
            return Err(Error::corrupt(
                origin,
                format!("expected {} payload bytes for {height}x{width}, found {}", n, bytes.len() - 12),
            ));
        }
        let data = bytes[12..]
            .chunks_exact(4)
            .map(|b| cast::<f32, T>(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
            .collect();
        Ok(Self { height, width, data })
    }

    pub fn write_nmap(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_nmap_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn read_nmap(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_nmap_bytes(&bytes, path)
    }

    /// 16-bit RGBA PNG; values are clamped to `[0, 1]`.
    pub fn write_png16(&self, path: &Path) -> Result<()> {
        let raw: Vec<u16> = self
            .data
            .iter()
            .map(|&x| (x.to_f64_lossy().clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        let img = image::ImageBuffer::<image::Rgba<u16>, Vec<u16>>::from_raw(self.width as u32, self.height as u32, raw)
            .ok_or_else(|| Error::shape("RGBA buffer", "mismatched length"))?;
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn read_png16(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_rgba16();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| T::lit(v as f64 / 65535.0)).collect();
        Ok(Self {
            height: h as usize,
            width: w as usize,
            data,
        })
    }
}

/// `rgb = (n + 1) / 2` for a (near) unit normal.
pub fn encode_normal<T: Real>(n: Vec3<T>) -> Result<[T; 3]> {
    let len = vec3::norm(n);
    if !(len >= T::lit(0.9) && len <= T::lit(1.1)) {
        return Err(Error::param(format!("normal length {len} outside [0.9, 1.1]")));
    }
    Ok(n.map(|x| (x + T::one()) * T::half()))
}

/// Inverse of [`encode_normal`], renormalised.
pub fn decode_normal<T: Real>(rgb: [T; 3]) -> Result<Vec3<T>> {
    if rgb.iter().any(|&c| !(c >= T::zero() && c <= T::one())) {
        return Err(Error::param("rgb component outside [0, 1]"));
    }
    vec3::normalize(rgb.map(|c| T::two() * c - T::one()))
        .ok_or_else(|| Error::param("rgb encodes the zero vector"))
}

/// Decoded normal, or zero where the rgb encodes no direction.
pub(crate) fn decode_or_zero<T: Real>(rgb: [T; 3]) -> Vec3<T> {
    vec3::normalize(rgb.map(|c| T::two() * c - T::one())).unwrap_or_else(vec3::zero)
}

/// Intersection over union of the thresholded alpha masks.
pub fn silhouette_iou<T: Real>(a: &NormalMap<T>, b: &NormalMap<T>, threshold: T) -> Result<f64> {
    a.same_shape(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for p in 0..a.num_pixels() {
        let (x, y) = (a.alpha(p) > threshold, b.alpha(p) > threshold);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Mean angle in degrees between decoded normals over pixels covered in both maps.
pub fn mean_angular_error_deg<T: Real>(a: &NormalMap<T>, b: &NormalMap<T>, threshold: T) -> Result<f64> {
    a.same_shape(b)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for p in 0..a.num_pixels() {
        if a.alpha(p) > threshold && b.alpha(p) > threshold {
            let (x, y) = (decode_or_zero(a.rgb(p)), decode_or_zero(b.rgb(p)));
            let c = vec3::dot(x, y).to_f64_lossy().clamp(-1.0, 1.0);
            sum += c.acos().to_degrees();
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}
