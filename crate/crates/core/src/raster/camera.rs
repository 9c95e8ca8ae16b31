use crate::error::{Error, Result};
use crate::scalar::{sin_cos_deg, Real};
use crate::vec3::Vec3;

/// Weak-perspective (scaled orthographic) camera orbiting the vertical axis.
///
/// World-to-camera rotation is `Rx(pitch) · Ry(-yaw)`; the camera looks down `-z`
/// so larger camera-space `z` is nearer. Screen coordinates are pixel units with
/// the origin at the image centre and `y` pointing up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera<T> {
    pub yaw: T,
    pub pitch: T,
    /// World units to NDC.
    pub scale: T,
    pub principal_offset: [T; 2],
    pub height: usize,
    pub width: usize,
}

impl<T: Real> Camera<T> {
    pub fn new(yaw: T, scale: T, height: usize, width: usize) -> Result<Self> {
        let cam = Self {
            yaw,
            pitch: T::zero(),
            scale,
            principal_offset: [T::zero(); 2],
            height,
            width,
        };
        cam.check()?;
        Ok(cam)
    }

    pub fn with_yaw(mut self, yaw: T) -> Self {
        self.yaw = yaw;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(self.scale > T::zero()) || !self.scale.is_finite() {
            return Err(Error::param(format!("camera scale must be positive, got {}", self.scale)));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::param(format!(
                "camera resolution must be at least 8x8, got {}x{}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn rotation(&self) -> [[T; 3]; 3] {
        let (sy, cy) = sin_cos_deg(self.yaw);
        let (sp, cp) = sin_cos_deg(self.pitch);
        let z = T::zero();
        let ry = [[cy, z, -sy], [z, T::one(), z], [sy, z, cy]];
        let rx = [[T::one(), z, z], [z, cp, -sp], [z, sp, cp]];
        let mut r = [[z; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| rx[i][k] * ry[k][j]).sum();
            }
        }
        r
    }

    /// Screen position `[x, y]` in pixels and camera-space depth.
    pub fn project_with(&self, r: &[[T; 3]; 3], v: Vec3<T>) -> ([T; 2], T) {
        let c = mat_vec(r, v);
        let [hx, hy] = self.half_extent();
        (
            [
                hx * (self.scale * c[0] + self.principal_offset[0]),
                hy * (self.scale * c[1] + self.principal_offset[1]),
            ],
            c[2],
        )
    }

    pub fn project(&self, v: Vec3<T>) -> ([T; 2], T) {
        self.project_with(&self.rotation(), v)
    }

    /// Half the image size in pixels, `[W/2, H/2]`.
    pub fn half_extent(&self) -> [T; 2] {
        [
            T::from_usize_lossy(self.width) * T::half(),
            T::from_usize_lossy(self.height) * T::half(),
        ]
    }

    /// Screen position of the centre of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> [T; 2] {
        // Integer numerators keep mirrored pixel centres exact negations.
        let x = (2 * col + 1) as i64 - self.width as i64;
        let y = self.height as i64 - (2 * row + 1) as i64;
        [T::lit(x as f64) * T::half(), T::lit(y as f64) * T::half()]
    }

    /// Pixel containing a screen point, if inside the image.
    pub fn pixel_at(&self, p: [T; 2]) -> Option<(usize, usize)> {
        let [hx, hy] = self.half_extent();
        let col = (p[0] + hx).floor();
        let row = (hy - p[1]).floor();
        if col < T::zero() || row < T::zero() {
            return None;
        }
        let (col, row) = (col.to_usize()?, row.to_usize()?);
        (col < self.width && row < self.height).then_some((row, col))
    }

    /// Inclusive pixel ranges whose centres fall inside the screen box.
    pub fn pixel_span(&self, lo: [T; 2], hi: [T; 2]) -> Option<(std::ops::RangeInclusive<usize>, std::ops::RangeInclusive<usize>)> {
        let [hx, hy] = self.half_extent();
        let c0 = (lo[0] + hx - T::half()).ceil().max(T::zero());
        let c1 = (hi[0] + hx - T::half()).floor().min(T::from_usize_lossy(self.width) - T::one());
        let r0 = (hy - T::half() - hi[1]).ceil().max(T::zero());
        let r1 = (hy - T::half() - lo[1]).floor().min(T::from_usize_lossy(self.height) - T::one());
        if !(c0 <= c1) || !(r0 <= r1) {
            return None;
        }
        Some((r0.to_usize()?..=r1.to_usize()?, c0.to_usize()?..=c1.to_usize()?))
    }

    /// Camera scale that fits a bounding sphere of `radius` into `fill` of the half-height.
    pub fn fit_scale(radius: T, fill: T) -> T {
        fill / radius
    }
}

pub(crate) fn mat_vec<T: Real>(r: &[[T; 3]; 3], v: Vec3<T>) -> Vec3<T> {
    [
        r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
        r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
        r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
    ]
}

pub(crate) fn mat_t_vec<T: Real>(r: &[[T; 3]; 3], v: Vec3<T>) -> Vec3<T> {
    [
        r[0][0] * v[0] + r[1][0] * v[1] + r[2][0] * v[2],
        r[0][1] * v[0] + r[1][1] * v[1] + r[2][1] * v[2],
        r[0][2] * v[0] + r[1][2] * v[1] + r[2][2] * v[2],
    ]
}

/// `n_views` cameras stepping the yaw of `base` by `yaw_step` degrees.
pub fn camera_ring<T: Real>(n_views: usize, yaw_step: T, base: &Camera<T>) -> Result<Vec<Camera<T>>> {
    if T::from_usize_lossy(n_views) * yaw_step.abs() > T::lit(360.0) {
        return Err(Error::param("camera ring wraps past 360 degrees"));
    }
    Ok((0..n_views)
        .map(|i| base.with_yaw(base.yaw + T::from_usize_lossy(i) * yaw_step))
        .collect())
}
