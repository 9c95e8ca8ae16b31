use super::config::LossWeights;
use crate::error::{Error, Result};
use crate::mesh::{laplacian_loss, normal_consistency_loss, Adjacency, Mesh};
use crate::raster::{decode_or_zero, render, Camera, NormalMap, Scene};
use crate::scalar::{cast, Real};
use crate::vec3::{self, Vec3};

/// One supervised view: a camera and the normal map it should see.
#[derive(Debug, Clone)]
pub struct TargetView<T> {
    pub camera: Camera<T>,
    pub map: NormalMap<T>,
}

/// Side camera with the binary silhouette the carved mesh should not shrink inside.
#[derive(Debug, Clone)]
pub struct SideView<T> {
    pub camera: Camera<T>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct CarveTargets<T> {
    pub views: Vec<TargetView<T>>,
    pub sides: Vec<SideView<T>>,
}

impl<T: Real> CarveTargets<T> {
    /// Front/back targets with side masks rendered from `proxy` at yaw ±90° of the front camera.
    pub fn dual(front: NormalMap<T>, back: NormalMap<T>, front_camera: Camera<T>, proxy: &Mesh<T>) -> Result<Self> {
        let back_camera = front_camera.with_yaw(front_camera.yaw + T::lit(180.0));
        let sides = [90.0, 270.0]
            .iter()
            .map(|&d| {
                let camera = front_camera.with_yaw(front_camera.yaw + T::lit(d));
                let map = crate::raster::rasterize(proxy, &camera, T::zero())?;
                Ok(SideView {
                    camera,
                    mask: map.mask(T::half()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let t = Self {
            views: vec![
                TargetView { camera: front_camera, map: front },
                TargetView { camera: back_camera, map: back },
            ],
            sides,
        };
        t.check()?;
        Ok(t)
    }

    pub fn check(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::param("carving needs at least one target view"));
        }
        for v in &self.views {
            v.camera.check()?;
            if v.map.height != v.camera.height || v.map.width != v.camera.width {
                return Err(Error::shape(
                    format!("{}x{}", v.camera.height, v.camera.width),
                    format!("{}x{}", v.map.height, v.map.width),
                ));
            }
        }
        for s in &self.sides {
            s.camera.check()?;
            if s.mask.len() != s.camera.height * s.camera.width {
                return Err(Error::shape(s.camera.height * s.camera.width, s.mask.len()));
            }
        }
        Ok(())
    }
}

/// Mean L1 distance between decoded normals over pixels where both alphas exceed
/// `threshold`, with its gradient with respect to the rendered rgb channels.
pub fn normal_loss<T: Real>(rendered: &NormalMap<T>, target: &NormalMap<T>, threshold: T) -> Result<(T, NormalMap<T>)> {
    rendered.same_shape(target)?;
    let mut grad = NormalMap::zeros(rendered.height, rendered.width);
    let mut sum = T::zero();
    let mut count = 0usize;
    let mut sign = Vec::new();
    for p in 0..rendered.num_pixels() {
        if !(rendered.alpha(p) > threshold && target.alpha(p) > threshold) {
            continue;
        }
        let n = rendered.rgb(p).map(|c| T::two() * c - T::one());
        let t = decode_or_zero(target.rgb(p));
        let mut s = [T::zero(); 3];
        for k in 0..3 {
            let d = n[k] - t[k];
            sum += d.abs();
            s[k] = if d > T::zero() {
                T::one()
            } else if d < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
        }
        sign.push((p, s));
        count += 1;
    }
    if count == 0 {
        return Ok((T::zero(), grad));
    }
    let inv = T::one() / T::from_usize_lossy(count);
    for (p, s) in sign {
        for k in 0..3 {
            // d(2r - 1)/dr = 2
            grad.data[p * 4 + k] = T::two() * s[k] * inv;
        }
    }
    Ok((sum * inv, grad))
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(a, b));
    }
    Ok(())
}

/// Mean squared difference of alpha values and its gradient.
pub fn mask_loss<T: Real>(rendered: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    check_len(rendered.len(), target.len())?;
    if rendered.is_empty() {
        return Ok((T::zero(), Vec::new()));
    }
    let n = T::from_usize_lossy(rendered.len());
    let mut value = T::zero();
    let grad = rendered
        .iter()
        .zip(target)
        .map(|(&r, &t)| {
            let d = r - t;
            value += d * d;
            T::two() * d / n
        })
        .collect();
    Ok((value / n, grad))
}

/// `Σ_{mask = 1} (1 − α)²`: penalises only coverage missing inside the mask.
pub fn side_loss<T: Real>(rendered: &[T], mask: &[bool]) -> Result<(T, Vec<T>)> {
    check_len(rendered.len(), mask.len())?;
    let mut value = T::zero();
    let grad = rendered
        .iter()
        .zip(mask)
        .map(|(&a, &m)| {
            if m {
                let d = T::one() - a;
                value += d * d;
                -T::two() * d
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((value, grad))
}

/// Rendering options shared by every term of [`total_loss`].
#[derive(Debug, Clone, Copy)]
pub struct LossOptions<'a> {
    pub softness: f64,
    pub alpha_threshold: f64,
    /// Target views to include; `None` uses all of them.
    pub views: Option<&'a [usize]>,
}

impl Default for LossOptions<'_> {
    fn default() -> Self {
        Self {
            softness: crate::raster::DEFAULT_SOFTNESS,
            alpha_threshold: 0.5,
            views: None,
        }
    }
}

/// Unweighted term values plus the weighted total and its vertex gradient.
#[derive(Debug, Clone)]
pub struct LossReport<T> {
    pub total: T,
    pub normal: T,
    pub mask: T,
    pub sides: T,
    pub laplacian: T,
    pub normal_reg: T,
    pub gradient: Vec<Vec3<T>>,
}

impl<T: Real> LossReport<T> {
    /// Weighted image terms only.
    pub fn data_loss(&self, w: &LossWeights) -> T {
        cast::<f64, T>(w.normal) * self.normal + cast::<f64, T>(w.mask) * self.mask
    }
}

/// Weighted sum of the five carving terms. Image terms are averaged over the
/// selected views; the side term is summed over side views.
pub fn total_loss<T: Real>(
    scene: &Scene,
    adjacency: &Adjacency,
    mesh: &Mesh<T>,
    targets: &CarveTargets<T>,
    weights: &LossWeights,
    opts: &LossOptions<'_>,
) -> Result<LossReport<T>> {
    weights.check()?;
    let nv = mesh.num_vertices();
    let softness: T = cast(opts.softness);
    let tau: T = cast(opts.alpha_threshold);
    let w = |x: f64| -> T { cast(x) };
    let mut gradient = vec![vec3::zero::<T>(); nv];
    let mut report = LossReport {
        total: T::zero(),
        normal: T::zero(),
        mask: T::zero(),
        sides: T::zero(),
        laplacian: T::zero(),
        normal_reg: T::zero(),
        gradient: Vec::new(),
    };
    let all: Vec<usize> = (0..targets.views.len()).collect();
    let views = opts.views.unwrap_or(&all);
    if views.iter().any(|&v| v >= targets.views.len()) {
        return Err(Error::param("target view index out of range"));
    }
    let image_terms = weights.normal > 0.0 || weights.mask > 0.0;
    if image_terms && !views.is_empty() {
        let inv_views = T::one() / T::from_usize_lossy(views.len());
        for &v in views {
            let target = &targets.views[v];
            let frame = render(scene, mesh, &target.camera, softness)?;
            let (ln, mut up) = normal_loss(&frame.map, &target.map, tau)?;
            let target_mask: Vec<T> = target
                .map
                .mask(tau)
                .into_iter()
                .map(|m| if m { T::one() } else { T::zero() })
                .collect();
            let (lm, gm) = mask_loss(&frame.map.alpha_channel(), &target_mask)?;
            report.normal += ln * inv_views;
            report.mask += lm * inv_views;
            let (wn, wm) = (w(weights.normal) * inv_views, w(weights.mask) * inv_views);
            for (p, g) in gm.iter().enumerate() {
                for k in 0..3 {
                    up.data[p * 4 + k] *= wn;
                }
                up.data[p * 4 + 3] = wm * *g;
            }
            add_into(&mut gradient, &frame.backward(mesh, &up)?);
        }
    }
    if weights.sides > 0.0 {
        for side in &targets.sides {
            let frame = render(scene, mesh, &side.camera, softness)?;
            let width = frame.map.width;
            // Pixels whose centre is covered count as fully covered, so only
            // shrinkage inside the proxy mask is penalized.
            let hard: Vec<bool> = (0..side.mask.len()).map(|p| frame.face_at(p / width, p % width).is_some()).collect();
            let alpha: Vec<T> = frame
                .map
                .alpha_channel()
                .into_iter()
                .zip(&hard)
                .map(|(a, &h)| if h { T::one() } else { a })
                .collect();
            let (ls, gs) = side_loss(&alpha, &side.mask)?;
            report.sides += ls;
            let mut up = NormalMap::zeros(frame.map.height, width);
            for (p, g) in gs.iter().enumerate() {
                if !hard[p] {
                    up.data[p * 4 + 3] = w(weights.sides) * *g;
                }
            }
            add_into(&mut gradient, &frame.backward(mesh, &up)?);
        }
    }
    if weights.laplacian > 0.0 {
        let (l, g) = laplacian_loss(mesh, adjacency)?;
        report.laplacian = l;
        add_scaled(&mut gradient, &g, w(weights.laplacian));
    }
    if weights.normal_reg > 0.0 {
        let (l, g) = normal_consistency_loss(mesh, adjacency)?;
        report.normal_reg = l;
        add_scaled(&mut gradient, &g, w(weights.normal_reg));
    }
    report.total = w(weights.normal) * report.normal
        + w(weights.mask) * report.mask
        + w(weights.sides) * report.sides
        + w(weights.laplacian) * report.laplacian
        + w(weights.normal_reg) * report.normal_reg;
    report.gradient = gradient;
    Ok(report)
}

fn add_into<T: Real>(acc: &mut [Vec3<T>], g: &[Vec3<T>]) {
    for (a, b) in acc.iter_mut().zip(g) {
        vec3::add_assign(a, *b);
    }
}

fn add_scaled<T: Real>(acc: &mut [Vec3<T>], g: &[Vec3<T>], s: T) {
    for (a, b) in acc.iter_mut().zip(g) {
        vec3::add_assign(a, vec3::scale(*b, s));
    }
}
