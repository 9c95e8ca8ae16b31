use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::Sample;
use crate::error::{Error, Result};
use crate::mesh::{make_body_proxy, vertex_normals, BodyPose, Mesh, ProxyKind};
use crate::raster::{rasterize, Camera, NormalMap};
use crate::scalar::Real;
use crate::vec3::{self, Vec3};

/// Target front/back renders of a clothed body and the front render of its proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample<T> {
    pub front: NormalMap<T>,
    /// Rendered from behind (yaw + 180°), as seen by that camera.
    pub back: NormalMap<T>,
    pub cond: NormalMap<T>,
}

impl<T: Real> TrainExample<T> {
    pub fn new(front: NormalMap<T>, back: NormalMap<T>, cond: NormalMap<T>) -> Result<Self> {
        front.same_shape(&back)?;
        front.same_shape(&cond)?;
        Ok(Self { front, back, cond })
    }

    pub fn target_sample(&self) -> Result<Sample<T>> {
        dual_sample(&self.front, &self.back)
    }

    pub fn cond_sample(&self) -> Sample<T> {
        Sample::from_normal_map(&self.cond)
    }
}

/// Packs front ‖ mirrored back so that both halves are pixel-aligned.
pub fn dual_sample<T: Real>(front: &NormalMap<T>, back: &NormalMap<T>) -> Result<Sample<T>> {
    Sample::from_dual_maps(front, &back.flip_horizontal())
}

/// Inverse of [`dual_sample`]; the back map comes out in its own camera's orientation.
pub fn split_dual_sample<T: Real>(sample: &Sample<T>) -> Result<(NormalMap<T>, NormalMap<T>)> {
    let (front, back) = sample.to_dual_maps()?;
    Ok((front, back.flip_horizontal()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthRanges {
    pub height: [f64; 2],
    pub limb_thickness: [f64; 2],
    pub torso_thickness: [f64; 2],
    pub arm_abduction_deg: [f64; 2],
    pub arm_forward_deg: [f64; 2],
    pub leg_abduction_deg: [f64; 2],
    /// Clothing offset along the normals, world units.
    pub displacement: [f64; 2],
    pub cells_per_height: usize,
}

impl Default for SynthRanges {
    fn default() -> Self {
        Self {
            height: [1.8, 2.1],
            limb_thickness: [0.03, 0.045],
            torso_thickness: [0.085, 0.12],
            arm_abduction_deg: [15.0, 60.0],
            arm_forward_deg: [-20.0, 20.0],
            leg_abduction_deg: [3.0, 12.0],
            displacement: [0.0, 0.06],
            cells_per_height: 32,
        }
    }
}

impl SynthRanges {
    pub fn check(&self) -> Result<()> {
        let ranges = [
            ("height", self.height),
            ("limb_thickness", self.limb_thickness),
            ("torso_thickness", self.torso_thickness),
            ("arm_abduction_deg", self.arm_abduction_deg),
            ("arm_forward_deg", self.arm_forward_deg),
            ("leg_abduction_deg", self.leg_abduction_deg),
            ("displacement", self.displacement),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::param(format!("range {name} = [{lo}, {hi}] is empty")));
            }
        }
        if !(self.height[0] > 0.0) || !(self.limb_thickness[0] > 0.0) || !(self.torso_thickness[0] > 0.0) {
            return Err(Error::param("body dimensions must be positive"));
        }
        if self.displacement[0] < 0.0 {
            return Err(Error::param("displacement amplitude must be non-negative"));
        }
        Ok(())
    }

    /// Front camera that frames the tallest body in the range.
    pub fn camera(&self, resolution: usize) -> Result<Camera<f64>> {
        Camera::new(0.0, 1.84 / self.height[1], resolution, resolution)
    }
}

/// Parameters of one synthetic subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSubject {
    pub pose: BodyPose<f64>,
    pub amplitude: f64,
    pub seed: u64,
}

impl SynthSubject {
    pub fn draw<R: Rng + ?Sized>(ranges: &SynthRanges, rng: &mut R) -> Self {
        let mut u = |[lo, hi]: [f64; 2]| if lo == hi { lo } else { rng.gen_range(lo..hi) };
        let pose = BodyPose {
            height: u(ranges.height),
            limb_thickness: u(ranges.limb_thickness),
            torso_thickness: u(ranges.torso_thickness),
            arm_abduction_deg: [u(ranges.arm_abduction_deg), u(ranges.arm_abduction_deg)],
            arm_forward_deg: [u(ranges.arm_forward_deg), u(ranges.arm_forward_deg)],
            leg_abduction_deg: [u(ranges.leg_abduction_deg), u(ranges.leg_abduction_deg)],
            leg_forward_deg: [0.0; 2],
        };
        let amplitude = u(ranges.displacement);
        SynthSubject { pose, amplitude, seed: u64::from(rng.gen::<u32>()) }
    }

    pub fn proxy(&self, cells_per_height: usize) -> Result<Mesh<f64>> {
        make_body_proxy(&ProxyKind::MultiCapsule(self.pose.to_multi_capsule(cells_per_height)?))
    }

    /// Proxy pushed out along its normals by a garment band plus low-frequency folds.
    pub fn clothed(&self, proxy: &Mesh<f64>) -> Mesh<f64> {
        if self.amplitude == 0.0 {
            return proxy.clone();
        }
        let field = ClothField::new(self.seed, self.pose.height);
        let (normals, _) = vertex_normals(proxy);
        let mut out = proxy.clone();
        for (v, n) in out.vertices.iter_mut().zip(&normals) {
            let d = self.amplitude * field.eval(*v);
            *v = vec3::add(*v, vec3::scale(*n, d));
        }
        out
    }
}

struct ClothField {
    hem: f64,
    neck: f64,
    edge: f64,
    waves: Vec<(Vec3<f64>, f64, f64)>,
}

impl ClothField {
    fn new(seed: u64, height: f64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let hem = height * rng.gen_range(-0.35..-0.02);
        let neck = height * 0.37;
        let waves = (0..3)
            .map(|_| {
                let raw = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let dir = vec3::normalize(raw).unwrap_or([0.0, 1.0, 0.0]);
                let freq = rng.gen_range(4.0..10.0) / height;
                (vec3::scale(dir, freq), rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0) / 3.0)
            })
            .collect();
        Self { hem, neck, edge: 0.02 * height, waves }
    }

    fn eval(&self, p: Vec3<f64>) -> f64 {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let band = sig((p[1] - self.hem) / self.edge) * sig((self.neck - p[1]) / self.edge);
        let folds: f64 = self.waves.iter().map(|(w, phase, a)| a * (vec3::dot(*w, p) + phase).sin()).sum();
        band * (1.0 + 0.5 * folds)
    }
}

/// Finished example with the subject that produced it.
#[derive(Debug, Clone)]
pub struct SynthExample {
    pub subject: SynthSubject,
    pub example: TrainExample<f32>,
}

/// Renders `count` random subjects at `resolution`² pixels.
pub fn synth_dataset<R: Rng + ?Sized>(
    count: usize,
    resolution: usize,
    ranges: &SynthRanges,
    rng: &mut R,
) -> Result<Vec<SynthExample>> {
    ranges.check()?;
    let cam = ranges.camera(resolution)?;
    (0..count)
        .map(|i| {
            let subject = SynthSubject::draw(ranges, rng);
            let example = render_subject(&subject, ranges.cells_per_height, &cam)?;
            log::debug!("synthetic example {i}: amplitude {:.3}", subject.amplitude);
            Ok(SynthExample { subject, example })
        })
        .collect()
}

pub fn render_subject(subject: &SynthSubject, cells_per_height: usize, cam: &Camera<f64>) -> Result<TrainExample<f32>> {
    let proxy = subject.proxy(cells_per_height)?;
    let clothed = subject.clothed(&proxy);
    let back_cam = cam.with_yaw(cam.yaw + 180.0);
    let front = rasterize(&clothed, cam, 0.0)?.cast();
    let back = rasterize(&clothed, &back_cam, 0.0)?.cast();
    let cond = rasterize(&proxy, cam, 0.0)?.cast();
    TrainExample::new(front, back, cond)
}
