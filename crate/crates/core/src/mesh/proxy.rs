//! Procedural closed body proxies: sphere, capsule and blended multi-capsule skeletons.

use std::collections::HashMap;

use super::{remesh_with, validate, Mesh, RemeshOptions};
use crate::error::{Error, Result};
use crate::scalar::{sin_cos_deg, Real};
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapsuleSegment<T> {
    pub a: Vec3<T>,
    pub b: Vec3<T>,
    pub radius: T,
}

impl<T: Real> CapsuleSegment<T> {
    pub fn new(a: Vec3<T>, b: Vec3<T>, radius: T) -> Self {
        Self { a, b, radius }
    }

    pub fn sdf(&self, p: Vec3<T>) -> T {
        vec3::point_segment_distance(p, self.a, self.b).0 - self.radius
    }
}

/// Smoothly blended union of capsules, meshed by marching tetrahedra and remeshing.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiCapsule<T> {
    pub segments: Vec<CapsuleSegment<T>>,
    /// Smooth-min blend width; zero gives a hard union.
    pub blend: T,
    /// Grid spacing of the implicit sampling.
    pub cell_size: T,
    /// Edge length of the final remeshed surface; defaults to `cell_size` when `None`.
    pub target_edge: Option<T>,
}

impl<T: Real> MultiCapsule<T> {
    pub fn sdf(&self, p: Vec3<T>) -> T {
        let mut d = T::infinity();
        for s in &self.segments {
            d = smooth_min(d, s.sdf(p), self.blend);
        }
        d
    }

    fn check(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::param("multi-capsule needs at least one segment"));
        }
        if !(self.cell_size > T::zero()) || self.blend < T::zero() {
            return Err(Error::param("cell size must be positive and blend non-negative"));
        }
        if let Some(e) = self.target_edge {
            if !(e > T::zero()) {
                return Err(Error::param("target edge must be positive"));
            }
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.radius > T::zero()) {
                return Err(Error::param(format!("segment {i} has non-positive radius {}", s.radius)));
            }
        }
        // Union-find over overlapping capsules.
        let n = self.segments.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for i in 0..n {
            for j in i + 1..n {
                let (si, sj) = (&self.segments[i], &self.segments[j]);
                if segment_segment_distance(si.a, si.b, sj.a, sj.b) < si.radius + sj.radius {
                    let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                    parent[ri] = rj;
                }
            }
        }
        let r0 = root(&mut parent, 0);
        if (1..n).any(|i| root(&mut parent, i) != r0) {
            return Err(Error::param("multi-capsule segments do not form a connected skeleton"));
        }
        Ok(())
    }

    fn bounds(&self) -> (Vec3<T>, Vec3<T>) {
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for s in &self.segments {
            for p in [s.a, s.b] {
                for k in 0..3 {
                    lo[k] = lo[k].min(p[k] - s.radius);
                    hi[k] = hi[k].max(p[k] + s.radius);
                }
            }
        }
        let pad = self.cell_size * T::lit(2.0) + self.blend;
        (lo.map(|x| x - pad), hi.map(|x| x + pad))
    }
}

/// Polynomial smooth minimum.
fn smooth_min<T: Real>(a: T, b: T, k: T) -> T {
    if k <= T::zero() || !a.is_finite() || !b.is_finite() {
        return a.min(b);
    }
    let h = (k - (a - b).abs()).max(T::zero()) / k;
    a.min(b) - h * h * k * T::lit(0.25)
}

/// Closest distance between segments `p0p1` and `q0q1`.
pub(crate) fn segment_segment_distance<T: Real>(p0: Vec3<T>, p1: Vec3<T>, q0: Vec3<T>, q1: Vec3<T>) -> T {
    let d1 = vec3::sub(p1, p0);
    let d2 = vec3::sub(q1, q0);
    let r = vec3::sub(p0, q0);
    let a = vec3::dot(d1, d1);
    let e = vec3::dot(d2, d2);
    let f = vec3::dot(d2, r);
    let eps = T::lit(1e-20);
    let clamp = |x: T| x.max(T::zero()).min(T::one());
    let (s, t);
    if a <= eps && e <= eps {
        return vec3::norm(r);
    }
    if a <= eps {
        s = T::zero();
        t = clamp(f / e);
    } else {
        let c = vec3::dot(d1, r);
        if e <= eps {
            t = T::zero();
            s = clamp(-c / a);
        } else {
            let b = vec3::dot(d1, d2);
            let denom = a * e - b * b;
            let s0 = if denom > eps { clamp((b * f - c * e) / denom) } else { T::zero() };
            let t0 = (b * s0 + f) / e;
            if t0 < T::zero() {
                t = T::zero();
                s = clamp(-c / a);
            } else if t0 > T::one() {
                t = T::one();
                s = clamp((b - c) / a);
            } else {
                t = t0;
                s = s0;
            }
        }
    }
    let cp = vec3::add(p0, vec3::scale(d1, s));
    let cq = vec3::add(q0, vec3::scale(d2, t));
    vec3::dist(cp, cq)
}

/// Stick-figure body pose expressed as capsule segments. The body stands along +y
/// centred at the origin, facing +z.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BodyPose<T> {
    pub height: T,
    /// Limb radius as a fraction of height.
    pub limb_thickness: T,
    /// Torso radius as a fraction of height.
    pub torso_thickness: T,
    /// Arm angle away from the body, degrees, left then right.
    pub arm_abduction_deg: [T; 2],
    /// Arm angle toward +z, degrees.
    pub arm_forward_deg: [T; 2],
    pub leg_abduction_deg: [T; 2],
    pub leg_forward_deg: [T; 2],
}

impl<T: Real> Default for BodyPose<T> {
    fn default() -> Self {
        Self {
            height: T::lit(2.0),
            limb_thickness: T::lit(0.035),
            torso_thickness: T::lit(0.1),
            arm_abduction_deg: [T::lit(30.0); 2],
            arm_forward_deg: [T::zero(); 2],
            leg_abduction_deg: [T::lit(6.0); 2],
            leg_forward_deg: [T::zero(); 2],
        }
    }
}

impl<T: Real> BodyPose<T> {
    pub fn segments(&self) -> Result<Vec<CapsuleSegment<T>>> {
        if !(self.height > T::zero()) || !(self.limb_thickness > T::zero()) || !(self.torso_thickness > T::zero()) {
            return Err(Error::param("body dimensions must be positive"));
        }
        let h = self.height;
        let at = |x: f64, y: f64| [T::lit(x) * h, T::lit(y) * h, T::zero()];
        let limb = self.limb_thickness * h;
        let torso = self.torso_thickness * h;
        let mut out = vec![
            CapsuleSegment::new(at(0.0, -0.02), at(0.0, 0.24), torso),
            CapsuleSegment::new(at(0.0, 0.26), at(0.0, 0.37), limb),
            CapsuleSegment::new(at(0.0, 0.41), at(0.0, 0.43), T::lit(0.06) * h),
            CapsuleSegment::new(at(-0.13, 0.28), at(0.13, 0.28), limb * T::lit(1.2)),
            CapsuleSegment::new(at(-0.07, -0.03), at(0.07, -0.03), limb * T::lit(1.4)),
        ];
        let limb_dir = |side: T, abd: T, fwd: T| {
            let (sa, ca) = sin_cos_deg(abd);
            let (sf, cf) = sin_cos_deg(fwd);
            [side * sa * cf, -ca * cf, sf]
        };
        for (k, side) in [-T::one(), T::one()].into_iter().enumerate() {
            let shoulder = [side * T::lit(0.13) * h, T::lit(0.28) * h, T::zero()];
            let d = limb_dir(side, self.arm_abduction_deg[k], self.arm_forward_deg[k]);
            let hand = vec3::add(shoulder, vec3::scale(d, T::lit(0.34) * h));
            out.push(CapsuleSegment::new(shoulder, hand, limb));
            let hip = [side * T::lit(0.07) * h, T::lit(-0.03) * h, T::zero()];
            let d = limb_dir(side, self.leg_abduction_deg[k], self.leg_forward_deg[k]);
            let foot = vec3::add(hip, vec3::scale(d, T::lit(0.43) * h));
            out.push(CapsuleSegment::new(hip, foot, limb * T::lit(1.3)));
        }
        Ok(out)
    }

    /// Multi-capsule with a grid spacing of `height / cells_per_height`.
    pub fn to_multi_capsule(&self, cells_per_height: usize) -> Result<MultiCapsule<T>> {
        if cells_per_height < 8 {
            return Err(Error::param("need at least 8 cells along the body height"));
        }
        let cell = self.height / T::from_usize_lossy(cells_per_height);
        Ok(MultiCapsule {
            segments: self.segments()?,
            blend: self.limb_thickness * self.height * T::lit(0.5),
            cell_size: cell,
            target_edge: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProxyKind<T> {
    Sphere {
        center: Vec3<T>,
        radius: T,
        subdivisions: usize,
    },
    Capsule {
        a: Vec3<T>,
        b: Vec3<T>,
        radius: T,
        /// Vertices around the axis.
        segments: usize,
        /// Latitude rings per hemisphere.
        rings: usize,
    },
    MultiCapsule(MultiCapsule<T>),
}

pub fn make_body_proxy<T: Real>(kind: &ProxyKind<T>) -> Result<Mesh<T>> {
    match kind {
        ProxyKind::Sphere { center, radius, subdivisions } => {
            if !(*radius > T::zero()) {
                return Err(Error::param(format!("sphere radius must be positive, got {radius}")));
            }
            if *subdivisions > 7 {
                return Err(Error::param("at most 7 sphere subdivisions"));
            }
            Ok(icosphere(*center, *radius, *subdivisions))
        }
        ProxyKind::Capsule { a, b, radius, segments, rings } => capsule(*a, *b, *radius, *segments, *rings),
        ProxyKind::MultiCapsule(mc) => multi_capsule(mc),
    }
}

fn icosphere<T: Real>(center: Vec3<T>, radius: T, subdivisions: usize) -> Mesh<T> {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let raw: [[f64; 3]; 12] = [
        [-1.0, g, 0.0], [1.0, g, 0.0], [-1.0, -g, 0.0], [1.0, -g, 0.0],
        [0.0, -1.0, g], [0.0, 1.0, g], [0.0, -1.0, -g], [0.0, 1.0, -g],
        [g, 0.0, -1.0], [g, 0.0, 1.0], [-g, 0.0, -1.0], [-g, 0.0, 1.0],
    ];
    let mut verts: Vec<[f64; 3]> = raw.iter().map(|&p| unit(p)).collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |i: usize, j: usize, verts: &mut Vec<[f64; 3]>| {
            *mids.entry((i.min(j), i.max(j))).or_insert_with(|| {
                let (p, q) = (verts[i], verts[j]);
                verts.push(unit([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts
        .into_iter()
        .map(|p| vec3::add(center, p.map(|x| T::lit(x) * radius)))
        .collect();
    Mesh { vertices, faces }
}

fn unit(p: [f64; 3]) -> [f64; 3] {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

/// Any unit vector perpendicular to `w`, with `u × v = w`.
fn frame<T: Real>(w: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let helper = if w[0].abs() < T::lit(0.9) { [T::one(), T::zero(), T::zero()] } else { [T::zero(), T::one(), T::zero()] };
    let u = vec3::normalize(vec3::cross(helper, w)).expect("helper not parallel");
    let v = vec3::cross(w, u);
    (u, v)
}

fn capsule<T: Real>(a: Vec3<T>, b: Vec3<T>, radius: T, segments: usize, rings: usize) -> Result<Mesh<T>> {
    if !(radius > T::zero()) {
        return Err(Error::param(format!("capsule radius must be positive, got {radius}")));
    }
    if segments < 3 || rings < 1 {
        return Err(Error::param("capsule needs at least 3 segments and 1 ring"));
    }
    let axis = vec3::sub(b, a);
    let len = vec3::norm(axis);
    let w = vec3::normalize(axis).unwrap_or([T::zero(), T::one(), T::zero()]);
    let (u, v) = frame(w);
    let pi = T::lit(std::f64::consts::PI);
    let half_pi = pi * T::half();
    let ring_step = radius * half_pi / T::from_usize_lossy(rings);
    let cyl = (len / ring_step).round().to_usize().unwrap_or(0);

    // Each ring is (centre on axis, signed axial offset, radial scale).
    let mut ring_defs: Vec<(Vec3<T>, T, T)> = Vec::new();
    for k in 1..=rings {
        let th = half_pi * T::from_usize_lossy(k) / T::from_usize_lossy(rings);
        ring_defs.push((a, -radius * th.cos(), radius * th.sin()));
    }
    for k in 1..cyl {
        let c = vec3::lerp(a, b, T::from_usize_lossy(k) / T::from_usize_lossy(cyl));
        ring_defs.push((c, T::zero(), radius));
    }
    for k in (1..=rings).rev() {
        let th = half_pi * T::from_usize_lossy(k) / T::from_usize_lossy(rings);
        ring_defs.push((b, radius * th.cos(), radius * th.sin()));
    }
    if len <= T::zero() {
        // Degenerate axis: drop the duplicated equator.
        ring_defs.remove(rings);
    }

    let mut vertices = vec![vec3::sub(a, vec3::scale(w, radius))];
    for &(c, off, rad) in &ring_defs {
        for j in 0..segments {
            let phi = T::two() * pi * T::from_usize_lossy(j) / T::from_usize_lossy(segments);
            let dir = vec3::add(vec3::scale(u, phi.cos()), vec3::scale(v, phi.sin()));
            vertices.push(vec3::add(vec3::add(c, vec3::scale(w, off)), vec3::scale(dir, rad)));
        }
    }
    vertices.push(vec3::add(b, vec3::scale(w, radius)));
    let top = vertices.len() - 1;
    let idx = |r: usize, j: usize| 1 + r * segments + j % segments;
    let mut faces = Vec::new();
    for j in 0..segments {
        faces.push([0, idx(0, j + 1), idx(0, j)]);
    }
    for r in 0..ring_defs.len() - 1 {
        for j in 0..segments {
            faces.push([idx(r, j), idx(r, j + 1), idx(r + 1, j + 1)]);
            faces.push([idx(r, j), idx(r + 1, j + 1), idx(r + 1, j)]);
        }
    }
    let last = ring_defs.len() - 1;
    for j in 0..segments {
        faces.push([top, idx(last, j), idx(last, j + 1)]);
    }
    Mesh::new(vertices, faces)
}

fn multi_capsule<T: Real>(mc: &MultiCapsule<T>) -> Result<Mesh<T>> {
    mc.check()?;
    let sdf = |p: Vec3<T>| mc.sdf(p);
    let (lo, hi) = mc.bounds();
    let raw = marching_tetrahedra(&sdf, lo, hi, mc.cell_size)?;
    let rep = validate(&raw);
    if !rep.is_clean_closed() || rep.euler_characteristic != 2 {
        return Err(Error::Mesh(format!("implicit surface is not a closed genus-0 shell:\n{rep}")));
    }
    let h = mc.cell_size * T::lit(1e-3);
    let reach = mc.cell_size;
    let project = move |p: Vec3<T>| project_to_level_set(&sdf, p, h, reach);
    let target = mc.target_edge.unwrap_or(mc.cell_size);
    let opts = RemeshOptions::new(target).with_iterations(6).with_projector(&project);
    remesh_with(&raw, &opts)
}

/// A few Newton steps along the numerical gradient toward `sdf = 0`; the input is kept
/// when the result lands farther than `reach` from it.
fn project_to_level_set<T: Real>(sdf: &dyn Fn(Vec3<T>) -> T, start: Vec3<T>, h: T, reach: T) -> Vec3<T> {
    let mut p = start;
    for _ in 0..3 {
        let f = sdf(p);
        let mut g = [T::zero(); 3];
        for k in 0..3 {
            let (mut a, mut b) = (p, p);
            a[k] += h;
            b[k] -= h;
            g[k] = (sdf(a) - sdf(b)) / (T::two() * h);
        }
        let g2 = vec3::norm2(g);
        if !(g2 > T::lit(1e-12)) {
            break;
        }
        p = vec3::sub(p, vec3::scale(g, f / g2));
    }
    if vec3::norm2(vec3::sub(p, start)) > reach * reach || !vec3::norm2(p).is_finite() {
        return start;
    }
    p
}

/// Triangulates `{sdf < 0}` over the box `[lo, hi]` on a grid of spacing `cell`,
/// splitting each cube into six tetrahedra around its main diagonal. Samples equal
/// to zero count as outside. Faces are oriented toward increasing `sdf`.
pub fn marching_tetrahedra<T: Real>(
    sdf: &dyn Fn(Vec3<T>) -> T,
    lo: Vec3<T>,
    hi: Vec3<T>,
    cell: T,
) -> Result<Mesh<T>> {
    if !(cell > T::zero()) {
        return Err(Error::param("grid spacing must be positive"));
    }
    let mut n = [0usize; 3];
    for k in 0..3 {
        if !(hi[k] > lo[k]) {
            return Err(Error::param("empty sampling box"));
        }
        n[k] = ((hi[k] - lo[k]) / cell).ceil().to_usize().unwrap_or(0).max(1);
    }
    if n.iter().product::<usize>() > 50_000_000 {
        return Err(Error::param("sampling grid too large"));
    }
    let (sx, sy) = (n[0] + 1, n[1] + 1);
    let gid = |i: usize, j: usize, k: usize| i + sx * (j + sy * k);
    let point = |i: usize, j: usize, k: usize| {
        [
            lo[0] + cell * T::from_usize_lossy(i),
            lo[1] + cell * T::from_usize_lossy(j),
            lo[2] + cell * T::from_usize_lossy(k),
        ]
    };
    let mut values = Vec::with_capacity(sx * sy * (n[2] + 1));
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                values.push(sdf(point(i, j, k)));
            }
        }
    }
    let corner = |c: usize| ((c & 1), (c >> 1) & 1, (c >> 2) & 1);
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let tets: Vec<[usize; 4]> = perms
        .iter()
        .map(|p| [0, 1 << p[0], (1 << p[0]) | (1 << p[1]), 7])
        .collect();

    let mut vertices: Vec<Vec3<T>> = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let lo_t = T::lit(1e-3);
    let hi_t = T::one() - lo_t;

    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let ids: [usize; 8] = std::array::from_fn(|c| {
                    let (a, b, d) = corner(c);
                    gid(i + a, j + b, k + d)
                });
                let pts: [Vec3<T>; 8] = std::array::from_fn(|c| {
                    let (a, b, d) = corner(c);
                    point(i + a, j + b, k + d)
                });
                for tet in &tets {
                    let inside: Vec<usize> = tet.iter().copied().filter(|&c| values[ids[c]] < T::zero()).collect();
                    if inside.is_empty() || inside.len() == 4 {
                        continue;
                    }
                    let outside: Vec<usize> = tet.iter().copied().filter(|c| !inside.contains(c)).collect();
                    let mut cut = |ci: usize, co: usize| {
                        let (gi, go) = (ids[ci], ids[co]);
                        *edge_vertex.entry((gi, go)).or_insert_with(|| {
                            let (fi, fo) = (values[gi], values[go]);
                            let t = (fi / (fi - fo)).max(lo_t).min(hi_t);
                            vertices.push(vec3::lerp(pts[ci], pts[co], t));
                            vertices.len() - 1
                        })
                    };
                    let polygon: Vec<usize> = match inside.len() {
                        1 => outside.iter().map(|&o| cut(inside[0], o)).collect(),
                        3 => inside.iter().map(|&i| cut(i, outside[0])).collect(),
                        _ => vec![
                            cut(inside[0], outside[0]),
                            cut(inside[0], outside[1]),
                            cut(inside[1], outside[1]),
                            cut(inside[1], outside[0]),
                        ],
                    };
                    let centroid = |cs: &[usize]| {
                        let mut acc = vec3::zero();
                        for &c in cs {
                            vec3::add_assign(&mut acc, pts[c]);
                        }
                        vec3::scale(acc, T::one() / T::from_usize_lossy(cs.len()))
                    };
                    let outward = vec3::sub(centroid(&outside), centroid(&inside));
                    for t in 1..polygon.len() - 1 {
                        let tri = [polygon[0], polygon[t], polygon[t + 1]];
                        let [p0, p1, p2] = tri.map(|v| vertices[v]);
                        let nrm = vec3::cross(vec3::sub(p1, p0), vec3::sub(p2, p0));
                        if vec3::dot(nrm, outward) < T::zero() {
                            faces.push([tri[0], tri[2], tri[1]]);
                        } else {
                            faces.push(tri);
                        }
                    }
                }
            }
        }
    }
    Mesh::new(vertices, faces)
}
