use super::camera::{mat_t_vec, mat_vec, Camera};
use super::normal_map::NormalMap;
use crate::error::{Error, Result};
use crate::mesh::regularize::accumulate_cross_grad;
use crate::mesh::{vertex_normals, Adjacency, Mesh, NO_FACE};
use crate::scalar::{sigmoid, Real};
use crate::vec3::{self, Vec3};

const NONE: usize = usize::MAX;
/// Soft coverage is evaluated within this many softness widths of a contour.
const BAND_WIDTHS: f64 = 8.0;
/// Sample offset, in pixels, used to decide whether a contour edge borders empty space.
const OUTER_PROBE: f64 = 0.75;

/// Topology shared by every render of meshes with the same faces.
#[derive(Debug, Clone)]
pub struct Scene {
    adjacency: Adjacency,
    num_vertices: usize,
    num_faces: usize,
}

impl Scene {
    pub fn new<T: Real>(mesh: &Mesh<T>) -> Self {
        Self {
            adjacency: Adjacency::build(mesh),
            num_vertices: mesh.num_vertices(),
            num_faces: mesh.num_faces(),
        }
    }

    fn check<T: Real>(&self, mesh: &Mesh<T>) -> Result<()> {
        if mesh.num_vertices() != self.num_vertices || mesh.num_faces() != self.num_faces {
            return Err(Error::shape(
                format!("{} vertices / {} faces", self.num_vertices, self.num_faces),
                format!("{} vertices / {} faces", mesh.num_vertices(), mesh.num_faces()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Contour {
    a: usize,
    b: usize,
    /// Borders uncovered pixels, so it may soften covered pixels too.
    outer: bool,
}

/// Result of a forward render with what the backward pass needs.
#[derive(Debug, Clone)]
pub struct Frame<T> {
    pub camera: Camera<T>,
    pub softness: T,
    pub map: NormalMap<T>,
    rot: [[T; 3]; 3],
    screen: Vec<[T; 2]>,
    vnormals: Vec<Vec3<T>>,
    vlens: Vec<T>,
    face_at: Vec<usize>,
    bary: Vec<[T; 3]>,
    contours: Vec<Contour>,
    edge_at: Vec<usize>,
}

/// Per-vertex gradient of a loss on the rendered buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGradients<T> {
    pub vertices: Vec<Vec3<T>>,
}

#[inline]
fn edge_fn<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Partial derivatives of `edge_fn(a, b, c)` with respect to `a`, `b` and `c`.
#[inline]
fn edge_fn_grad<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> [[T; 2]; 3] {
    [
        [b[1] - c[1], c[0] - b[0]],
        [c[1] - a[1], a[0] - c[0]],
        [a[1] - b[1], b[0] - a[0]],
    ]
}

/// Distance from `p` to segment `ab` in the plane, with the clamped parameter.
#[inline]
fn segment_distance<T: Real>(p: [T; 2], a: [T; 2], b: [T; 2]) -> (T, T) {
    let e = [b[0] - a[0], b[1] - a[1]];
    let l2 = e[0] * e[0] + e[1] * e[1];
    let t = if l2 > T::zero() {
        (((p[0] - a[0]) * e[0] + (p[1] - a[1]) * e[1]) / l2).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    let q = [a[0] + e[0] * t, a[1] + e[1] * t];
    (((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt(), t)
}

pub fn render<T: Real>(scene: &Scene, mesh: &Mesh<T>, camera: &Camera<T>, softness: T) -> Result<Frame<T>> {
    camera.check()?;
    scene.check(mesh)?;
    if !(softness >= T::zero()) || !softness.is_finite() {
        return Err(Error::param(format!("softness must be non-negative, got {softness}")));
    }
    let (h, w) = (camera.height, camera.width);
    let rot = camera.rotation();
    let mut screen = Vec::with_capacity(mesh.num_vertices());
    let mut depth = Vec::with_capacity(mesh.num_vertices());
    for &v in &mesh.vertices {
        let (s, z) = camera.project_with(&rot, v);
        screen.push(s);
        depth.push(z);
    }
    let (vnormals, vlens) = vertex_normals(mesh);
    let front: Vec<bool> = mesh
        .faces
        .iter()
        .map(|f| edge_fn(screen[f[0]], screen[f[1]], screen[f[2]]) > T::zero())
        .collect();

    let mut zbuf = vec![T::neg_infinity(); h * w];
    let mut face_at = vec![NONE; h * w];
    let mut bary = vec![[T::zero(); 3]; h * w];
    for (f, tri) in mesh.faces.iter().enumerate() {
        if !front[f] {
            continue;
        }
        let [p0, p1, p2] = tri.map(|v| screen[v]);
        let area = edge_fn(p0, p1, p2);
        let lo = [p0[0].min(p1[0]).min(p2[0]), p0[1].min(p1[1]).min(p2[1])];
        let hi = [p0[0].max(p1[0]).max(p2[0]), p0[1].max(p1[1]).max(p2[1])];
        let Some((rows, cols)) = camera.pixel_span(lo, hi) else {
            continue;
        };
        for r in rows {
            for c in cols.clone() {
                let p = camera.pixel_center(r, c);
                let e = [edge_fn(p1, p2, p), edge_fn(p2, p0, p), edge_fn(p0, p1, p)];
                if e.iter().any(|&x| x < T::zero()) {
                    continue;
                }
                let b = e.map(|x| x / area);
                let z = b[0] * depth[tri[0]] + b[1] * depth[tri[1]] + b[2] * depth[tri[2]];
                let i = r * w + c;
                if z > zbuf[i] {
                    zbuf[i] = z;
                    face_at[i] = f;
                    bary[i] = b;
                }
            }
        }
    }

    let mut map = NormalMap::background(h, w);
    for i in 0..h * w {
        let f = face_at[i];
        if f == NONE {
            continue;
        }
        let px = &mut map.data[i * 4..i * 4 + 4];
        if let Some(n) = vec3::normalize(mat_vec(&rot, interpolate(&vnormals, mesh.faces[f], bary[i]))) {
            for k in 0..3 {
                px[k] = (n[k] + T::one()) * T::half();
            }
        }
        px[3] = T::one();
    }

    let mut frame = Frame {
        camera: *camera,
        softness,
        map,
        rot,
        screen,
        vnormals,
        vlens,
        face_at,
        bary,
        contours: Vec::new(),
        edge_at: vec![NONE; h * w],
    };
    if softness > T::zero() {
        frame.soften(scene, mesh, &front);
    }
    Ok(frame)
}

#[inline]
fn interpolate<T: Real>(normals: &[Vec3<T>], tri: [usize; 3], b: [T; 3]) -> Vec3<T> {
    let mut acc = vec3::zero();
    for k in 0..3 {
        vec3::add_assign(&mut acc, vec3::scale(normals[tri[k]], b[k]));
    }
    acc
}

impl<T: Real> Frame<T> {
    #[inline]
    fn covered(&self, r: usize, c: usize) -> bool {
        self.face_at[r * self.camera.width + c] != NONE
    }

    /// Replaces hard alpha near contour edges by a sigmoid of the pixel-to-edge distance.
    fn soften(&mut self, scene: &Scene, mesh: &Mesh<T>, front: &[bool]) {
        let cam = self.camera;
        for e in &scene.adjacency.edges {
            let [a, b] = e.verts;
            let owner = match (e.face_count, e.faces) {
                (1, [f, _]) if front[f] => f,
                (2, [f, g]) if front[f] != front[g] => {
                    if front[f] {
                        f
                    } else {
                        g
                    }
                }
                _ => continue,
            };
            debug_assert_ne!(owner, NO_FACE);
            let c = *mesh.faces[owner].iter().find(|&&v| v != a && v != b).expect("third vertex");
            let (pa, pb, pc) = (self.screen[a], self.screen[b], self.screen[c]);
            let ed = [pb[0] - pa[0], pb[1] - pa[1]];
            let len = (ed[0] * ed[0] + ed[1] * ed[1]).sqrt();
            if !(len > T::zero()) {
                continue;
            }
            let mut n = [-ed[1] / len, ed[0] / len];
            if n[0] * (pc[0] - pa[0]) + n[1] * (pc[1] - pa[1]) > T::zero() {
                n = [-n[0], -n[1]];
            }
            let probe = T::lit(OUTER_PROBE);
            let outer = [0.25, 0.5, 0.75].iter().any(|&t| {
                let t = T::lit(t);
                let q = [pa[0] + ed[0] * t + n[0] * probe, pa[1] + ed[1] * t + n[1] * probe];
                match cam.pixel_at(q) {
                    Some((r, col)) => !self.covered(r, col),
                    None => true,
                }
            });
            self.contours.push(Contour { a, b, outer });
        }

        let (h, w) = (cam.height, cam.width);
        let band = self.softness * T::lit(BAND_WIDTHS);
        let mut best = vec![band; h * w];
        for (k, ct) in self.contours.iter().enumerate() {
            let (pa, pb) = (self.screen[ct.a], self.screen[ct.b]);
            let lo = [pa[0].min(pb[0]) - band, pa[1].min(pb[1]) - band];
            let hi = [pa[0].max(pb[0]) + band, pa[1].max(pb[1]) + band];
            let Some((rows, cols)) = cam.pixel_span(lo, hi) else {
                continue;
            };
            for r in rows {
                for c in cols.clone() {
                    let i = r * w + c;
                    if self.face_at[i] != NONE && !ct.outer {
                        continue;
                    }
                    let (d, _) = segment_distance(cam.pixel_center(r, c), pa, pb);
                    if d < best[i] {
                        best[i] = d;
                        self.edge_at[i] = k;
                    }
                }
            }
        }
        for i in 0..h * w {
            if self.edge_at[i] == NONE {
                continue;
            }
            let s = if self.face_at[i] != NONE { best[i] } else { -best[i] };
            self.map.data[i * 4 + 3] = sigmoid(s / self.softness);
        }
    }

    /// Gradient of a loss with respect to the vertices, given its gradient with
    /// respect to every channel of [`Frame::map`].
    pub fn backward(&self, mesh: &Mesh<T>, upstream: &NormalMap<T>) -> Result<Vec<Vec3<T>>> {
        self.map.same_shape(upstream)?;
        if mesh.num_vertices() != self.screen.len() {
            return Err(Error::shape(format!("{} vertices", self.screen.len()), mesh.num_vertices()));
        }
        let cam = &self.camera;
        let w = cam.width;
        let nv = mesh.num_vertices();
        let mut dscreen = vec![[T::zero(); 2]; nv];
        let mut dnormal = vec![vec3::zero::<T>(); nv];

        for i in 0..self.face_at.len() {
            let g = &upstream.data[i * 4..i * 4 + 4];
            let f = self.face_at[i];
            if f != NONE && (g[0] != T::zero() || g[1] != T::zero() || g[2] != T::zero()) {
                let tri = mesh.faces[f];
                let b = self.bary[i];
                let m = mat_vec(&self.rot, interpolate(&self.vnormals, tri, b));
                let len = vec3::norm(m);
                if len > T::zero() {
                    let n = vec3::scale(m, T::one() / len);
                    let dn = [g[0], g[1], g[2]].map(|x| x * T::half());
                    let dw = mat_t_vec(&self.rot, vec3::normalize_backward(n, len, dn));
                    let mut db = [T::zero(); 3];
                    for k in 0..3 {
                        vec3::add_assign(&mut dnormal[tri[k]], vec3::scale(dw, b[k]));
                        db[k] = vec3::dot(self.vnormals[tri[k]], dw);
                    }
                    self.bary_backward(tri, cam.pixel_center(i / w, i % w), b, db, &mut dscreen);
                }
            }
            let k = self.edge_at[i];
            if k != NONE && g[3] != T::zero() {
                let ct = self.contours[k];
                let (pa, pb) = (self.screen[ct.a], self.screen[ct.b]);
                let p = cam.pixel_center(i / w, i % w);
                let (d, t) = segment_distance(p, pa, pb);
                if d > T::zero() {
                    let q = [pa[0] + (pb[0] - pa[0]) * t, pa[1] + (pb[1] - pa[1]) * t];
                    let u = [(p[0] - q[0]) / d, (p[1] - q[1]) / d];
                    let alpha = self.map.data[i * 4 + 3];
                    let sign = if f != NONE { T::one() } else { -T::one() };
                    let dd = g[3] * sign * alpha * (T::one() - alpha) / self.softness;
                    for j in 0..2 {
                        dscreen[ct.a][j] -= dd * u[j] * (T::one() - t);
                        dscreen[ct.b][j] -= dd * u[j] * t;
                    }
                }
            }
        }

        let [hx, hy] = cam.half_extent();
        let jx = vec3::scale(self.rot[0], hx * cam.scale);
        let jy = vec3::scale(self.rot[1], hy * cam.scale);
        let mut grad: Vec<Vec3<T>> = dscreen
            .iter()
            .map(|d| vec3::add(vec3::scale(jx, d[0]), vec3::scale(jy, d[1])))
            .collect();

        let du: Vec<Vec3<T>> = (0..nv)
            .map(|v| {
                if self.vlens[v] > T::zero() && dnormal[v] != vec3::zero() {
                    vec3::normalize_backward(self.vnormals[v], self.vlens[v], dnormal[v])
                } else {
                    vec3::zero()
                }
            })
            .collect();
        for (f, tri) in mesh.faces.iter().enumerate() {
            let g = vec3::add(vec3::add(du[tri[0]], du[tri[1]]), du[tri[2]]);
            if g != vec3::zero() {
                accumulate_cross_grad(mesh, f, g, &mut grad);
            }
        }
        Ok(grad)
    }

    fn bary_backward(&self, tri: [usize; 3], p: [T; 2], b: [T; 3], db: [T; 3], dscreen: &mut [[T; 2]]) {
        let pts = tri.map(|v| self.screen[v]);
        let area = edge_fn(pts[0], pts[1], pts[2]);
        let s = db[0] * b[0] + db[1] * b[1] + db[2] * b[2];
        let ga = edge_fn_grad(pts[0], pts[1], pts[2]);
        // b_k = E(P_{k+1}, P_{k+2}, p) / A
        for k in 0..3 {
            let (i1, i2) = ((k + 1) % 3, (k + 2) % 3);
            let ge = edge_fn_grad(pts[i1], pts[i2], p);
            for j in 0..2 {
                dscreen[tri[i1]][j] += db[k] * ge[0][j] / area;
                dscreen[tri[i2]][j] += db[k] * ge[1][j] / area;
            }
        }
        for k in 0..3 {
            for j in 0..2 {
                dscreen[tri[k]][j] -= s * ga[k][j] / area;
            }
        }
    }

    /// Index of the face seen at each pixel, if any.
    pub fn face_at(&self, row: usize, col: usize) -> Option<usize> {
        let f = self.face_at[row * self.camera.width + col];
        (f != NONE).then_some(f)
    }
}

pub fn rasterize<T: Real>(mesh: &Mesh<T>, camera: &Camera<T>, softness: T) -> Result<NormalMap<T>> {
    Ok(render(&Scene::new(mesh), mesh, camera, softness)?.map)
}

pub fn rasterize_backward<T: Real>(
    mesh: &Mesh<T>,
    camera: &Camera<T>,
    softness: T,
    upstream: &NormalMap<T>,
) -> Result<RasterGradients<T>> {
    let frame = render(&Scene::new(mesh), mesh, camera, softness)?;
    Ok(RasterGradients {
        vertices: frame.backward(mesh, upstream)?,
    })
}
