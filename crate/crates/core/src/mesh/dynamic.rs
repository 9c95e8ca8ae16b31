//! Editable triangle mesh backing decimation and remeshing.
//!
//! Connectivity is a directed-edge map `(a, b) -> face`, which stays
//! consistent as long as every face is removed before its replacement is
//! inserted. Iteration never walks the hash map, so edits are deterministic.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;

use super::Mesh;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec3::{self, Vec3};

type EdgeMap = HashMap<(usize, usize), usize, BuildHasherDefault<DefaultHasher>>;

pub(crate) struct DynMesh<T> {
    pub pos: Vec<Vec3<T>>,
    pub vert_alive: Vec<bool>,
    pub faces: Vec<[usize; 3]>,
    pub face_alive: Vec<bool>,
    pub vfaces: Vec<Vec<usize>>,
    dedge: EdgeMap,
}

/// Geometric limits applied when testing a collapse.
#[derive(Clone, Copy)]
pub(crate) struct CollapseLimits<T> {
    /// Reject if any edge at the merged vertex would exceed this length.
    pub max_edge: Option<T>,
    /// Minimum cosine between a face's normal before and after the move.
    pub min_normal_dot: T,
    /// Minimum twice-area of every moved face.
    pub min_cross: T,
}

impl<T: Real> DynMesh<T> {
    pub fn from_mesh(mesh: &Mesh<T>) -> Result<Self> {
        let mut m = Self {
            pos: mesh.vertices.clone(),
            vert_alive: vec![true; mesh.num_vertices()],
            faces: Vec::with_capacity(mesh.num_faces() * 2),
            face_alive: Vec::with_capacity(mesh.num_faces() * 2),
            vfaces: vec![Vec::new(); mesh.num_vertices()],
            dedge: EdgeMap::default(),
        };
        for (fi, f) in mesh.faces.iter().enumerate() {
            for k in 0..3 {
                let e = (f[k], f[(k + 1) % 3]);
                if m.dedge.contains_key(&e) {
                    return Err(Error::Mesh(format!(
                        "face {fi}: directed edge {e:?} used twice (non-manifold or inconsistently oriented)"
                    )));
                }
                m.dedge.insert(e, fi);
            }
            m.faces.push(*f);
            m.face_alive.push(true);
            for &v in f {
                m.vfaces[v].push(fi);
            }
        }
        for (v, fs) in m.vfaces.iter().enumerate() {
            if fs.is_empty() {
                m.vert_alive[v] = false;
            }
        }
        Ok(m)
    }

    pub fn to_mesh(&self) -> Mesh<T> {
        let mut map = vec![usize::MAX; self.pos.len()];
        let mut vertices = Vec::new();
        for (v, &alive) in self.vert_alive.iter().enumerate() {
            if alive && !self.vfaces[v].is_empty() {
                map[v] = vertices.len();
                vertices.push(self.pos[v]);
            }
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &a)| a)
            .map(|(f, _)| f.map(|v| map[v]))
            .collect();
        Mesh { vertices, faces }
    }

    pub fn alive_vertex_count(&self) -> usize {
        self.vert_alive.iter().filter(|&&a| a).count()
    }

    pub fn face_of(&self, a: usize, b: usize) -> Option<usize> {
        self.dedge.get(&(a, b)).copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.face_of(a, b).is_some() || self.face_of(b, a).is_some()
    }

    pub fn opposite(&self, f: usize, a: usize, b: usize) -> usize {
        *self.faces[f]
            .iter()
            .find(|&&v| v != a && v != b)
            .expect("triangle has a third vertex")
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vfaces[v].iter().any(|&f| {
            let face = self.faces[f];
            let k = face.iter().position(|&x| x == v).expect("incident face");
            let next = face[(k + 1) % 3];
            let prev = face[(k + 2) % 3];
            self.face_of(next, v).is_none() || self.face_of(v, prev).is_none()
        })
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.vfaces[v]
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&x| x != v)
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    pub fn valence(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    /// Undirected alive edges in face order, each reported once.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (f, face) in self.faces.iter().enumerate() {
            if !self.face_alive[f] {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                if a < b || self.face_of(b, a).is_none() {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn edge_length(&self, a: usize, b: usize) -> T {
        vec3::dist(self.pos[a], self.pos[b])
    }

    pub fn face_cross_of(&self, tri: [usize; 3]) -> Vec3<T> {
        let [a, b, c] = tri.map(|v| self.pos[v]);
        vec3::cross(vec3::sub(b, a), vec3::sub(c, a))
    }

    /// Area-weighted unit normal at `v` (zero if undefined).
    pub fn vertex_normal(&self, v: usize) -> Vec3<T> {
        let mut acc = vec3::zero();
        for &f in &self.vfaces[v] {
            vec3::add_assign(&mut acc, self.face_cross_of(self.faces[f]));
        }
        vec3::normalize(acc).unwrap_or_else(vec3::zero)
    }

    pub fn add_vertex(&mut self, p: Vec3<T>) -> usize {
        self.pos.push(p);
        self.vert_alive.push(true);
        self.vfaces.push(Vec::new());
        self.pos.len() - 1
    }

    fn remove_face(&mut self, f: usize) {
        let face = self.faces[f];
        for k in 0..3 {
            self.dedge.remove(&(face[k], face[(k + 1) % 3]));
        }
        for &v in &face {
            let list = &mut self.vfaces[v];
            if let Some(i) = list.iter().position(|&x| x == f) {
                list.swap_remove(i);
            }
        }
        self.face_alive[f] = false;
    }

    /// Writes `tri` into slot `f` (or a new slot when `f` is `None`).
    fn insert_face(&mut self, f: Option<usize>, tri: [usize; 3]) -> usize {
        let f = match f {
            Some(f) => {
                self.faces[f] = tri;
                self.face_alive[f] = true;
                f
            }
            None => {
                self.faces.push(tri);
                self.face_alive.push(true);
                self.faces.len() - 1
            }
        };
        for k in 0..3 {
            let prev = self.dedge.insert((tri[k], tri[(k + 1) % 3]), f);
            debug_assert!(prev.is_none(), "directed edge reused by {tri:?}");
        }
        for &v in &tri {
            self.vfaces[v].push(f);
        }
        f
    }

    /// Splits edge `ab` at `p`; returns the new vertex.
    pub fn split_edge(&mut self, a: usize, b: usize, p: Vec3<T>) -> Option<usize> {
        let f0 = self.face_of(a, b);
        let f1 = self.face_of(b, a);
        if f0.is_none() && f1.is_none() {
            return None;
        }
        let m = self.add_vertex(p);
        if let Some(f0) = f0 {
            let c = self.opposite(f0, a, b);
            self.remove_face(f0);
            self.insert_face(Some(f0), [a, m, c]);
            self.insert_face(None, [m, b, c]);
        }
        if let Some(f1) = f1 {
            let d = self.opposite(f1, a, b);
            self.remove_face(f1);
            self.insert_face(Some(f1), [b, m, d]);
            self.insert_face(None, [m, a, d]);
        }
        Some(m)
    }

    /// Checks whether `a` can be merged into `b` placed at `p`.
    pub fn can_collapse(&self, a: usize, b: usize, p: Vec3<T>, limits: &CollapseLimits<T>) -> bool {
        if a == b || !self.vert_alive[a] || !self.vert_alive[b] {
            return false;
        }
        let (Some(f0), Some(f1)) = (self.face_of(a, b), self.face_of(b, a)) else {
            return false;
        };
        if self.is_boundary_vertex(a) || self.is_boundary_vertex(b) {
            return false;
        }
        let c = self.opposite(f0, a, b);
        let d = self.opposite(f1, a, b);
        if c == d {
            return false;
        }
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let common: Vec<usize> = na.iter().copied().filter(|x| nb.binary_search(x).is_ok()).collect();
        if common.len() != 2 || !common.contains(&c) || !common.contains(&d) {
            return false;
        }
        if self.valence(c) <= 3 || self.valence(d) <= 3 || na.len() + nb.len() - 4 < 3 {
            return false;
        }
        if let Some(max) = limits.max_edge {
            for &x in na.iter().chain(&nb) {
                if x != a && x != b && vec3::dist(p, self.pos[x]) > max {
                    return false;
                }
            }
        }
        for &f in self.vfaces[a].iter().chain(&self.vfaces[b]) {
            if f == f0 || f == f1 {
                continue;
            }
            let before = self.faces[f];
            let cross0 = self.face_cross_of(before);
            let [p0, p1, p2] = before.map(|x| if x == a || x == b { p } else { self.pos[x] });
            let cross1 = vec3::cross(vec3::sub(p1, p0), vec3::sub(p2, p0));
            let l1 = vec3::norm(cross1);
            if l1 < limits.min_cross {
                return false;
            }
            let l0 = vec3::norm(cross0);
            // Faces that were already degenerate carry no usable orientation.
            if l0 >= limits.min_cross && vec3::dot(cross0, cross1) < limits.min_normal_dot * l0 * l1 {
                return false;
            }
        }
        true
    }

    /// Merges `a` into `b` and moves `b` to `p`. Caller checks `can_collapse`.
    pub fn collapse(&mut self, a: usize, b: usize, p: Vec3<T>) {
        let f0 = self.face_of(a, b).expect("collapse edge");
        let f1 = self.face_of(b, a).expect("collapse edge");
        self.remove_face(f0);
        self.remove_face(f1);
        let fans: Vec<usize> = self.vfaces[a].clone();
        let mut rebuilt = Vec::with_capacity(fans.len());
        for &f in &fans {
            let tri = self.faces[f].map(|x| if x == a { b } else { x });
            self.remove_face(f);
            rebuilt.push((f, tri));
        }
        for (f, tri) in rebuilt {
            self.insert_face(Some(f), tri);
        }
        self.pos[b] = p;
        self.vert_alive[a] = false;
        self.vfaces[a].clear();
    }

    pub fn can_flip(&self, a: usize, b: usize, min_normal_dot: T) -> bool {
        let (Some(f0), Some(f1)) = (self.face_of(a, b), self.face_of(b, a)) else {
            return false;
        };
        let c = self.opposite(f0, a, b);
        let d = self.opposite(f1, a, b);
        if c == d || self.has_edge(c, d) {
            return false;
        }
        if self.valence(a) <= 3 || self.valence(b) <= 3 {
            return false;
        }
        let old = vec3::add(self.face_cross_of([a, b, c]), self.face_cross_of([b, a, d]));
        let n0 = self.face_cross_of([a, d, c]);
        let n1 = self.face_cross_of([d, b, c]);
        let lo = vec3::norm(old);
        for n in [n0, n1] {
            let l = vec3::norm(n);
            if l <= T::zero() || vec3::dot(n, old) < min_normal_dot * l * lo {
                return false;
            }
        }
        true
    }

    /// Replaces diagonal `ab` of the quad `a d b c` by `cd`.
    pub fn flip(&mut self, a: usize, b: usize) {
        let f0 = self.face_of(a, b).expect("flip edge");
        let f1 = self.face_of(b, a).expect("flip edge");
        let c = self.opposite(f0, a, b);
        let d = self.opposite(f1, a, b);
        self.remove_face(f0);
        self.remove_face(f1);
        self.insert_face(Some(f0), [a, d, c]);
        self.insert_face(Some(f1), [d, b, c]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{validate, ProxyKind, make_body_proxy};

    fn sphere() -> Mesh<f64> {
        make_body_proxy(&ProxyKind::Sphere {
            center: [0.0; 3],
            radius: 1.0,
            subdivisions: 2,
        })
        .unwrap()
    }

    fn limits() -> CollapseLimits<f64> {
        CollapseLimits {
            max_edge: None,
            min_normal_dot: 0.0,
            min_cross: 1e-12,
        }
    }

    #[test]
    fn split_keeps_closed_manifold() {
        let mut d = DynMesh::from_mesh(&sphere()).unwrap();
        let edges = d.edges();
        for &(a, b) in edges.iter().take(30) {
            let p = vec3::lerp(d.pos[a], d.pos[b], 0.5);
            d.split_edge(a, b, p).unwrap();
        }
        let m = d.to_mesh();
        let r = validate(&m);
        assert!(r.is_clean_closed(), "{r}");
        assert_eq!(r.euler_characteristic, 2);
    }

    #[test]
    fn collapse_and_flip_keep_topology() {
        let mut d = DynMesh::from_mesh(&sphere()).unwrap();
        let mut done = 0;
        for (a, b) in d.edges() {
            if d.has_edge(a, b) && d.can_collapse(a, b, d.pos[b], &limits()) {
                let p = d.pos[b];
                d.collapse(a, b, p);
                done += 1;
            }
            if done == 20 {
                break;
            }
        }
        assert_eq!(done, 20);
        let mut flips = 0;
        for (a, b) in d.edges() {
            if d.has_edge(a, b) && d.can_flip(a, b, 0.0) {
                d.flip(a, b);
                flips += 1;
            }
            if flips == 10 {
                break;
            }
        }
        let r = validate(&d.to_mesh());
        assert!(r.is_manifold && r.is_oriented, "{r}");
        assert_eq!(r.euler_characteristic, 2);
    }

    #[test]
    fn tetrahedron_refuses_collapse() {
        let m = Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
        )
        .unwrap();
        let d = DynMesh::from_mesh(&m).unwrap();
        for (a, b) in d.edges() {
            assert!(!d.can_collapse(a, b, d.pos[b], &limits()));
        }
    }

    #[test]
    fn inconsistent_orientation_is_rejected() {
        let m = Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        assert!(DynMesh::from_mesh(&m).is_err());
    }
}
