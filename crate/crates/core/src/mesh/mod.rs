//! Indexed triangle meshes, connectivity, regularizers and topology editing.

mod adjacency;
mod decimate;
mod dynamic;
mod obj;
mod proxy;
pub(crate) mod regularize;
mod remesh;
mod validate;

pub use adjacency::{Adjacency, EdgeRecord, NO_FACE};
pub use decimate::decimate;
pub use obj::{read_obj, write_obj, parse_obj, format_obj};
pub use proxy::{
    make_body_proxy, marching_tetrahedra, BodyPose, CapsuleSegment, MultiCapsule, ProxyKind,
};
pub use regularize::{
    differential_coords, face_normals, laplacian_loss, normal_consistency_loss, vertex_normals,
    DEGENERATE_AREA,
};
pub use remesh::{remesh, remesh_with, RemeshOptions};
pub use validate::{validate, MeshValidityReport};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec3::{self, Vec3};

/// Indexed triangle mesh. Faces are counter-clockwise when seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<[usize; 3]>,
}

impl<T: Real> Default for Mesh<T> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<T: Real> Mesh<T> {
    /// Builds a mesh, checking face indices are in range and distinct per face.
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::Mesh(format!("face {fi} references a vertex >= {n}")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Mesh(format!("face {fi} repeats a vertex: {f:?}")));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            faces: Vec::new(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Unique undirected edges, each as `(min, max)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| (f[k], f[(k + 1) % 3])))
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn mean_edge_length(&self) -> T {
        let edges = self.edges();
        if edges.is_empty() {
            return T::zero();
        }
        let sum: T = edges
            .iter()
            .map(|&(a, b)| vec3::dist(self.vertices[a], self.vertices[b]))
            .sum();
        sum / T::from_usize_lossy(edges.len())
    }

    /// Axis-aligned bounds `(min, max)`; `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Some((lo, hi))
    }

    pub fn bbox_diagonal(&self) -> T {
        self.bounds()
            .map(|(lo, hi)| vec3::dist(lo, hi))
            .unwrap_or_else(T::zero)
    }

    pub fn face_positions(&self, f: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Twice the face area vector: `(b - a) × (c - a)`.
    pub fn face_cross(&self, f: usize) -> Vec3<T> {
        let [a, b, c] = self.face_positions(f);
        vec3::cross(vec3::sub(b, a), vec3::sub(c, a))
    }

    pub fn face_area(&self, f: usize) -> T {
        vec3::norm(self.face_cross(f)) * T::half()
    }

    pub fn translated(&self, t: Vec3<T>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| vec3::add(v, t)).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| vec3::scale(v, s)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Rotates about the vertical (y) axis by `deg` degrees, right-handed.
    pub fn rotated_about_vertical(&self, deg: T) -> Self {
        let (s, c) = crate::scalar::sin_cos_deg(deg);
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|v| [c * v[0] + s * v[2], v[1], -s * v[0] + c * v[2]])
                .collect(),
            faces: self.faces.clone(),
        }
    }

    /// Converts the scalar type of the vertex positions.
    pub fn cast<U: Real>(&self) -> Mesh<U> {
        Mesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| v.map(crate::scalar::cast))
                .collect(),
            faces: self.faces.clone(),
        }
    }

    /// Drops vertices not referenced by any face and renumbers the rest.
    pub fn compacted(&self) -> Self {
        let mut map = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let faces = self
            .faces
            .iter()
            .map(|f| {
                f.map(|v| {
                    if map[v] == usize::MAX {
                        map[v] = vertices.len();
                        vertices.push(self.vertices[v]);
                    }
                    map[v]
                })
            })
            .collect();
        Self { vertices, faces }
    }
}
