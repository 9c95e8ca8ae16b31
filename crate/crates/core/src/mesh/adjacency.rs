use super::Mesh;
use crate::scalar::Real;

pub const NO_FACE: usize = usize::MAX;

/// One undirected edge with up to two incident faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeRecord {
    pub verts: [usize; 2],
    /// Incident faces; `NO_FACE` marks a missing side.
    pub faces: [usize; 2],
    /// Total number of incident faces, which may exceed 2 on non-manifold input.
    pub face_count: usize,
}

impl EdgeRecord {
    pub fn is_boundary(&self) -> bool {
        self.face_count == 1
    }

    pub fn is_interior(&self) -> bool {
        self.face_count == 2
    }
}

/// Vertex and edge connectivity of a mesh.
#[derive(Debug, Clone)]
pub struct Adjacency {
    /// Sorted neighbor lists.
    pub neighbors: Vec<Vec<usize>>,
    pub edges: Vec<EdgeRecord>,
    /// Pairs of faces sharing an interior edge, in edge order.
    pub face_pairs: Vec<(usize, usize)>,
    /// For each face, the edge index of its three edges `(f[k], f[k+1])`.
    pub face_edges: Vec<[usize; 3]>,
}

impl Adjacency {
    pub fn build<T: Real>(mesh: &Mesh<T>) -> Self {
        let nv = mesh.num_vertices();
        // (min, max, face, corner)
        let mut half: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(mesh.faces.len() * 3);
        for (fi, f) in mesh.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                half.push((a.min(b), a.max(b), fi, k));
            }
        }
        half.sort_unstable();

        let mut edges: Vec<EdgeRecord> = Vec::new();
        let mut face_edges = vec![[usize::MAX; 3]; mesh.faces.len()];
        let mut i = 0;
        while i < half.len() {
            let (a, b) = (half[i].0, half[i].1);
            let mut rec = EdgeRecord {
                verts: [a, b],
                faces: [NO_FACE; 2],
                face_count: 0,
            };
            let ei = edges.len();
            while i < half.len() && half[i].0 == a && half[i].1 == b {
                let (_, _, f, k) = half[i];
                if rec.face_count < 2 {
                    rec.faces[rec.face_count] = f;
                }
                rec.face_count += 1;
                face_edges[f][k] = ei;
                i += 1;
            }
            edges.push(rec);
        }

        let mut neighbors = vec![Vec::new(); nv];
        for e in &edges {
            neighbors[e.verts[0]].push(e.verts[1]);
            neighbors[e.verts[1]].push(e.verts[0]);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }

        let face_pairs = edges
            .iter()
            .filter(|e| e.is_interior())
            .map(|e| (e.faces[0], e.faces[1]))
            .collect();

        Self {
            neighbors,
            edges,
            face_pairs,
            face_edges,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn valence(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }
}
