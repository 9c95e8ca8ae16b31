use std::collections::HashMap;
use std::fmt;

use super::{Adjacency, Mesh, DEGENERATE_AREA};
use crate::scalar::Real;

/// Result of an exhaustive topology and geometry scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshValidityReport {
    pub is_manifold: bool,
    /// Every interior edge is traversed in opposite directions by its two faces.
    pub is_oriented: bool,
    pub boundary_edge_count: usize,
    pub non_manifold_edge_count: usize,
    pub non_manifold_vertex_count: usize,
    pub duplicate_face_count: usize,
    pub degenerate_face_count: usize,
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_faces: usize,
    pub euler_characteristic: i64,
}

impl MeshValidityReport {
    /// Closed, oriented 2-manifold without degenerate faces.
    pub fn is_clean_closed(&self) -> bool {
        self.is_manifold
            && self.is_oriented
            && self.boundary_edge_count == 0
            && self.degenerate_face_count == 0
    }
}

impl fmt::Display for MeshValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vertices            {}", self.num_vertices)?;
        writeln!(f, "edges               {}", self.num_edges)?;
        writeln!(f, "faces               {}", self.num_faces)?;
        writeln!(f, "euler               {}", self.euler_characteristic)?;
        writeln!(f, "manifold            {}", self.is_manifold)?;
        writeln!(f, "oriented            {}", self.is_oriented)?;
        writeln!(f, "boundary edges      {}", self.boundary_edge_count)?;
        writeln!(f, "non-manifold edges  {}", self.non_manifold_edge_count)?;
        writeln!(f, "non-manifold verts  {}", self.non_manifold_vertex_count)?;
        writeln!(f, "duplicate faces     {}", self.duplicate_face_count)?;
        write!(f, "degenerate faces    {}", self.degenerate_face_count)
    }
}

/// Scans the mesh. Never fails; problems are reported in the returned fields.
pub fn validate<T: Real>(mesh: &Mesh<T>) -> MeshValidityReport {
    let adj = Adjacency::build(mesh);

    let boundary_edge_count = adj.edges.iter().filter(|e| e.face_count == 1).count();
    let non_manifold_edge_count = adj.edges.iter().filter(|e| e.face_count > 2).count();

    let mut is_oriented = true;
    for e in adj.edges.iter().filter(|e| e.is_interior()) {
        let [a, b] = e.verts;
        let dir = |f: usize| {
            let face = mesh.faces[f];
            (0..3).any(|k| face[k] == a && face[(k + 1) % 3] == b)
        };
        if dir(e.faces[0]) == dir(e.faces[1]) {
            is_oriented = false;
            break;
        }
    }

    let mut seen: HashMap<[usize; 3], usize> = HashMap::new();
    for f in &mesh.faces {
        let mut key = *f;
        key.sort_unstable();
        *seen.entry(key).or_default() += 1;
    }
    let duplicate_face_count: usize = seen.values().map(|&c| c - 1).sum();

    let non_manifold_vertex_count = count_non_manifold_vertices(mesh);

    let degenerate_face_count = (0..mesh.num_faces())
        .filter(|&f| mesh.face_area(f) < T::lit(DEGENERATE_AREA))
        .count();

    let num_vertices = mesh.num_vertices();
    let num_edges = adj.num_edges();
    let num_faces = mesh.num_faces();

    MeshValidityReport {
        is_manifold: non_manifold_edge_count == 0
            && non_manifold_vertex_count == 0
            && duplicate_face_count == 0,
        is_oriented,
        boundary_edge_count,
        non_manifold_edge_count,
        non_manifold_vertex_count,
        duplicate_face_count,
        degenerate_face_count,
        num_vertices,
        num_edges,
        num_faces,
        euler_characteristic: num_vertices as i64 - num_edges as i64 + num_faces as i64,
    }
}

/// A vertex is manifold when its incident faces form a single edge-connected fan.
fn count_non_manifold_vertices<T: Real>(mesh: &Mesh<T>) -> usize {
    let mut vfaces = vec![Vec::new(); mesh.num_vertices()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        for &v in f {
            vfaces[v].push(fi);
        }
    }
    let mut bad = 0;
    for (v, faces) in vfaces.iter().enumerate() {
        if faces.len() <= 1 {
            continue;
        }
        // Union faces that share an edge through `v`.
        let mut parent: Vec<usize> = (0..faces.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            let mut j = i;
            while p[j] != r {
                let next = p[j];
                p[j] = r;
                j = next;
            }
            r
        }
        let mut first_by_other: HashMap<usize, usize> = HashMap::new();
        for (i, &f) in faces.iter().enumerate() {
            for &o in mesh.faces[f].iter().filter(|&&o| o != v) {
                match first_by_other.get(&o) {
                    Some(&j) => {
                        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                        parent[ri] = rj;
                    }
                    None => {
                        first_by_other.insert(o, i);
                    }
                }
            }
        }
        let roots = (0..faces.len())
            .filter(|&i| find(&mut parent, i) == i)
            .count();
        if roots > 1 {
            bad += 1;
        }
    }
    bad
}
