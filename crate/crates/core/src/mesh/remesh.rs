//! Isotropic incremental remeshing: split long edges, collapse short ones,
//! flip toward regular valence, relax tangentially.

use super::dynamic::{CollapseLimits, DynMesh};
use super::{Mesh, DEGENERATE_AREA};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec3::{self, Vec3};

pub struct RemeshOptions<'a, T> {
    pub target_edge_length: T,
    pub iterations: usize,
    /// Optional projection applied to new and relaxed vertices.
    pub projector: Option<&'a dyn Fn(Vec3<T>) -> Vec3<T>>,
}

impl<'a, T: Real> RemeshOptions<'a, T> {
    pub fn new(target_edge_length: T) -> Self {
        Self {
            target_edge_length,
            iterations: 6,
            projector: None,
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_projector(mut self, projector: &'a dyn Fn(Vec3<T>) -> Vec3<T>) -> Self {
        self.projector = Some(projector);
        self
    }
}

pub fn remesh<T: Real>(mesh: &Mesh<T>, target_edge_length: T) -> Result<Mesh<T>> {
    remesh_with(mesh, &RemeshOptions::new(target_edge_length))
}

pub fn remesh_with<T: Real>(mesh: &Mesh<T>, opts: &RemeshOptions<'_, T>) -> Result<Mesh<T>> {
    let target = opts.target_edge_length;
    if !(target > T::zero()) || !target.is_finite() {
        return Err(Error::param(format!("target edge length must be positive, got {target}")));
    }
    let report = super::validate(mesh);
    if !report.is_manifold || !report.is_oriented {
        return Err(Error::Mesh(format!("remeshing needs an oriented manifold:\n{report}")));
    }
    let mut dm = DynMesh::from_mesh(mesh)?;
    let project = |p: Vec3<T>| match opts.projector {
        Some(f) => f(p),
        None => p,
    };
    let hi = target * T::lit(4.0 / 3.0);
    let lo = target * T::lit(4.0 / 5.0);

    for _ in 0..opts.iterations {
        split_long_edges(&mut dm, hi, &project);
        collapse_short_edges(&mut dm, lo, hi);
        equalize_valences(&mut dm);
        tangential_relax(&mut dm, &project);
    }
    remove_degenerate_faces(&mut dm, target);
    Ok(dm.to_mesh())
}

fn split_long_edges<T: Real>(dm: &mut DynMesh<T>, hi: T, project: &dyn Fn(Vec3<T>) -> Vec3<T>) {
    for _ in 0..16 {
        let long: Vec<(usize, usize)> = dm
            .edges()
            .into_iter()
            .filter(|&(a, b)| dm.edge_length(a, b) > hi)
            .collect();
        if long.is_empty() {
            break;
        }
        for (a, b) in long {
            if dm.has_edge(a, b) && dm.edge_length(a, b) > hi {
                let mid = vec3::lerp(dm.pos[a], dm.pos[b], T::half());
                dm.split_edge(a, b, project(mid));
            }
        }
    }
}

fn collapse_short_edges<T: Real>(dm: &mut DynMesh<T>, lo: T, hi: T) {
    let limits = CollapseLimits {
        max_edge: Some(hi),
        min_normal_dot: T::lit(0.2),
        min_cross: T::lit(2.0 * DEGENERATE_AREA),
    };
    let short: Vec<(usize, usize)> = dm
        .edges()
        .into_iter()
        .filter(|&(a, b)| dm.edge_length(a, b) < lo)
        .collect();
    for (a, b) in short {
        if !dm.vert_alive[a] || !dm.vert_alive[b] || !dm.has_edge(a, b) {
            continue;
        }
        if dm.edge_length(a, b) >= lo {
            continue;
        }
        // Half-edge collapse: the surviving vertex keeps its position.
        if dm.can_collapse(a, b, dm.pos[b], &limits) {
            let p = dm.pos[b];
            dm.collapse(a, b, p);
        } else if dm.can_collapse(b, a, dm.pos[a], &limits) {
            let p = dm.pos[a];
            dm.collapse(b, a, p);
        }
    }
}

fn equalize_valences<T: Real>(dm: &mut DynMesh<T>) {
    let target = |dm: &DynMesh<T>, v: usize| if dm.is_boundary_vertex(v) { 4i64 } else { 6i64 };
    for (a, b) in dm.edges() {
        let (Some(f0), Some(f1)) = (dm.face_of(a, b), dm.face_of(b, a)) else {
            continue;
        };
        let c = dm.opposite(f0, a, b);
        let d = dm.opposite(f1, a, b);
        let val = |v: usize| dm.valence(v) as i64;
        let (va, vb, vc, vd) = (val(a), val(b), val(c), val(d));
        let (ta, tb, tc, td) = (target(dm, a), target(dm, b), target(dm, c), target(dm, d));
        let before = (va - ta).abs() + (vb - tb).abs() + (vc - tc).abs() + (vd - td).abs();
        let after = (va - 1 - ta).abs() + (vb - 1 - tb).abs() + (vc + 1 - tc).abs() + (vd + 1 - td).abs();
        if after < before && dm.can_flip(a, b, T::lit(0.5)) {
            dm.flip(a, b);
        }
    }
}

fn tangential_relax<T: Real>(dm: &mut DynMesh<T>, project: &dyn Fn(Vec3<T>) -> Vec3<T>) {
    let mut updates = Vec::new();
    for v in 0..dm.pos.len() {
        if !dm.vert_alive[v] || dm.is_boundary_vertex(v) {
            continue;
        }
        let nb = dm.neighbors(v);
        if nb.is_empty() {
            continue;
        }
        let mut q = vec3::zero();
        for &j in &nb {
            vec3::add_assign(&mut q, dm.pos[j]);
        }
        let q = vec3::scale(q, T::one() / T::from_usize_lossy(nb.len()));
        let n = dm.vertex_normal(v);
        let p = dm.pos[v];
        // Keep the normal component of p, take the tangential part of q.
        let moved = vec3::add(q, vec3::scale(n, vec3::dot(n, vec3::sub(p, q))));
        updates.push((v, project(moved)));
    }
    for (v, p) in updates {
        let old = dm.pos[v];
        dm.pos[v] = p;
        // Undo moves that would fold an incident face.
        let folds = dm.vfaces[v].iter().any(|&f| {
            let tri = dm.faces[f];
            let before = {
                let [a, b, c] = tri.map(|x| if x == v { old } else { dm.pos[x] });
                vec3::cross(vec3::sub(b, a), vec3::sub(c, a))
            };
            let after = dm.face_cross_of(tri);
            vec3::dot(before, after) <= T::zero()
        });
        if folds {
            dm.pos[v] = old;
        }
    }
}

/// Collapses the shortest edge of any face whose area fell below the degeneracy threshold.
fn remove_degenerate_faces<T: Real>(dm: &mut DynMesh<T>, target: T) {
    let limits = CollapseLimits {
        max_edge: Some(target * T::lit(2.0)),
        min_normal_dot: T::zero(),
        min_cross: T::lit(2.0 * DEGENERATE_AREA),
    };
    for _ in 0..4 {
        let mut any = false;
        for f in 0..dm.faces.len() {
            if !dm.face_alive[f] {
                continue;
            }
            let tri = dm.faces[f];
            if vec3::norm(dm.face_cross_of(tri)) >= T::lit(2.0 * DEGENERATE_AREA) {
                continue;
            }
            any = true;
            let mut edges = [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])];
            edges.sort_by(|x, y| {
                let (lx, ly) = (dm.edge_length(x.0, x.1), dm.edge_length(y.0, y.1));
                lx.partial_cmp(&ly).unwrap_or(std::cmp::Ordering::Equal)
            });
            for (a, b) in edges {
                if dm.can_collapse(a, b, dm.pos[b], &limits) {
                    let p = dm.pos[b];
                    dm.collapse(a, b, p);
                    break;
                }
                if dm.can_collapse(b, a, dm.pos[a], &limits) {
                    let p = dm.pos[a];
                    dm.collapse(b, a, p);
                    break;
                }
            }
        }
        if !any {
            break;
        }
    }
}
