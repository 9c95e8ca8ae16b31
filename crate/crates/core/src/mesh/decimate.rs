//! Quadric-error edge-collapse decimation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::dynamic::{CollapseLimits, DynMesh};
use super::{Mesh, DEGENERATE_AREA};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec3::Vec3;

/// Fewest vertices a closed triangle mesh can have.
const MIN_VERTICES: usize = 4;

/// Symmetric 4x4 quadric stored as its upper triangle.
#[derive(Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn from_plane(n: [f64; 3], d: f64, w: f64) -> Self {
        let p = [n[0], n[1], n[2], d];
        let mut q = [0.0; 10];
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                q[k] = w * p[i] * p[j];
                k += 1;
            }
        }
        Quadric(q)
    }

    fn add(&self, o: &Quadric) -> Quadric {
        let mut q = self.0;
        for (a, b) in q.iter_mut().zip(&o.0) {
            *a += b;
        }
        Quadric(q)
    }

    fn eval(&self, v: [f64; 3]) -> f64 {
        let q = &self.0;
        let [x, y, z] = v;
        q[0] * x * x + 2.0 * q[1] * x * y + 2.0 * q[2] * x * z + 2.0 * q[3] * x
            + q[4] * y * y + 2.0 * q[5] * y * z + 2.0 * q[6] * y
            + q[7] * z * z + 2.0 * q[8] * z
            + q[9]
    }

    /// Minimizer of the quadric, if the 3x3 system is well conditioned.
    fn optimum(&self) -> Option<[f64; 3]> {
        let q = &self.0;
        let a = [[q[0], q[1], q[2]], [q[1], q[4], q[5]], [q[2], q[5], q[7]]];
        let b = [-q[3], -q[6], -q[8]];
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        let scale = a[0][0].abs() + a[1][1].abs() + a[2][2].abs();
        if det.abs() <= 1e-10 * scale.powi(3).max(f64::MIN_POSITIVE) {
            return None;
        }
        let solve = |col: usize| {
            let mut m = a;
            for r in 0..3 {
                m[r][col] = b[r];
            }
            (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
                / det
        };
        Some([solve(0), solve(1), solve(2)])
    }
}

struct Candidate {
    cost: f64,
    a: usize,
    b: usize,
    stamp: (u32, u32),
    target: [f64; 3],
}

impl PartialEq for Candidate {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        // Min-heap on cost, ties broken by vertex ids for determinism.
        o.cost
            .total_cmp(&self.cost)
            .then_with(|| (o.a, o.b).cmp(&(self.a, self.b)))
    }
}

fn to_f64<T: Real>(v: Vec3<T>) -> [f64; 3] {
    v.map(|x| x.to_f64_lossy())
}

fn best_position<T: Real>(q: &Quadric, pa: Vec3<T>, pb: Vec3<T>) -> ([f64; 3], f64) {
    let (a, b) = (to_f64(pa), to_f64(pb));
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
    let mut best = (mid, q.eval(mid));
    let mut consider = |p: [f64; 3]| {
        let c = q.eval(p);
        if c < best.1 {
            best = (p, c);
        }
    };
    consider(a);
    consider(b);
    if let Some(opt) = q.optimum() {
        // Keep the optimum near the edge so a bad solve cannot fling a vertex.
        let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        let off = ((opt[0] - mid[0]).powi(2) + (opt[1] - mid[1]).powi(2) + (opt[2] - mid[2]).powi(2)).sqrt();
        if off <= 2.0 * len {
            consider(opt);
        }
    }
    best
}

/// Collapses edges in order of quadric error until at most `target_vertices` remain.
pub fn decimate<T: Real>(mesh: &Mesh<T>, target_vertices: usize) -> Result<Mesh<T>> {
    if target_vertices < MIN_VERTICES {
        return Err(Error::param(format!(
            "decimation target {target_vertices} is below the minimum of {MIN_VERTICES} vertices"
        )));
    }
    if mesh.num_vertices() <= target_vertices {
        return Ok(mesh.clone());
    }
    let mut dm = DynMesh::from_mesh(mesh)?;

    let mut quadrics = vec![Quadric::default(); dm.pos.len()];
    for f in 0..dm.faces.len() {
        let tri = dm.faces[f];
        let cross = to_f64(dm.face_cross_of(tri));
        let len = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
        if len <= 2.0 * DEGENERATE_AREA {
            continue;
        }
        let n = [cross[0] / len, cross[1] / len, cross[2] / len];
        let p0 = to_f64(dm.pos[tri[0]]);
        let d = -(n[0] * p0[0] + n[1] * p0[1] + n[2] * p0[2]);
        let q = Quadric::from_plane(n, d, len / 2.0);
        for &v in &tri {
            quadrics[v] = quadrics[v].add(&q);
        }
    }

    let mut stamps = vec![0u32; dm.pos.len()];
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Candidate>, dm: &DynMesh<T>, q: &[Quadric], st: &[u32], a: usize, b: usize| {
        let (a, b) = (a.min(b), a.max(b));
        let sum = q[a].add(&q[b]);
        let (target, cost) = best_position(&sum, dm.pos[a], dm.pos[b]);
        heap.push(Candidate {
            cost,
            a,
            b,
            stamp: (st[a], st[b]),
            target,
        });
    };
    for (a, b) in dm.edges() {
        push(&mut heap, &dm, &quadrics, &stamps, a, b);
    }

    let limits = CollapseLimits {
        max_edge: None,
        min_normal_dot: T::lit(0.2),
        min_cross: T::lit(2.0 * DEGENERATE_AREA),
    };
    let mut alive = dm.alive_vertex_count();
    while alive > target_vertices {
        let Some(c) = heap.pop() else {
            return Err(Error::Mesh(format!(
                "decimation stalled at {alive} vertices (target {target_vertices})"
            )));
        };
        if !dm.vert_alive[c.a] || !dm.vert_alive[c.b] || (stamps[c.a], stamps[c.b]) != c.stamp {
            continue;
        }
        if !dm.has_edge(c.a, c.b) {
            continue;
        }
        let p = c.target.map(T::lit);
        let (from, to) = if dm.can_collapse(c.a, c.b, p, &limits) {
            (c.a, c.b)
        } else if dm.can_collapse(c.b, c.a, p, &limits) {
            (c.b, c.a)
        } else {
            continue;
        };
        dm.collapse(from, to, p);
        quadrics[to] = quadrics[to].add(&quadrics[from]);
        stamps[to] += 1;
        alive -= 1;
        for n in dm.neighbors(to) {
            push(&mut heap, &dm, &quadrics, &stamps, to, n);
        }
    }
    Ok(dm.to_mesh())
}
