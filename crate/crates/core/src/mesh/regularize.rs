//! Face/vertex normals and the two geometric regularizers with exact gradients.

use super::{Adjacency, Mesh};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vec3::{self, Vec3};

/// Faces with area below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Unit face normals; degenerate faces get the zero vector.
pub fn face_normals<T: Real>(mesh: &Mesh<T>) -> Vec<Vec3<T>> {
    (0..mesh.num_faces())
        .map(|f| {
            let c = mesh.face_cross(f);
            let len = vec3::norm(c);
            if len * T::half() < T::lit(DEGENERATE_AREA) {
                vec3::zero()
            } else {
                c.map(|x| x / len)
            }
        })
        .collect()
}

/// Area-weighted vertex normals. Returns `(unit normals, unnormalized lengths)`;
/// vertices without a usable incident face get a zero normal and zero length.
pub fn vertex_normals<T: Real>(mesh: &Mesh<T>) -> (Vec<Vec3<T>>, Vec<T>) {
    let mut acc = vec![vec3::zero::<T>(); mesh.num_vertices()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let c = mesh.face_cross(f);
        for &v in face {
            vec3::add_assign(&mut acc[v], c);
        }
    }
    let mut lens = Vec::with_capacity(acc.len());
    let normals = acc
        .into_iter()
        .map(|m| {
            let l = vec3::norm(m);
            lens.push(l);
            if l > T::zero() {
                vec3::scale(m, T::one() / l)
            } else {
                vec3::zero()
            }
        })
        .collect();
    (normals, lens)
}

/// Adds the gradient w.r.t. the three face corners given `g = dL/d(cross)`,
/// where `cross = (b - a) × (c - a)`.
pub(crate) fn accumulate_cross_grad<T: Real>(
    mesh: &Mesh<T>,
    f: usize,
    g: Vec3<T>,
    grad: &mut [Vec3<T>],
) {
    let [ia, ib, ic] = mesh.faces[f];
    let [a, b, c] = mesh.face_positions(f);
    let e1 = vec3::sub(b, a);
    let e2 = vec3::sub(c, a);
    let gb = vec3::cross(e2, g);
    let gc = vec3::cross(g, e1);
    vec3::add_assign(&mut grad[ib], gb);
    vec3::add_assign(&mut grad[ic], gc);
    vec3::sub_assign(&mut grad[ia], vec3::add(gb, gc));
}

/// Uniform-weight differential coordinates `δᵢ = vᵢ − mean(neighbors)`.
pub fn differential_coords<T: Real>(mesh: &Mesh<T>, adj: &Adjacency) -> Result<Vec<Vec3<T>>> {
    mesh.vertices
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let nb = &adj.neighbors[i];
            if nb.is_empty() {
                return Err(Error::IsolatedVertex(i));
            }
            // Summing differences keeps the result independent of a global offset.
            let mut d = vec3::zero();
            for &j in nb {
                vec3::add_assign(&mut d, vec3::sub(v, mesh.vertices[j]));
            }
            Ok(vec3::scale(d, T::one() / T::from_usize_lossy(nb.len())))
        })
        .collect()
}

/// Mean squared norm of the differential coordinates, with its gradient.
pub fn laplacian_loss<T: Real>(mesh: &Mesh<T>, adj: &Adjacency) -> Result<(T, Vec<Vec3<T>>)> {
    let delta = differential_coords(mesh, adj)?;
    let n = T::from_usize_lossy(mesh.num_vertices().max(1));
    let value = delta.iter().map(|&d| vec3::norm2(d)).sum::<T>() / n;

    // dL/dv_k = 2/n (δ_k − Σ_{i ∋ k} δ_i / d_i)
    let w = T::two() / n;
    let mut grad: Vec<Vec3<T>> = delta.iter().map(|&d| vec3::scale(d, w)).collect();
    for (i, d) in delta.iter().enumerate() {
        let nb = &adj.neighbors[i];
        let share = vec3::scale(*d, w / T::from_usize_lossy(nb.len()));
        for &j in nb {
            vec3::sub_assign(&mut grad[j], share);
        }
    }
    Ok((value, grad))
}

/// Mean of `(1 − nᵢ·nⱼ)²` over face pairs sharing an edge, with its gradient.
/// Pairs touching a degenerate face are excluded.
pub fn normal_consistency_loss<T: Real>(
    mesh: &Mesh<T>,
    adj: &Adjacency,
) -> Result<(T, Vec<Vec3<T>>)> {
    if adj.face_pairs.is_empty() {
        return Err(Error::NoInteriorEdges);
    }
    let crosses: Vec<Vec3<T>> = (0..mesh.num_faces()).map(|f| mesh.face_cross(f)).collect();
    let lens: Vec<T> = crosses.iter().map(|&c| vec3::norm(c)).collect();
    let min_len = T::lit(2.0 * DEGENERATE_AREA);
    let unit = |f: usize| vec3::scale(crosses[f], T::one() / lens[f]);

    let pairs: Vec<(usize, usize)> = adj
        .face_pairs
        .iter()
        .copied()
        .filter(|&(i, j)| lens[i] >= min_len && lens[j] >= min_len)
        .collect();
    let mut grad = vec![vec3::zero(); mesh.num_vertices()];
    if pairs.is_empty() {
        return Ok((T::zero(), grad));
    }
    let inv = T::one() / T::from_usize_lossy(pairs.len());

    let mut value = T::zero();
    let mut g_unit = vec![vec3::zero::<T>(); mesh.num_faces()];
    for &(i, j) in &pairs {
        let (ni, nj) = (unit(i), unit(j));
        let r = T::one() - vec3::dot(ni, nj);
        value += r * r;
        let s = -T::two() * r * inv;
        vec3::add_assign(&mut g_unit[i], vec3::scale(nj, s));
        vec3::add_assign(&mut g_unit[j], vec3::scale(ni, s));
    }
    for f in 0..mesh.num_faces() {
        if lens[f] < min_len {
            continue;
        }
        let gc = vec3::normalize_backward(unit(f), lens[f], g_unit[f]);
        accumulate_cross_grad(mesh, f, gc, &mut grad);
    }
    Ok((value * inv, grad))
}
