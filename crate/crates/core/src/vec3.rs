//! Minimal fixed-size vector helpers on `[T; 3]`.

use crate::scalar::Real;

pub type Vec3<T> = [T; 3];

#[inline]
pub fn add<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale<T: Real>(a: Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm<T: Real>(a: Vec3<T>) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm2<T: Real>(a: Vec3<T>) -> T {
    dot(a, a)
}

#[inline]
pub fn dist<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    norm(sub(a, b))
}

/// Normalized copy, or `None` for a zero-length input.
#[inline]
pub fn normalize<T: Real>(a: Vec3<T>) -> Option<Vec3<T>> {
    let n = norm(a);
    if n > T::zero() {
        Some(scale(a, T::one() / n))
    } else {
        None
    }
}

#[inline]
pub fn lerp<T: Real>(a: Vec3<T>, b: Vec3<T>, t: T) -> Vec3<T> {
    add(a, scale(sub(b, a), t))
}

#[inline]
pub fn add_assign<T: Real>(a: &mut Vec3<T>, b: Vec3<T>) {
    a[0] += b[0];
    a[1] += b[1];
    a[2] += b[2];
}

#[inline]
pub fn sub_assign<T: Real>(a: &mut Vec3<T>, b: Vec3<T>) {
    a[0] -= b[0];
    a[1] -= b[1];
    a[2] -= b[2];
}

#[inline]
pub fn zero<T: Real>() -> Vec3<T> {
    [T::zero(); 3]
}

/// Gradient of `(I - n nᵀ) / len` applied to `g`: the derivative of normalizing
/// an unnormalized vector with length `len` and unit direction `n`.
#[inline]
pub fn normalize_backward<T: Real>(n: Vec3<T>, len: T, g: Vec3<T>) -> Vec3<T> {
    let d = dot(n, g);
    scale(sub(g, scale(n, d)), T::one() / len)
}

/// Distance from point `p` to segment `ab` with the clamped segment parameter.
pub fn point_segment_distance<T: Real>(p: Vec3<T>, a: Vec3<T>, b: Vec3<T>) -> (T, T) {
    let ab = sub(b, a);
    let l2 = norm2(ab);
    let t = if l2 > T::zero() {
        (dot(sub(p, a), ab) / l2).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    (dist(p, lerp(a, b, t)), t)
}
