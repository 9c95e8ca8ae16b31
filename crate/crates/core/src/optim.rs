//! First/second-moment adaptive gradient descent over 3-vectors.

use crate::scalar::Real;
use crate::vec3::Vec3;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<Vec3<T>>,
    v: Vec<Vec3<T>>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: vec![[T::zero(); 3]; n],
            v: vec![[T::zero(); 3]; n],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step(&mut self, params: &mut [Vec3<T>], grad: &[Vec3<T>], lr: T) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed without reset");
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = T::one() - self.beta1.powi(self.t);
        let c2 = T::one() - self.beta2.powi(self.t);
        for i in 0..params.len() {
            for k in 0..3 {
                let g = grad[i][k];
                self.m[i][k] = self.beta1 * self.m[i][k] + (T::one() - self.beta1) * g;
                self.v[i][k] = self.beta2 * self.v[i][k] + (T::one() - self.beta2) * g * g;
                let mh = self.m[i][k] / c1;
                let vh = self.v[i][k] / c2;
                params[i][k] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct FlatAdam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> FlatAdam<T> {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = T::one() - self.beta1.powi(self.t);
        let c2 = T::one() - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![[1.0f64, -2.0, 0.0]];
        let mut opt = Adam::new(1);
        opt.step(&mut p, &[[3.0, -0.5, 0.0]], 0.1);
        assert!((p[0][0] - 0.9).abs() < 1e-6);
        assert!((p[0][1] + 1.9).abs() < 1e-6);
        assert_eq!(p[0][2], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![5.0f64, -3.0];
        let mut opt = FlatAdam::new(2);
        for _ in 0..2000 {
            let g = vec![2.0 * p[0], 8.0 * p[1]];
            opt.step(&mut p, &g, 0.05);
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2);
    }
}
