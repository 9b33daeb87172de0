//! Small dense tensors indexed by chart coordinates.
//!
//! Dimensions stay below ~8, so flat `Vec` storage with row-major index
//! arithmetic is all that is needed.

use std::ops::{Index, IndexMut};

/// Rank-3 tensor, e.g. Christoffel symbols `Γ^a_{bc}` indexed as `[a, b, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Tensor3 { n, data: vec![0.0; n * n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    t[[a, b, c]] = f(a, b, c);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.data.iter()
    }
}

impl Index<[usize; 3]> for Tensor3 {
    type Output = f64;
    fn index(&self, [a, b, c]: [usize; 3]) -> &f64 {
        &self.data[(a * self.n + b) * self.n + c]
    }
}

impl IndexMut<[usize; 3]> for Tensor3 {
    fn index_mut(&mut self, [a, b, c]: [usize; 3]) -> &mut f64 {
        &mut self.data[(a * self.n + b) * self.n + c]
    }
}

/// Rank-4 tensor, e.g. the lowered curvature tensor `R_{abcd}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Tensor4 { n, data: vec![0.0; n * n * n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.data.iter()
    }

    /// Largest absolute entry; scale reference for relative residuals.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Index<[usize; 4]> for Tensor4 {
    type Output = f64;
    fn index(&self, [a, b, c, d]: [usize; 4]) -> &f64 {
        &self.data[((a * self.n + b) * self.n + c) * self.n + d]
    }
}

impl IndexMut<[usize; 4]> for Tensor4 {
    fn index_mut(&mut self, [a, b, c, d]: [usize; 4]) -> &mut f64 {
        &mut self.data[((a * self.n + b) * self.n + c) * self.n + d]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let mut t = Tensor3::zeros(3);
        t[[2, 1, 0]] = 5.0;
        assert_eq!(t[[2, 1, 0]], 5.0);
        assert_eq!(t[[0, 1, 2]], 0.0);

        let mut r = Tensor4::zeros(2);
        r[[1, 0, 1, 0]] = -2.5;
        assert_eq!(r[[1, 0, 1, 0]], -2.5);
        assert_eq!(r.max_abs(), 2.5);
    }
}
