//! Fixed-capacity vectors and matrices for dimensions 1 and 2.
//!
//! Every object in the lab lives in `R^d` with `d ∈ {1, 2}`, so points and
//! Jacobians are stored inline; unused slots stay zero.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

pub const MAX_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct DVec {
    dim: usize,
    v: [f64; MAX_DIM],
}

impl DVec {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self { dim, v: [0.0; MAX_DIM] }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let mut out = Self::zeros(s.len());
        out.v[..s.len()].copy_from_slice(s);
        out
    }

    pub fn scalar(x: f64) -> Self {
        Self::from_slice(&[x])
    }

    pub fn new2(x: f64, y: f64) -> Self {
        Self::from_slice(&[x, y])
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut out = Self::zeros(dim);
        out.v[axis] = 1.0;
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v[..self.dim]
    }

    pub fn dot(&self, other: &DVec) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DVec {
        let mut out = *self;
        for x in &mut out.v[..self.dim] {
            *x = f(*x);
        }
        out
    }
}

impl Index<usize> for DVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        debug_assert!(i < self.dim);
        &self.v[i]
    }
}

impl IndexMut<usize> for DVec {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        debug_assert!(i < self.dim);
        &mut self.v[i]
    }
}

impl Add for DVec {
    type Output = DVec;
    fn add(mut self, rhs: DVec) -> DVec {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..MAX_DIM {
            self.v[i] += rhs.v[i];
        }
        self
    }
}

impl AddAssign for DVec {
    fn add_assign(&mut self, rhs: DVec) {
        *self = *self + rhs;
    }
}

impl Sub for DVec {
    type Output = DVec;
    fn sub(mut self, rhs: DVec) -> DVec {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..MAX_DIM {
            self.v[i] -= rhs.v[i];
        }
        self
    }
}

impl SubAssign for DVec {
    fn sub_assign(&mut self, rhs: DVec) {
        *self = *self - rhs;
    }
}

impl Mul<f64> for DVec {
    type Output = DVec;
    fn mul(mut self, s: f64) -> DVec {
        for i in 0..MAX_DIM {
            self.v[i] *= s;
        }
        self
    }
}

impl Neg for DVec {
    type Output = DVec;
    fn neg(self) -> DVec {
        self * -1.0
    }
}

impl Serialize for DVec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DVec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Vec<f64> = Vec::deserialize(d)?;
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(serde::de::Error::custom(format!(
                "vector of length {} (expected 1 or 2)",
                v.len()
            )));
        }
        Ok(DVec::from_slice(&v))
    }
}

/// Square `d × d` matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct DMat {
    dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl DMat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self { dim, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out.m[i][i] = s;
        }
        out
    }

    /// Builds from row-major entries; `entries.len()` must be 1 or 4.
    pub fn from_row_major(entries: &[f64]) -> Self {
        let dim = match entries.len() {
            1 => 1,
            4 => 2,
            n => panic!("matrix with {n} entries is not 1x1 or 2x2"),
        };
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                out.m[i][j] = entries[i * dim + j];
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[i][j] = v;
    }

    pub fn row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for i in 0..self.dim {
            out.extend_from_slice(&self.m[i][..self.dim]);
        }
        out
    }

    pub fn mul_vec(&self, x: &DVec) -> DVec {
        let mut out = DVec::zeros(self.dim);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for j in 0..self.dim {
                acc += self.m[i][j] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn transpose_mul_vec(&self, x: &DVec) -> DVec {
        let mut out = DVec::zeros(self.dim);
        for j in 0..self.dim {
            let mut acc = 0.0;
            for i in 0..self.dim {
                acc += self.m[i][j] * x[i];
            }
            out[j] = acc;
        }
        out
    }

    pub fn matmul(&self, other: &DMat) -> DMat {
        let mut out = DMat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut acc = 0.0;
                for k in 0..self.dim {
                    acc += self.m[i][k] * other.m[k][j];
                }
                out.m[i][j] = acc;
            }
        }
        out
    }

    pub fn det(&self) -> f64 {
        match self.dim {
            1 => self.m[0][0],
            _ => self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0],
        }
    }

    pub fn inverse(&self) -> Option<DMat> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let mut out = DMat::zeros(self.dim);
        match self.dim {
            1 => out.m[0][0] = 1.0 / det,
            _ => {
                out.m[0][0] = self.m[1][1] / det;
                out.m[0][1] = -self.m[0][1] / det;
                out.m[1][0] = -self.m[1][0] / det;
                out.m[1][1] = self.m[0][0] / det;
            }
        }
        Some(out)
    }

    pub fn add(&self, other: &DMat) -> DMat {
        let mut out = *self;
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                out.m[i][j] += other.m[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> DMat {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        out
    }

    /// Largest and smallest singular values.
    pub fn singular_values(&self) -> (f64, f64) {
        if self.dim == 1 {
            let a = self.m[0][0].abs();
            return (a, a);
        }
        let (a, b, c, d) = (self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]);
        // eigenvalues of M^T M
        let p = a * a + c * c;
        let q = b * b + d * d;
        let r = a * b + c * d;
        let mean = 0.5 * (p + q);
        let disc = (0.25 * (p - q) * (p - q) + r * r).sqrt();
        let hi = (mean + disc).max(0.0).sqrt();
        let lo = (mean - disc).max(0.0).sqrt();
        (hi, lo)
    }

    /// Operator 2-norm.
    pub fn op_norm(&self) -> f64 {
        self.singular_values().0
    }

    pub fn frobenius(&self) -> f64 {
        self.row_major().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Serialize for DMat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DMat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v: Vec<f64> = Vec::deserialize(d)?;
        if v.len() != 1 && v.len() != 4 {
            return Err(serde::de::Error::custom(format!(
                "matrix with {} entries (expected 1 or 4, row-major)",
                v.len()
            )));
        }
        Ok(DMat::from_row_major(&v))
    }
}
