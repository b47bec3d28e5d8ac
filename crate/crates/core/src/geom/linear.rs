//! Small fixed-size linear algebra used throughout the crate.

use crate::scalar::Real;
use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

pub type Vec3f = Vec3<f32>;
pub type Vec3d = Vec3<f64>;

impl<S: Real> Vec3<S> {
    #[inline]
    pub fn new(x: S, y: S, z: S) -> Self {
        Vec3 { x, y, z }
    }
    #[inline]
    pub fn zero() -> Self {
        Vec3::new(S::zero(), S::zero(), S::zero())
    }
    #[inline]
    pub fn splat(v: S) -> Self {
        Vec3::new(v, v, v)
    }
    #[inline]
    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }
    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }
    #[inline]
    pub fn norm_sq(self) -> S {
        self.dot(self)
    }
    #[inline]
    pub fn norm(self) -> S {
        self.norm_sq().sqrt()
    }
    #[inline]
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > S::zero() {
            self / n
        } else {
            self
        }
    }
    #[inline]
    pub fn scale(self, s: S) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
    #[inline]
    pub fn min_elem(self, o: Self) -> Self {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }
    #[inline]
    pub fn max_elem(self, o: Self) -> Self {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
    #[inline]
    pub fn mul_elem(self, o: Self) -> Self {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }
    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
    pub fn to_array(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }
    pub fn from_array(a: [S; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
    pub fn cast<T: Real>(self) -> Vec3<T> {
        Vec3::new(
            T::from_f64_(self.x.to_f64_()),
            T::from_f64_(self.y.to_f64_()),
            T::from_f64_(self.z.to_f64_()),
        )
    }
}

impl<S: Real> Index<usize> for Vec3<S> {
    type Output = S;
    #[inline]
    fn index(&self, i: usize) -> &S {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index out of range"),
        }
    }
}

impl<S: Real> IndexMut<usize> for Vec3<S> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut S {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index out of range"),
        }
    }
}

impl<S: Real> Add for Vec3<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}
impl<S: Real> Sub for Vec3<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}
impl<S: Real> Neg for Vec3<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}
impl<S: Real> Mul<S> for Vec3<S> {
    type Output = Self;
    #[inline]
    fn mul(self, s: S) -> Self {
        self.scale(s)
    }
}
impl<S: Real> Div<S> for Vec3<S> {
    type Output = Self;
    #[inline]
    fn div(self, s: S) -> Self {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}
impl<S: Real> AddAssign for Vec3<S> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
impl<S: Real> SubAssign for Vec3<S> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<S> {
    pub m: [[S; 3]; 3],
}

impl<S: Real> Mat3<S> {
    pub fn identity() -> Self {
        let mut m = [[S::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = S::one();
        }
        Mat3 { m }
    }
    pub fn zero() -> Self {
        Mat3 {
            m: [[S::zero(); 3]; 3],
        }
    }
    pub fn from_rows(r0: Vec3<S>, r1: Vec3<S>, r2: Vec3<S>) -> Self {
        Mat3 {
            m: [r0.to_array(), r1.to_array(), r2.to_array()],
        }
    }
    pub fn from_cols(c0: Vec3<S>, c1: Vec3<S>, c2: Vec3<S>) -> Self {
        Mat3 {
            m: [
                [c0.x, c1.x, c2.x],
                [c0.y, c1.y, c2.y],
                [c0.z, c1.z, c2.z],
            ],
        }
    }
    pub fn row(&self, i: usize) -> Vec3<S> {
        Vec3::from_array(self.m[i])
    }
    pub fn col(&self, j: usize) -> Vec3<S> {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }
    pub fn transpose(&self) -> Self {
        Mat3::from_rows(self.col(0), self.col(1), self.col(2))
    }
    pub fn mul_vec(&self, v: Vec3<S>) -> Vec3<S> {
        Vec3::new(
            self.row(0).dot(v),
            self.row(1).dot(v),
            self.row(2).dot(v),
        )
    }
    pub fn mul_mat(&self, o: &Mat3<S>) -> Mat3<S> {
        let mut r = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = S::zero();
                for (k, row) in o.m.iter().enumerate() {
                    s += self.m[i][k] * row[j];
                }
                r.m[i][j] = s;
            }
        }
        r
    }
    /// Skew-symmetric cross-product matrix [v]_x with [v]_x u = v x u.
    pub fn skew(v: Vec3<S>) -> Self {
        let z = S::zero();
        Mat3 {
            m: [
                [z, -v.z, v.y],
                [v.z, z, -v.x],
                [-v.y, v.x, z],
            ],
        }
    }
    /// Rodrigues rotation about `axis_angle` (angle = |axis_angle|).
    pub fn from_axis_angle(w: Vec3<S>) -> Self {
        let theta = w.norm();
        if theta < S::from_f64_(1e-12) {
            // first-order for tiny angles
            let k = Mat3::skew(w);
            let mut r = Mat3::identity();
            for i in 0..3 {
                for j in 0..3 {
                    r.m[i][j] += k.m[i][j];
                }
            }
            return r.orthonormalized();
        }
        let axis = w / theta;
        let (s, c) = (theta.sin(), theta.cos());
        let k = Mat3::skew(axis);
        let kk = k.mul_mat(&k);
        let mut r = Mat3::identity();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] += s * k.m[i][j] + (S::one() - c) * kk.m[i][j];
            }
        }
        r
    }
    /// Gram-Schmidt re-orthonormalization (keeps determinant +1 for
    /// near-rotations).
    pub fn orthonormalized(&self) -> Self {
        let c0 = self.col(0).normalized();
        let mut c1 = self.col(1);
        c1 = (c1 - c0 * c0.dot(c1)).normalized();
        let c2 = c0.cross(c1);
        Mat3::from_cols(c0, c1, c2)
    }
    pub fn frobenius_dist(&self, o: &Mat3<S>) -> S {
        let mut s = S::zero();
        for i in 0..3 {
            for j in 0..3 {
                let d = self.m[i][j] - o.m[i][j];
                s += d * d;
            }
        }
        s.sqrt()
    }
    pub fn is_orthonormal(&self, tol: S) -> bool {
        self.transpose().mul_mat(self).frobenius_dist(&Mat3::identity()) < tol
    }
    pub fn cast<T: Real>(self) -> Mat3<T> {
        let mut r = Mat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.m[i][j] = T::from_f64_(self.m[i][j].to_f64_());
            }
        }
        r
    }
}

/// Unit quaternion (w, x, y, z), used for the warp-field text format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat<S> {
    pub w: S,
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Real> Quat<S> {
    pub fn identity() -> Self {
        Quat {
            w: S::one(),
            x: S::zero(),
            y: S::zero(),
            z: S::zero(),
        }
    }
    pub fn normalized(self) -> Self {
        let n = (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        Quat {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }
    pub fn to_mat3(self) -> Mat3<S> {
        let Quat { w, x, y, z } = self.normalized();
        let two = S::two();
        Mat3 {
            m: [
                [
                    S::one() - two * (y * y + z * z),
                    two * (x * y - w * z),
                    two * (x * z + w * y),
                ],
                [
                    two * (x * y + w * z),
                    S::one() - two * (x * x + z * z),
                    two * (y * z - w * x),
                ],
                [
                    two * (x * z - w * y),
                    two * (y * z + w * x),
                    S::one() - two * (x * x + y * y),
                ],
            ],
        }
    }
    /// Shepperd's method.
    pub fn from_mat3(r: &Mat3<S>) -> Self {
        let m = &r.m;
        let tr = m[0][0] + m[1][1] + m[2][2];
        let q = if tr > S::zero() {
            let s = (tr + S::one()).sqrt() * S::two();
            Quat {
                w: s * S::from_f64_(0.25),
                x: (m[2][1] - m[1][2]) / s,
                y: (m[0][2] - m[2][0]) / s,
                z: (m[1][0] - m[0][1]) / s,
            }
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (S::one() + m[0][0] - m[1][1] - m[2][2]).sqrt() * S::two();
            Quat {
                w: (m[2][1] - m[1][2]) / s,
                x: s * S::from_f64_(0.25),
                y: (m[0][1] + m[1][0]) / s,
                z: (m[0][2] + m[2][0]) / s,
            }
        } else if m[1][1] > m[2][2] {
            let s = (S::one() + m[1][1] - m[0][0] - m[2][2]).sqrt() * S::two();
            Quat {
                w: (m[0][2] - m[2][0]) / s,
                x: (m[0][1] + m[1][0]) / s,
                y: s * S::from_f64_(0.25),
                z: (m[1][2] + m[2][1]) / s,
            }
        } else {
            let s = (S::one() + m[2][2] - m[0][0] - m[1][1]).sqrt() * S::two();
            Quat {
                w: (m[1][0] - m[0][1]) / s,
                x: (m[0][2] + m[2][0]) / s,
                y: (m[1][2] + m[2][1]) / s,
                z: s * S::from_f64_(0.25),
            }
        };
        q.normalized()
    }
}

/// Rotation + translation; maps p to R p + t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<S> {
    pub rotation: Mat3<S>,
    pub translation: Vec3<S>,
}

impl<S: Real> RigidTransform<S> {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }
    pub fn new(rotation: Mat3<S>, translation: Vec3<S>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }
    #[inline]
    pub fn apply(&self, p: Vec3<S>) -> Vec3<S> {
        self.rotation.mul_vec(p) + self.translation
    }
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }
    pub fn compose(&self, inner: &Self) -> Self {
        // (self ∘ inner)(p) = self(inner(p))
        RigidTransform {
            rotation: self.rotation.mul_mat(&inner.rotation),
            translation: self.rotation.mul_vec(inner.translation) + self.translation,
        }
    }
    pub fn cast<T: Real>(self) -> RigidTransform<T> {
        RigidTransform {
            rotation: self.rotation.cast(),
            translation: self.translation.cast(),
        }
    }
}

/// Dense symmetric positive-definite solve via Cholesky, used by the
/// Gauss-Newton normal equations. Returns None when the factorization
/// breaks down (non-SPD after damping).
pub fn cholesky_solve<S: Real>(a: &[Vec<S>], b: &[S]) -> Option<Vec<S>> {
    let n = b.len();
    debug_assert!(a.len() == n);
    let mut l = vec![vec![S::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= S::zero() || !s.is_finite() {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    // forward substitution L y = b
    let mut y = vec![S::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    // back substitution L^T x = y
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}
