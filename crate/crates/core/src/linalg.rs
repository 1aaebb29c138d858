//! Fixed-size 2x2 complex linear algebra used by the subcarrier-pair
//! precoding code. Everything here is closed form.

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Column vector in C^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2(pub [Complex64; 2]);

impl Vec2 {
    pub const fn new(a: Complex64, b: Complex64) -> Self {
        Self([a, b])
    }

    pub fn real(a: f64, b: f64) -> Self {
        Self([Complex64::new(a, 0.0), Complex64::new(b, 0.0)])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0[0].norm_sqr() + self.0[1].norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Scales to unit norm. The zero vector maps to `(1, 0)`.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Self::real(1.0, 0.0);
        }
        Self([self.0[0] / n, self.0[1] / n])
    }

    /// Hermitian inner product `self^H other`.
    pub fn dot(&self, other: &Vec2) -> Complex64 {
        self.0[0].conj() * other.0[0] + self.0[1].conj() * other.0[1]
    }

    pub fn conj(&self) -> Self {
        Self([self.0[0].conj(), self.0[1].conj()])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self([self.0[0] * s, self.0[1] * s])
    }

    /// Rotates the global phase so the first non-negligible entry is real and
    /// non-negative.
    pub fn phase_fixed(&self) -> Self {
        let pivot = if self.0[0].norm() > 1e-14 {
            self.0[0]
        } else {
            self.0[1]
        };
        let r = pivot.norm();
        if r == 0.0 {
            return *self;
        }
        let rot = pivot.conj() / r;
        Self([self.0[0] * rot, self.0[1] * rot])
    }

    /// Outer product `self self^H`, scaled by `w`.
    pub fn outer(&self, w: f64) -> Mat2 {
        let a = self.0[0];
        let b = self.0[1];
        Mat2([
            [a * a.conj() * w, a * b.conj() * w],
            [b * a.conj() * w, b * b.conj() * w],
        ])
    }
}

/// Diagonal 2x2 complex matrix, the equivalent channel of one subcarrier pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diag2(pub [Complex64; 2]);

impl Diag2 {
    pub const ZERO: Diag2 = Diag2([ZERO, ZERO]);

    pub fn identity() -> Self {
        Diag2([Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)])
    }

    pub fn apply(&self, v: &Vec2) -> Vec2 {
        Vec2([self.0[0] * v.0[0], self.0[1] * v.0[1]])
    }

    /// `H^H v`.
    pub fn apply_adjoint(&self, v: &Vec2) -> Vec2 {
        Vec2([self.0[0].conj() * v.0[0], self.0[1].conj() * v.0[1]])
    }

    /// Squared largest singular value.
    pub fn max_gain(&self) -> f64 {
        self.0[0].norm_sqr().max(self.0[1].norm_sqr())
    }

    pub fn to_dense(&self) -> Mat2 {
        Mat2([[self.0[0], ZERO], [ZERO, self.0[1]]])
    }

    /// `|u^H H v|^2` for column vectors `u`, `v`.
    pub fn bilinear_gain(&self, u: &Vec2, v: &Vec2) -> f64 {
        u.dot(&self.apply(v)).norm_sqr()
    }
}

/// Dense 2x2 complex matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[ZERO, ZERO], [ZERO, ZERO]]);

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        Mat2([[one, ZERO], [ZERO, one]])
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        let mut r = *self;
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] += o.0[i][j];
            }
        }
        r
    }

    pub fn mul_vec(&self, v: &Vec2) -> Vec2 {
        Vec2([
            self.0[0][0] * v.0[0] + self.0[0][1] * v.0[1],
            self.0[1][0] * v.0[0] + self.0[1][1] * v.0[1],
        ])
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.0[0][0].im.abs() <= tol
            && self.0[1][1].im.abs() <= tol
            && (self.0[0][1] - self.0[1][0].conj()).norm() <= tol
    }

    /// Solves `self x = b` by Cramer's rule.
    pub fn solve(&self, b: &Vec2) -> Option<Vec2> {
        let m = &self.0;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.norm() < 1e-300 {
            return None;
        }
        Some(Vec2([
            (m[1][1] * b.0[0] - m[0][1] * b.0[1]) / det,
            (m[0][0] * b.0[1] - m[1][0] * b.0[0]) / det,
        ]))
    }
}

/// Eigenvalues `(small, large)` of a 2x2 Hermitian matrix from its
/// characteristic polynomial.
pub fn hermitian_eigenvalues(q: &Mat2) -> (f64, f64) {
    let a = q.0[0][0].re;
    let d = q.0[1][1].re;
    let b = q.0[0][1];
    let half_tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    (half_tr - disc, half_tr + disc)
}

/// Unit eigenvector belonging to the smaller eigenvalue of a 2x2 Hermitian
/// positive semidefinite matrix, with the first non-zero entry real and
/// non-negative.
///
/// For a repeated eigenvalue every unit vector is an eigenvector; `(1, 0)` is
/// returned in that case.
pub fn least_eigvec_2x2_hermitian(q: &Mat2) -> Result<Vec2> {
    let scale =
        q.0.iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
    let tol = 1e-10 * scale.max(1.0);
    if !q.is_hermitian(tol) {
        return Err(Error::NotHermitian);
    }
    let (lo, hi) = hermitian_eigenvalues(q);
    if lo < -tol {
        return Err(Error::NotPositiveSemidefinite(lo));
    }
    if hi - lo <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Ok(Vec2::real(1.0, 0.0));
    }
    let a = q.0[0][0].re;
    let d = q.0[1][1].re;
    let b = q.0[0][1];
    // Rows of (Q - lo I) are orthogonal to the eigenvector; use the better
    // conditioned of the two null-space representations.
    let v = if (a - lo).abs() >= (d - lo).abs() {
        Vec2([-b, Complex64::new(a - lo, 0.0)])
    } else {
        Vec2([Complex64::new(d - lo, 0.0), -b.conj()])
    };
    Ok(v.normalized().phase_fixed())
}
