//! Exact 2x2 real and complex matrix algebra.
//!
//! Everything the rest of the crate needs from linear algebra lives here:
//! the symplectic unit [`J`], closed-form exponentials of trace-free
//! generators, the upper-triangular square root used by the oscillation
//! factorization, Moebius maps, and the determinant inequalities used as
//! property checks.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Imaginary unit.
pub const I_UNIT: C64 = C64::new(0.0, 1.0);

/// Relative tolerance used by the PSD predicate.
pub const PSD_TOL: f64 = 1e-12;

/// Real 2x2 matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Mat2R {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

/// The symplectic unit ((0,-1),(1,0)).
pub const J: Mat2R = Mat2R { a11: 0.0, a12: -1.0, a21: 1.0, a22: 0.0 };

impl Mat2R {
    pub const IDENTITY: Mat2R = Mat2R { a11: 1.0, a12: 0.0, a21: 0.0, a22: 1.0 };
    pub const ZERO: Mat2R = Mat2R { a11: 0.0, a12: 0.0, a21: 0.0, a22: 0.0 };

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2R { a11, a12, a21, a22 }
    }

    pub const fn diag(d1: f64, d2: f64) -> Self {
        Mat2R::new(d1, 0.0, 0.0, d2)
    }

    pub const fn sym(a1: f64, a: f64, a2: f64) -> Self {
        Mat2R::new(a1, a, a, a2)
    }

    pub fn from_rows(r: [[f64; 2]; 2]) -> Self {
        Mat2R::new(r[0][0], r[0][1], r[1][0], r[1][1])
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a21, self.a22]]
    }

    pub fn transpose(&self) -> Self {
        Mat2R::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn scale(&self, s: f64) -> Self {
        Mat2R::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    /// Inverse; `None` when the determinant vanishes exactly.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Mat2R::new(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d))
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.a11.abs().max(self.a12.abs()).max(self.a21.abs()).max(self.a22.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.a12 - self.a21).abs() <= tol * (1.0 + self.a12.abs().max(self.a21.abs()))
    }

    /// Symmetric part, used after assembling products that should be symmetric.
    pub fn symmetrized(&self) -> Self {
        let m = 0.5 * (self.a12 + self.a21);
        Mat2R::new(self.a11, m, m, self.a22)
    }

    /// Eigenvalues (min, max) of the symmetric part.
    pub fn sym_eigenvalues(&self) -> (f64, f64) {
        let s = self.symmetrized();
        let mean = 0.5 * (s.a11 + s.a22);
        let rad = (0.5 * (s.a11 - s.a22)).hypot(s.a12);
        // The smaller-magnitude eigenvalue from the determinant, which keeps
        // it accurate when the two differ by many orders of magnitude.
        let det = s.a11 * s.a22 - s.a12 * s.a12;
        if mean >= 0.0 {
            let hi = mean + rad;
            (if hi > 0.0 { det / hi } else { mean - rad }, hi)
        } else {
            let lo = mean - rad;
            (lo, det / lo)
        }
    }

    /// Symmetric with eigenvalues at least `-PSD_TOL * (1 + trace)`.
    pub fn is_psd(&self) -> bool {
        self.is_symmetric(1e-10) && self.sym_eigenvalues().0 >= -PSD_TOL * (1.0 + self.trace().abs())
    }

    pub fn is_sl2(&self, tol: f64) -> bool {
        (self.det() - 1.0).abs() <= tol
    }

    /// Operator (spectral) norm from the closed-form 2x2 singular values.
    pub fn op_norm(&self) -> f64 {
        let p = (self.a11 + self.a22).hypot(self.a12 - self.a21);
        let q = (self.a11 - self.a22).hypot(self.a12 + self.a21);
        0.5 * (p + q)
    }

    /// Smallest singular value.
    pub fn min_singular(&self) -> f64 {
        let p = (self.a11 + self.a22).hypot(self.a12 - self.a21);
        let q = (self.a11 - self.a22).hypot(self.a12 + self.a21);
        0.5 * (p - q).abs()
    }

    /// Principal square root of a PSD matrix.
    pub fn sqrt_psd(&self) -> Result<Self> {
        if !self.is_psd() {
            return Err(Error::NotPositiveDefinite(format!("{:?} is not PSD", self.rows())));
        }
        let s = self.det().max(0.0).sqrt();
        let t = (self.trace() + 2.0 * s).sqrt();
        if t == 0.0 {
            return Ok(Mat2R::ZERO);
        }
        Ok((self.symmetrized() + Mat2R::IDENTITY.scale(s)).scale(1.0 / t))
    }

    pub fn to_complex(&self) -> Mat2C {
        Mat2C::new(self.a11.into(), self.a12.into(), self.a21.into(), self.a22.into())
    }

    pub fn max_diff(&self, other: &Mat2R) -> f64 {
        (*self - *other).max_abs()
    }

    /// Rotation ((cos p, sin p), (-sin p, cos p)).
    pub fn rotation(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Mat2R::new(c, s, -s, c)
    }
}

impl Add for Mat2R {
    type Output = Mat2R;
    fn add(self, o: Mat2R) -> Mat2R {
        Mat2R::new(self.a11 + o.a11, self.a12 + o.a12, self.a21 + o.a21, self.a22 + o.a22)
    }
}

impl AddAssign for Mat2R {
    fn add_assign(&mut self, o: Mat2R) {
        *self = *self + o;
    }
}

impl Sub for Mat2R {
    type Output = Mat2R;
    fn sub(self, o: Mat2R) -> Mat2R {
        Mat2R::new(self.a11 - o.a11, self.a12 - o.a12, self.a21 - o.a21, self.a22 - o.a22)
    }
}

impl Neg for Mat2R {
    type Output = Mat2R;
    fn neg(self) -> Mat2R {
        self.scale(-1.0)
    }
}

impl Mul for Mat2R {
    type Output = Mat2R;
    fn mul(self, o: Mat2R) -> Mat2R {
        Mat2R::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }
}

impl Mul<f64> for Mat2R {
    type Output = Mat2R;
    fn mul(self, s: f64) -> Mat2R {
        self.scale(s)
    }
}

impl Serialize for Mat2R {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat2R {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = <[[f64; 2]; 2]>::deserialize(d)?;
        Ok(Mat2R::from_rows(r))
    }
}

/// Complex 2x2 matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2C {
    pub a11: C64,
    pub a12: C64,
    pub a21: C64,
    pub a22: C64,
}

impl Mat2C {
    pub const IDENTITY: Mat2C =
        Mat2C { a11: C64::new(1.0, 0.0), a12: C64::new(0.0, 0.0), a21: C64::new(0.0, 0.0), a22: C64::new(1.0, 0.0) };

    pub const fn new(a11: C64, a12: C64, a21: C64, a22: C64) -> Self {
        Mat2C { a11, a12, a21, a22 }
    }

    pub fn det(&self) -> C64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> C64 {
        self.a11 + self.a22
    }

    pub fn scale(&self, s: C64) -> Self {
        Mat2C::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.a11.norm().max(self.a12.norm()).max(self.a21.norm()).max(self.a22.norm())
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 {
            return None;
        }
        Some(Mat2C::new(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d))
    }

    /// Matrix times column vector.
    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [self.a11 * v[0] + self.a12 * v[1], self.a21 * v[0] + self.a22 * v[1]]
    }

    /// Row vector times matrix.
    pub fn apply_left(&self, v: [C64; 2]) -> [C64; 2] {
        [v[0] * self.a11 + v[1] * self.a21, v[0] * self.a12 + v[1] * self.a22]
    }

    pub fn first_column(&self) -> [C64; 2] {
        [self.a11, self.a21]
    }

    pub fn max_diff(&self, other: &Mat2C) -> f64 {
        (*self - *other).max_abs()
    }
}

impl Add for Mat2C {
    type Output = Mat2C;
    fn add(self, o: Mat2C) -> Mat2C {
        Mat2C::new(self.a11 + o.a11, self.a12 + o.a12, self.a21 + o.a21, self.a22 + o.a22)
    }
}

impl Sub for Mat2C {
    type Output = Mat2C;
    fn sub(self, o: Mat2C) -> Mat2C {
        Mat2C::new(self.a11 - o.a11, self.a12 - o.a12, self.a21 - o.a21, self.a22 - o.a22)
    }
}

impl Mul for Mat2C {
    type Output = Mat2C;
    fn mul(self, o: Mat2C) -> Mat2C {
        Mat2C::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }
}

impl Mul<C64> for Mat2C {
    type Output = Mat2C;
    fn mul(self, s: C64) -> Mat2C {
        self.scale(s)
    }
}

const SERIES_RHO: f64 = 1e-4;

/// cosh(rho) and sinh(rho)/rho as functions of rho^2, by truncated Taylor series.
fn cosh_sinhc_series(r2: C64) -> (C64, C64) {
    let c = 1.0 + r2 * (0.5 + r2 * (1.0 / 24.0 + r2 / 720.0));
    let s = 1.0 + r2 * (1.0 / 6.0 + r2 * (1.0 / 120.0 + r2 / 5040.0));
    (c, s)
}

fn check_trace_free(tr: f64, scale: f64) -> Result<()> {
    if tr > 1e-10 * scale.max(f64::MIN_POSITIVE) && tr > 1e-300 {
        return Err(Error::NonTraceFree { trace: tr });
    }
    Ok(())
}

/// Exponential of a trace-free complex 2x2 matrix in closed form.
///
/// With rho^2 = -det A the exponential is cosh(rho) I + sinh(rho)/rho A. When
/// |Re rho| is large the equivalent spectral-projector form
/// e^rho P+ + e^-rho P- is used so that exponentially small entries are not
/// lost to cancellation.
pub fn expm_tracefree(a: Mat2C) -> Result<Mat2C> {
    check_trace_free(a.trace().norm(), a.max_abs())?;
    let r2 = -a.det();
    let rho = r2.sqrt();
    if rho.norm() < SERIES_RHO {
        let (c, s) = cosh_sinhc_series(r2);
        return Ok(Mat2C::IDENTITY.scale(c) + a.scale(s));
    }
    if rho.re.abs() > 1.0 {
        let ar = a.scale(rho.inv());
        let plus = (Mat2C::IDENTITY + ar).scale(C64::new(0.5, 0.0));
        let minus = (Mat2C::IDENTITY - ar).scale(C64::new(0.5, 0.0));
        return Ok(plus.scale(rho.exp()) + minus.scale((-rho).exp()));
    }
    Ok(Mat2C::IDENTITY.scale(rho.cosh()) + a.scale(rho.sinh() / rho))
}

/// Exponential of a trace-free real 2x2 matrix in closed form.
pub fn expm_tracefree_real(a: Mat2R) -> Result<Mat2R> {
    check_trace_free(a.trace().abs(), a.max_abs())?;
    let r2 = -a.det();
    if r2.abs() < SERIES_RHO * SERIES_RHO {
        let (c, s) = cosh_sinhc_series(C64::new(r2, 0.0));
        return Ok(Mat2R::IDENTITY.scale(c.re) + a.scale(s.re));
    }
    if r2 > 0.0 {
        let rho = r2.sqrt();
        if rho > 1.0 {
            let ar = a.scale(1.0 / rho);
            let plus = (Mat2R::IDENTITY + ar).scale(0.5);
            let minus = (Mat2R::IDENTITY - ar).scale(0.5);
            return Ok(plus.scale(rho.exp()) + minus.scale((-rho).exp()));
        }
        return Ok(Mat2R::IDENTITY.scale(rho.cosh()) + a.scale(rho.sinh() / rho));
    }
    let w = (-r2).sqrt();
    Ok(Mat2R::IDENTITY.scale(w.cos()) + a.scale(w.sin() / w))
}

/// Upper-triangular L with positive diagonal and L^T L = A.
pub fn cholesky_upper(a: Mat2R) -> Result<Mat2R> {
    let s = a.symmetrized();
    let tr = s.trace().abs().max(f64::MIN_POSITIVE);
    let det = s.det();
    if !(s.a11 > 1e-14 * tr) || !(det > 1e-14 * tr * tr) {
        return Err(Error::NotPositiveDefinite(format!("cholesky of {:?} (det = {det:e})", s.rows())));
    }
    let r = s.a11.sqrt();
    Ok(Mat2R::new(r, s.a12 / r, 0.0, (det / s.a11).sqrt()))
}

/// Moebius action (a z + b)/(c z + d).
pub fn mobius(a: &Mat2C, z: C64) -> Result<C64> {
    let den = a.a21 * z + a.a22;
    let scale = a.a21.norm() * z.norm() + a.a22.norm();
    if den.norm() <= 1e-14 * scale || den.norm() == 0.0 {
        return Err(Error::PoleHit(den.norm()));
    }
    Ok((a.a11 * z + a.a12) / den)
}

/// Random element of SL(2,R): ((a,b),(c,(1+bc)/a)) with a, b, c uniform in
/// [-2,2] and |a| at least `a_floor`.
pub fn random_sl2<R: Rng + ?Sized>(rng: &mut R, a_floor: f64) -> Mat2R {
    let a = loop {
        let a: f64 = rng.gen_range(-2.0..=2.0);
        if a.abs() >= a_floor {
            break a;
        }
    };
    let b: f64 = rng.gen_range(-2.0..=2.0);
    let c: f64 = rng.gen_range(-2.0..=2.0);
    Mat2R::new(a, b, c, (1.0 + b * c) / a)
}

/// Random PSD matrix with eigenvalues in [0, max_eig]; about one draw in
/// eight is singular.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, max_eig: f64) -> Mat2R {
    let l1: f64 = rng.gen_range(0.0..=max_eig);
    let l2: f64 = if rng.gen_bool(0.125) { 0.0 } else { rng.gen_range(0.0..=max_eig) };
    let r = Mat2R::rotation(rng.gen_range(0.0..std::f64::consts::PI));
    (r.transpose() * Mat2R::diag(l1, l2) * r).symmetrized()
}

/// Pass/fail counts for the determinant inequalities on PSD pairs.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct DetInequalityReport {
    pub pairs: usize,
    /// det(A+B) >= (sqrt det A + sqrt det B)^2.
    pub minkowski_violations: usize,
    /// det(A+B) >= det A + det B.
    pub superadditive_violations: usize,
    /// det((A+B)/2) >= sqrt(det A det B).
    pub geometric_violations: usize,
    /// det A <= det(A+B) for the PSD increment B.
    pub monotone_violations: usize,
    pub sl2_samples: usize,
    /// A^T J A = J, A^-1 = -J A^T J and J A J^T = (A^T)^-1.
    pub symplectic_violations: usize,
    pub worst_gap: f64,
}

impl DetInequalityReport {
    pub fn all_pass(&self) -> bool {
        self.minkowski_violations == 0
            && self.superadditive_violations == 0
            && self.geometric_violations == 0
            && self.monotone_violations == 0
            && self.symplectic_violations == 0
    }
}

/// Evaluate the determinant inequalities on PSD pairs and the symplectic
/// identities on SL(2,R) samples, with `slack` relative tolerance.
pub fn check_det_inequalities(pairs: &[(Mat2R, Mat2R)], sl2: &[Mat2R], slack: f64) -> DetInequalityReport {
    let mut rep = DetInequalityReport { pairs: pairs.len(), sl2_samples: sl2.len(), ..Default::default() };
    let check = |lhs: f64, rhs: f64, counter: &mut usize| {
        let gap = rhs - lhs;
        let tol = slack * (1.0 + lhs.abs().max(rhs.abs()));
        if gap > tol {
            *counter += 1;
        }
        gap / (1.0 + lhs.abs().max(rhs.abs()))
    };
    let mut worst = f64::NEG_INFINITY;
    let (mut mk, mut sa, mut ge, mut mo) = (0, 0, 0, 0);
    for (a, b) in pairs {
        let (da, db) = (a.det().max(0.0), b.det().max(0.0));
        let s = *a + *b;
        let ds = s.det();
        worst = worst.max(check(ds, (da.sqrt() + db.sqrt()).powi(2), &mut mk));
        worst = worst.max(check(ds, da + db, &mut sa));
        worst = worst.max(check(s.scale(0.5).det(), (da * db).sqrt(), &mut ge));
        worst = worst.max(check(ds, da, &mut mo));
    }
    let mut sy = 0;
    for m in sl2 {
        let inv = m.inverse().unwrap_or(Mat2R::ZERO);
        let s = m.max_abs().max(1.0);
        let e1 = (m.transpose() * J * *m).max_diff(&J) / (s * s);
        let e2 = (-(J * m.transpose() * J)).max_diff(&inv) / (s * s);
        let e3 = (J * *m * J.transpose()).max_diff(&inv.transpose()) / (s * s);
        let e = e1.max(e2).max(e3);
        worst = worst.max(e);
        if e > 1e-12 {
            sy += 1;
        }
    }
    rep.minkowski_violations = mk;
    rep.superadditive_violations = sa;
    rep.geometric_violations = ge;
    rep.monotone_violations = mo;
    rep.symplectic_violations = sy;
    rep.worst_gap = worst;
    rep
}

/// Scalar inequalities for f(x) = 1/x + x - 2:
/// |1/x - x|/3 <= f and x/4 <= f outside [1/2, 2]; (2/9)|1/x - x|^2 <= f inside.
/// Returns the largest violation (positive means the inequality failed).
pub fn reciprocal_gap_inequalities(x: f64) -> f64 {
    let f = 1.0 / x + x - 2.0;
    let d = (1.0 / x - x).abs();
    let scale = 1.0 + f.abs();
    if (0.5..=2.0).contains(&x) {
        (2.0 / 9.0 * d * d - f) / scale
    } else {
        ((d / 3.0 - f) / scale).max((x / 4.0 - f) / scale)
    }
}

/// Operator norm of Omega J Omega, which equals det Omega for PSD Omega.
pub fn omega_j_omega_norm(omega: &Mat2R) -> f64 {
    (*omega * J * *omega).op_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Power series of the exponential, summed term by term.
    fn expm_series(a: Mat2C) -> Mat2C {
        let mut term = Mat2C::IDENTITY;
        let mut sum = Mat2C::IDENTITY;
        for k in 1..200 {
            term = (term * a).scale(c(1.0 / k as f64, 0.0));
            sum = sum + term;
        }
        sum
    }

    #[test]
    fn expm_identity_and_nilpotent() {
        let z = Mat2C::new(c(0., 0.), c(0., 0.), c(0., 0.), c(0., 0.));
        assert_eq!(expm_tracefree(z).unwrap(), Mat2C::IDENTITY);
        let n = Mat2C::new(c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.));
        assert!(expm_tracefree(n).unwrap().max_diff(&(Mat2C::IDENTITY + n)) < 1e-15);
    }

    #[test]
    fn expm_rotation_matches_series() {
        let (x, t) = (1.7, 2.3);
        // -z J H t with H = I, z = x.
        let a = J.scale(-x * t).to_complex();
        let e = expm_tracefree(a).unwrap();
        let want = Mat2R::new((x * t).cos(), (x * t).sin(), -(x * t).sin(), (x * t).cos()).to_complex();
        assert!(e.max_diff(&want) < 1e-14);
        assert!(expm_series(a).max_diff(&want) < 1e-12);
    }

    #[test]
    fn expm_against_series_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let a = Mat2C::new(
                p,
                c(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0)),
                c(rng.gen_range(-2.0..2.0), 0.3),
                -p,
            );
            let e = expm_tracefree(a).unwrap();
            let s = expm_series(a);
            assert!(e.max_diff(&s) < 1e-11 * s.max_abs().max(1.0), "{:?}", a);
            assert!((e.det() - 1.0).norm() < 1e-12 * e.max_abs().powi(2).max(1.0));
            let back = expm_tracefree(a.scale(c(-1.0, 0.0))).unwrap();
            assert!((e * back).max_diff(&Mat2C::IDENTITY) < 1e-12 * e.max_abs().powi(2).max(1.0));
        }
    }

    #[test]
    fn expm_small_rho_branch() {
        let a = Mat2C::new(c(3e-5, 0.0), c(1e-5, 1e-6), c(2e-5, 0.0), c(-3e-5, 0.0));
        assert!(expm_tracefree(a).unwrap().max_diff(&expm_series(a)) < 1e-18);
    }

    #[test]
    fn expm_rejects_trace() {
        let a = Mat2C::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0));
        assert!(matches!(expm_tracefree(a), Err(Error::NonTraceFree { .. })));
    }

    #[test]
    fn expm_real_branches() {
        for a in [
            Mat2R::new(0.0, 3.0, 2.0, 0.0),
            Mat2R::new(0.0, -3.0, 2.0, 0.0),
            Mat2R::new(0.1, 0.2, -0.3, -0.1),
            Mat2R::new(-20.0, 0.0, 0.0, 20.0),
        ] {
            let e = expm_tracefree_real(a).unwrap();
            let s = expm_series(a.to_complex());
            assert!(e.to_complex().max_diff(&s) < 1e-12 * s.max_abs(), "{a:?}");
        }
        // Exponentially small entries survive the projector form.
        let e = expm_tracefree_real(Mat2R::diag(-40.0, 40.0)).unwrap();
        assert!(((e.a11 - (-40f64).exp()) / (-40f64).exp()).abs() < 1e-14);
        assert_eq!(e.a12, 0.0);
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(cholesky_upper(Mat2R::IDENTITY).unwrap(), Mat2R::IDENTITY);
        let l = cholesky_upper(Mat2R::sym(4.0, 2.0, 2.0)).unwrap();
        assert!(l.max_diff(&Mat2R::new(2.0, 1.0, 0.0, 1.0)) < 1e-15);
        let a = Mat2R::sym(2.0, 1.0, 1.0);
        let l = cholesky_upper(a).unwrap();
        let r2 = 2f64.sqrt();
        assert!(l.max_diff(&Mat2R::new(r2, 1.0 / r2, 0.0, 1.0 / r2)) < 1e-15);
        assert!((l.transpose() * l).max_diff(&a) < 1e-15);
        assert!(cholesky_upper(Mat2R::diag(1.0, 0.0)).is_err());
    }

    #[test]
    fn mobius_examples() {
        let i = I_UNIT;
        assert_eq!(mobius(&Mat2C::IDENTITY, i).unwrap(), i);
        let m = c(0.3, 1.2);
        assert!((mobius(&J.to_complex(), m).unwrap() + 1.0 / m).norm() < 1e-15);
        let t = Mat2R::new(1.0, 1.0, 0.0, 1.0).to_complex();
        assert_eq!(mobius(&t, i).unwrap(), c(1.0, 1.0));
        let p = Mat2R::new(1.0, 0.0, 1.0, 0.0).to_complex();
        assert!(matches!(mobius(&p, c(0.0, 0.0)), Err(Error::PoleHit(_))));
    }

    #[test]
    fn mobius_preserves_upper_half_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = random_sl2(&mut rng, 1e-2);
            let z = c(rng.gen_range(-5.0..5.0), rng.gen_range(0.01..5.0));
            let w = mobius(&a.to_complex(), z).unwrap();
            let want = z.im / (a.a21 * z + a.a22).norm_sqr();
            assert!((w.im - want).abs() < 1e-10 * want.max(1.0));
        }
    }

    #[test]
    fn predicates_consistent() {
        let a = Mat2R::sym(2.0, 1.0, 1.0);
        assert!(a.is_symmetric(1e-12) && a.is_psd() && a.is_sl2(1e-12));
        assert!(!Mat2R::diag(-1.0, 1.0).is_psd());
        assert!(!Mat2R::new(1.0, 0.5, 0.0, 1.0).is_psd());
    }

    #[test]
    fn det_inequality_equality_cases() {
        let rep =
            check_det_inequalities(&[(Mat2R::IDENTITY, Mat2R::IDENTITY), (Mat2R::IDENTITY, Mat2R::ZERO)], &[], 1e-10);
        assert!(rep.all_pass());
        assert_eq!((Mat2R::IDENTITY + Mat2R::IDENTITY).det(), 4.0);
    }

    #[test]
    fn omega_identity_and_sqrt() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let o = random_psd(&mut rng, 5.0);
            assert!((omega_j_omega_norm(&o) - o.det()).abs() < 1e-10 * (1.0 + o.det()));
            let r = o.sqrt_psd().unwrap();
            assert!((r * r).max_diff(&o) < 1e-12 * (1.0 + o.max_abs()));
        }
    }

    #[test]
    fn op_norm_matches_eigen_for_symmetric() {
        let a = Mat2R::sym(3.0, -1.0, -2.0);
        let (lo, hi) = a.sym_eigenvalues();
        assert!((a.op_norm() - lo.abs().max(hi.abs())).abs() < 1e-14);
        assert!((a.min_singular() - lo.abs().min(hi.abs())).abs() < 1e-14);
    }

    #[test]
    fn reciprocal_gap_grid() {
        let mut worst = f64::NEG_INFINITY;
        for k in 0..=2400 {
            let x = 10f64.powf(-6.0 + 12.0 * k as f64 / 2400.0);
            worst = worst.max(reciprocal_gap_inequalities(x));
        }
        assert!(worst <= 1e-12, "{worst}");
    }
}
