//! Generalized Krein system of a factorized Hamiltonian.
//!
//! With `Theta~ = G Theta` (first column of the transfer matrix moved into the
//! frame of the factorization) the pair
//! `P* = e^{i xi z + i u}(Theta~+ + i Theta~-)`,
//! `P  = e^{i xi z - i u}(Theta~+ - i Theta~-)` solves
//!
//! ```text
//! P*' = -i z g P* + f e^{2iu} P
//! P'  =  i z (2 xi' + g) P + conj(f(r, conj z)) e^{-2iu} P*
//! ```
//!
//! with `f = zq - v + i(v1 - v2)/2 - iz(q1 - q2)/2`, `g = tr Q/2 - sqrt(det Q)`,
//! `u' = -tr V/2` and the clock `xi' = sqrt(det Q)`; here `q1, q, q2` and
//! `v1, v, v2` are the entries of `Q` and `V`. For a factorization proper
//! `det Q = 1`, so `xi = r` and `g = tr Q/2 - 1`.
//!
//! Internally the unphased pair `(e^{-iu} P*, e^{iu} P)` is propagated, whose
//! generator is real-analytic in the factors; on segments with constant `Q`,
//! `V` each step is a closed-form exponential.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::factorization::{truncate_factorized, FactorNorms, Factorization, Segment};
use crate::io::ser_c64;
use crate::mat2::{expm_tracefree, Mat2C, Mat2R, C64, I_UNIT};
use crate::ode::{integrate, OdeOptions};
use crate::par::{map_slice, Exec};
use crate::quadrature::{gl16, poisson_log_integral, PoissonOptions};
use crate::solver::transfer;

/// Coefficients of the system at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KreinCoefficients {
    pub f: C64,
    /// `conj(f(r, conj z))`.
    pub f_dual: C64,
    pub g: f64,
    /// `xi' = sqrt(det Q)`.
    pub clock_rate: f64,
    /// `u' = -tr V / 2`.
    pub phase_rate: f64,
}

/// Coefficients from `Q`, `V` at spectral parameter `z`.
pub fn coefficients_from(q: &Mat2R, v: &Mat2R, z: C64) -> KreinCoefficients {
    let f_of = |z: C64| z * q.a12 - v.a12 + I_UNIT * (0.5 * (v.a11 - v.a22)) - I_UNIT * z * (0.5 * (q.a11 - q.a22));
    let rate = q.det().max(0.0).sqrt();
    KreinCoefficients {
        f: f_of(z),
        f_dual: f_of(z.conj()).conj(),
        g: 0.5 * q.trace() - rate,
        clock_rate: rate,
        phase_rate: -0.5 * v.trace(),
    }
}

/// Coefficients of a factorization at `r`.
pub fn krein_coefficients(fac: &Factorization, r: f64, z: C64) -> Result<KreinCoefficients> {
    let p = fac.eval(r)?;
    Ok(coefficients_from(&p.q, &p.v(), z))
}

/// Generator of the unphased pair.
fn generator(c: &KreinCoefficients, z: C64) -> Mat2C {
    Mat2C::new(
        -I_UNIT * z * c.g - I_UNIT * c.phase_rate,
        c.f,
        c.f_dual,
        I_UNIT * z * (2.0 * c.clock_rate + c.g) + I_UNIT * c.phase_rate,
    )
}

/// Largest eigenvalue of `Omega + Omega^*` for the phased generator.
fn hermitian_max(c: &KreinCoefficients, z: C64) -> f64 {
    let y = z.im;
    let d1 = 2.0 * y * c.g;
    let d2 = -2.0 * y * (2.0 * c.clock_rate + c.g);
    let off = (c.f + c.f_dual.conj()).norm();
    0.5 * (d1 + d2) + (0.25 * (d1 - d2).powi(2) + off * off).sqrt()
}

/// State of the system at `r`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KreinState {
    pub r: f64,
    #[serde(serialize_with = "ser_c64")]
    pub pstar: C64,
    #[serde(serialize_with = "ser_c64")]
    pub p: C64,
    /// `u(r) = -1/2 int_0^r tr V`.
    pub u: f64,
    /// `xi(r) = int_0^r sqrt(det Q)`.
    pub xi: f64,
}

/// A propagated path with the Gronwall monitor.
#[derive(Clone, Debug, Serialize)]
pub struct KreinPath {
    #[serde(serialize_with = "ser_c64")]
    pub z: C64,
    pub states: Vec<KreinState>,
    /// `max_r |state(r)| / (|state(0)| exp(1/2 int_0^r lambda_max))`.
    pub gronwall_ratio: f64,
    /// `min_r |P*(r)|`.
    pub min_modulus: f64,
}

impl KreinPath {
    pub fn last(&self) -> &KreinState {
        self.states.last().expect("path has the initial state")
    }
}

/// Unphased state `[e^{-iu} P*, e^{iu} P, u, xi]`.
type Raw = [C64; 4];

fn initial(fac: &Factorization) -> Result<Raw> {
    let g = fac.eval(0.0)?.g;
    Ok([C64::new(g.a11, g.a21), C64::new(g.a11, -g.a21), C64::new(0.0, 0.0), C64::new(0.0, 0.0)])
}

fn to_state(r: f64, s: &Raw) -> KreinState {
    let u = s[2].re;
    let ph = C64::new(0.0, u).exp();
    KreinState { r, pstar: s[0] * ph, p: s[1] / ph, u, xi: s[3].re }
}

/// Advance over `[a, b]` inside one segment.
fn advance(fac: &Factorization, z: C64, a: f64, b: f64, constant: Option<(Mat2R, Mat2R)>, s: Raw) -> Result<Raw> {
    if b <= a {
        return Ok(s);
    }
    let d = b - a;
    match constant {
        Some((q, v)) => {
            let c = coefficients_from(&q, &v, z);
            let om = generator(&c, z);
            let half = om.trace() * 0.5;
            let n = om - Mat2C::IDENTITY.scale(half);
            let e = expm_tracefree(n.scale(C64::new(d, 0.0)))?.scale((half * d).exp());
            let [x, y] = e.apply([s[0], s[1]]);
            Ok([x, y, s[2] + c.phase_rate * d, s[3] + c.clock_rate * d])
        }
        None => {
            // Factors jump at segment ends; the last stage takes the left limit.
            let rhs = |t: f64, y: &Raw| -> Raw {
                let c = krein_coefficients(fac, t.min(b.next_down()), z).unwrap_or(KreinCoefficients {
                    f: C64::new(f64::NAN, 0.0),
                    f_dual: C64::new(f64::NAN, 0.0),
                    g: f64::NAN,
                    clock_rate: f64::NAN,
                    phase_rate: f64::NAN,
                });
                let [p, q] = generator(&c, z).apply([y[0], y[1]]);
                [p, q, C64::new(c.phase_rate, 0.0), C64::new(c.clock_rate, 0.0)]
            };
            integrate(rhs, a, b, s, &OdeOptions::default())
        }
    }
}

/// Segments of `fac` clipped to `[0, r_max]`, continued past the support
/// with `Q = I`, `V = 0`.
fn segments_to(fac: &Factorization, r_max: f64) -> Vec<Segment> {
    let mut segs: Vec<_> =
        fac.segments().into_iter().filter(|s| s.0 < r_max).map(|(a, b, c)| (a, b.min(r_max), c)).collect();
    let end = fac.support();
    if r_max > end {
        segs.push((end, r_max, Some((Mat2R::IDENTITY, Mat2R::ZERO))));
    }
    segs
}

/// State at `r_max` without recording the path.
pub fn pstar_at(fac: &Factorization, z: C64, r_max: f64) -> Result<KreinState> {
    let mut s = initial(fac)?;
    for (a, b, c) in segments_to(fac, r_max) {
        s = advance(fac, z, a, b, c, s)?;
    }
    Ok(to_state(r_max, &s))
}

/// Propagate from 0 to `r_max`, recording at every grid point of `fac`.
pub fn propagate_krein(fac: &Factorization, z: C64, r_max: f64) -> Result<KreinPath> {
    let grid = fac.grid(0.0);
    let step = fac.grid_step();
    let mut s = initial(fac)?;
    let n0 = (s[0].norm_sqr() + s[1].norm_sqr()).sqrt();
    let mut states = vec![to_state(0.0, &s)];
    let mut log_bound = 0.0;
    let mut ratio: f64 = 1.0;
    let mut min_mod = s[0].norm();
    let (x, w) = gl16();
    for (a, b, c) in segments_to(fac, r_max) {
        let mut pts: Vec<f64> = grid.iter().copied().filter(|&t| t > a && t < b).collect();
        if b > fac.support() {
            let n = ((b - a) / step).ceil() as usize;
            pts = (1..n).map(|k| a + k as f64 * step).collect();
        }
        pts.push(b);
        let mut t0 = a;
        for t1 in pts {
            s = advance(fac, z, t0, t1, c, s)?;
            for (xi, wi) in x.iter().zip(w) {
                let r = t0 + 0.5 * (t1 - t0) * (xi + 1.0);
                let k = match c {
                    Some((q, v)) => coefficients_from(&q, &v, z),
                    None => krein_coefficients(fac, r, z)?,
                };
                log_bound += 0.25 * (t1 - t0) * wi * hermitian_max(&k, z);
            }
            let norm = (s[0].norm_sqr() + s[1].norm_sqr()).sqrt();
            ratio = ratio.max(norm / (n0 * log_bound.exp()));
            let st = to_state(t1, &s);
            min_mod = min_mod.min(st.pstar.norm());
            states.push(st);
            t0 = t1;
        }
    }
    Ok(KreinPath { z, states, gronwall_ratio: ratio, min_modulus: min_mod })
}

/// `Theta~(r, z) = G(r) Theta(r, z)` from the transfer matrix.
pub fn theta_tilde(fac: &Factorization, r: f64, z: C64) -> Result<[C64; 2]> {
    let m = transfer(fac.hamiltonian(), r, z)?.m;
    let g = fac.eval(r)?.g.to_complex();
    Ok(g.apply(m.first_column()))
}

/// `P*` rebuilt from `Theta~` and the clock and phase of a propagated state.
pub fn pstar_from_theta(theta: &[C64; 2], z: C64, xi: f64, u: f64) -> C64 {
    (I_UNIT * (z * xi + u)).exp() * (theta[0] + I_UNIT * theta[1])
}

/// Density `|P*(x)|^-2` at the end of the factorization truncated at `ell`,
/// which is the spectral density of the truncated Hamiltonian.
pub fn density_via_pstar(fac: &Factorization, ell: f64, xs: &[f64]) -> Result<Vec<f64>> {
    density_via_pstar_with(fac, ell, xs, Exec::default())
}

/// [`density_via_pstar`] with an explicit execution policy.
pub fn density_via_pstar_with(fac: &Factorization, ell: f64, xs: &[f64], exec: Exec) -> Result<Vec<f64>> {
    let ft = truncate_factorized(fac, ell)?;
    map_slice(exec, xs, |&x| {
        let p = pstar_at(&ft, C64::new(x, 0.0), ell)?.pstar;
        let m = p.norm();
        if !(m > 1e-12) {
            return Err(Error::PoleHit(m));
        }
        Ok(1.0 / (m * m))
    })
    .into_iter()
    .collect()
}

/// Poisson identity at `z = i` for `P*` at the support end of `fac`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OuterCheck {
    /// `(1/pi) int log|P*(x)|^2 / (1 + x^2) dx`.
    pub integral: f64,
    /// `log |P*(i)|^2`.
    pub value: f64,
    pub residual: f64,
    pub quadrature_error: f64,
}

pub fn outer_check(fac: &Factorization) -> Result<OuterCheck> {
    let end = fac.support();
    let res = poisson_log_integral(
        |x| pstar_at(fac, C64::new(x, 0.0), end).map(|s| 2.0 * s.pstar.norm().ln()).unwrap_or(f64::NAN),
        &PoissonOptions::default(),
    )?;
    let value = 2.0 * pstar_at(fac, I_UNIT, end)?.pstar.norm().ln();
    Ok(OuterCheck {
        integral: res.value,
        value,
        residual: (res.value - value).abs(),
        quadrature_error: res.error_estimate(),
    })
}

/// `log |P*(i) P*_d(i)|` at the support end; for a normalized factorization
/// this is the entropy of the (truncated) Hamiltonian.
pub fn entropy_via_pstar(fac: &Factorization) -> Result<f64> {
    let end = fac.support();
    let p = pstar_at(fac, I_UNIT, end)?.pstar;
    let pd = pstar_at(&fac.dual(), I_UNIT, end)?.pstar;
    Ok(p.norm().ln() + pd.norm().ln())
}

/// `(|P*(z)|, |P(z)|)`; the first dominates for `Im z > 0`.
pub fn hermite_biehler(fac: &Factorization, z: C64, r: f64) -> Result<(f64, f64)> {
    let s = pstar_at(fac, z, r)?;
    Ok((s.pstar.norm(), s.p.norm()))
}

/// Suprema along `r` of `|P*(i)|` and `|P*(i) P*_d(i)|` for a normalized
/// factorization, with its norms.
#[derive(Clone, Debug, Serialize)]
pub struct BoundsAudit {
    /// `G(0) = diag(a, 1/a)`.
    pub a: f64,
    pub sup_pstar: f64,
    pub sup_product: f64,
    pub norms: FactorNorms,
    pub gronwall_ratio: f64,
}

pub fn pstar_bounds_audit(fac: &Factorization) -> Result<BoundsAudit> {
    let end = fac.support();
    let p = propagate_krein(fac, I_UNIT, end)?;
    let d = propagate_krein(&fac.dual(), I_UNIT, end)?;
    let sup_pstar = p.states.iter().map(|s| s.pstar.norm()).fold(0.0, f64::max);
    let sup_product = p.states.iter().zip(&d.states).map(|(a, b)| (a.pstar * b.pstar).norm()).fold(0.0, f64::max);
    Ok(BoundsAudit {
        a: fac.eval(0.0)?.g.a11,
        sup_pstar,
        sup_product,
        norms: fac.norms()?,
        gronwall_ratio: p.gronwall_ratio.max(d.gronwall_ratio),
    })
}

/// Dual coefficients satisfy `f_d = -f`, `g_d = g`; returns the largest
/// deviation over the sampling grid.
pub fn duality_defect(fac: &Factorization, z: C64) -> Result<f64> {
    let d = fac.dual();
    let mut worst: f64 = 0.0;
    for t in fac.grid(0.0) {
        let (a, b) = (krein_coefficients(fac, t, z)?, krein_coefficients(&d, t, z)?);
        worst = worst.max((a.f + b.f).norm()).max((a.g - b.g).abs());
    }
    Ok(worst)
}

/// `Im(Theta~+ conj Theta~-) - Im(Theta+ conj Theta-)`.
pub fn wronskian_defect(fac: &Factorization, r: f64, z: C64) -> Result<f64> {
    let th = transfer(fac.hamiltonian(), r, z)?.m.first_column();
    let tt = theta_tilde(fac, r, z)?;
    let a = (tt[0] * tt[1].conj()).im;
    let b = (th[0] * th[1].conj()).im;
    Ok((a - b).abs() / (1.0 + b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::{factorize_exact, factorize_oscillation, normalize_at_i, truncate_factorized};
    use crate::hamiltonian::PiecewiseHamiltonian;
    use crate::models::{example1, example2, example3, random_det1_fc};
    use crate::solver::{entropy_closed_form, spectral_density};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_system() {
        let f = factorize_exact(&PiecewiseHamiltonian::constant(Mat2R::IDENTITY)).unwrap();
        let z = C64::new(0.7, 0.2);
        let c = krein_coefficients(&f, 0.5, z).unwrap();
        assert_eq!((c.f, c.g), (C64::new(0.0, 0.0), 0.0));
        let path = propagate_krein(&f, z, 2.0).unwrap();
        for s in &path.states {
            assert!((s.pstar - 1.0).norm() < 1e-14);
            assert!((s.p - (2.0 * I_UNIT * z * s.r).exp()).norm() < 1e-13);
        }
        assert!(density_via_pstar(&f, 0.0, &[0.3, -4.0]).unwrap().iter().all(|w| (w - 1.0).abs() < 1e-14));
        assert!(path.gronwall_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn example2_matches_closed_form() {
        let (h, o) = example2(0.1, 60).unwrap();
        let f = factorize_exact(&h).unwrap();
        let c = krein_coefficients(&f, 3.5, C64::new(0.05, 0.0)).unwrap();
        assert!((c.f + 0.1).norm() < 1e-15 && c.g.abs() < 1e-15 && (c.f_dual + 0.1).norm() < 1e-15);
        for x in [0.01, 0.05, 0.09] {
            let p = pstar_at(&f, C64::new(x, 0.0), 60.0).unwrap().pstar;
            let want = o.pstar(60.0, x);
            assert!((p - want).norm() < 1e-10 * want.norm(), "{x}: {p} vs {want}");
        }
    }

    #[test]
    fn cross_path_density() {
        let (h1, o1) = example1(3.0).unwrap();
        let f1 = factorize_exact(&h1).unwrap();
        let xs: Vec<f64> = (0..40).map(|k| -5.0 + 0.25 * k as f64).collect();
        let w = density_via_pstar(&f1, 3.0, &xs).unwrap();
        for (x, w) in xs.iter().zip(&w) {
            assert!((w - o1.density(*x)).abs() < 1e-12 * o1.density(*x));
        }
        let (h3, _) = example3(&[(0.5, 0.7), (1.0, -0.4)]).unwrap();
        let f3 = factorize_exact(&h3).unwrap();
        let ft = truncate_factorized(&f3, 1.0).unwrap();
        let want = spectral_density(ft.hamiltonian(), &xs).unwrap();
        let got = density_via_pstar(&f3, 1.0, &xs).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn two_paths_and_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_det1_fc(&mut rng, 4);
        let f = factorize_oscillation(&h).unwrap();
        let z = C64::new(0.8, 0.5);
        let path = propagate_krein(&f, z, f.support()).unwrap();
        assert!(path.gronwall_ratio <= 1.0 + 1e-8);
        for s in path.states.iter().step_by(17) {
            let th = theta_tilde(&f, s.r, z).unwrap();
            let want = pstar_from_theta(&th, z, s.xi, s.u);
            assert!((s.pstar - want).norm() < 1e-8 * (1.0 + want.norm()), "r = {}", s.r);
            assert!(wronskian_defect(&f, s.r, z).unwrap() < 1e-10);
            let conj = pstar_at(&f, z.conj(), s.r).unwrap().pstar.conj();
            let want_p = (2.0 * I_UNIT * z * s.xi).exp() * conj;
            assert!((s.p - want_p).norm() < 1e-8 * (1.0 + want_p.norm()));
        }
        for s in path.states.iter().step_by(8) {
            let (a, b) = hermite_biehler(&f, z, s.r).unwrap();
            assert!(b <= a * (1.0 + 1e-10), "r = {}: {b} > {a}", s.r);
        }
        assert!(duality_defect(&f, z).unwrap() < 1e-12);
    }

    #[test]
    fn entropy_and_outer() {
        let (h, _) = example3(&[(0.6, 0.5), (0.7, -0.3)]).unwrap();
        let f = factorize_exact(&h).unwrap();
        let ft = truncate_factorized(&f, 1.0).unwrap();
        let (_, fnorm) = normalize_at_i(&ft).unwrap();
        let k = entropy_closed_form(fnorm.hamiltonian()).unwrap();
        assert!((entropy_via_pstar(&fnorm).unwrap() - k).abs() < 1e-6);
        let (h1, _) = example1(2.0).unwrap();
        let oc = outer_check(&factorize_exact(&h1).unwrap()).unwrap();
        assert!(oc.residual < 1e-5, "{oc:?}");
        assert!((oc.value - 2.0 * 3f64.ln()).abs() < 1e-12);
        let audit = pstar_bounds_audit(&fnorm).unwrap();
        assert!(audit.sup_product >= 1.0 - 1e-12 && audit.sup_product.is_finite());
    }
}
