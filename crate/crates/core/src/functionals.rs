//! The two sides of the entropy comparison: the oscillation functional
//! `K~(H) = sum_n (det int_{eta_n}^{eta_{n+2}} H - 4)` and the Szego entropy
//! `K = log Im m(i) - (1/pi) int log w(x)/(1+x^2) dx`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::PiecewiseHamiltonian;
use crate::mat2::{Mat2R, I_UNIT};
use crate::par::{map_indexed, pairwise_sum, Exec};
use crate::quadrature::{poisson_log_integral, PoissonOptions};
use crate::solver::{self, weyl_constant, weyl_fc};

/// Terms and total of the oscillation functional.
#[derive(Clone, Debug, Serialize)]
pub struct KtildeReport {
    /// `(n, det int_{eta_n}^{eta_{n+2}} H - 4)`.
    pub terms: Vec<(usize, f64)>,
    pub total: f64,
    /// Every window from this index on lies in the tail and contributes 0.
    pub n_cutoff: usize,
}

/// Window endpoints `(eta_n, eta_{n+2})` for `n < n_cutoff`, and the cutoff.
fn windows(h: &PiecewiseHamiltonian) -> Result<(Vec<(f64, f64)>, usize)> {
    let xi = h.xi_eta();
    let n_cutoff = xi.total().ceil() as usize + 2;
    let mut etas = Vec::with_capacity(n_cutoff + 2);
    for n in 0..n_cutoff + 2 {
        etas.push(xi.eta(n)?);
    }
    Ok(((0..n_cutoff).map(|n| (etas[n], etas[n + 2])).collect(), n_cutoff))
}

/// `K~(H)` with exact window integrals.
pub fn ktilde(h: &PiecewiseHamiltonian) -> Result<KtildeReport> {
    ktilde_with(h, Exec::default())
}

/// [`ktilde`] with an explicit execution policy.
pub fn ktilde_with(h: &PiecewiseHamiltonian, exec: Exec) -> Result<KtildeReport> {
    let (win, n_cutoff) = windows(h)?;
    let ell = h.ell();
    let vals = map_indexed(exec, win.len(), |n| {
        let (a, b) = win[n];
        if a >= ell {
            0.0
        } else {
            h.integral(a, b).det() - 4.0
        }
    });
    let total = pairwise_sum(&vals);
    Ok(KtildeReport { terms: vals.into_iter().enumerate().collect(), total, n_cutoff })
}

/// `K~(H)` through the matrix-A2 form
/// `4 sum (||<H>^{1/2} <H^-1>^{1/2}||^2 - 1)` over windows `[n, n+2]`.
pub fn ktilde_a2(h: &PiecewiseHamiltonian) -> Result<f64> {
    h.require_unit_det()?;
    let (win, _) = windows(h)?;
    let ell = h.ell();
    let mut terms = Vec::with_capacity(win.len());
    for &(a, b) in &win {
        if a >= ell {
            terms.push(0.0);
            continue;
        }
        let len = b - a;
        let avg = h.integral(a, b).scale(1.0 / len);
        let avg_inv = h.integral_fn(a, b, |m| m.inverse().unwrap_or(Mat2R::ZERO)).scale(1.0 / len);
        let n = (avg.sqrt_psd()? * avg_inv.sqrt_psd()?).op_norm();
        terms.push(4.0 * (n * n - 1.0));
    }
    Ok(pairwise_sum(&terms))
}

/// Scalar diagonal bound: `sum ((int h1)(int 1/h1) - 4)` over windows
/// `[n, n+2]`, returned with `K~(H)`; the first never exceeds the second.
pub fn diag_a2_bound(h: &PiecewiseHamiltonian) -> Result<(f64, f64)> {
    h.require_unit_det()?;
    for (i, c) in h.cells().iter().enumerate() {
        if !(c.value(0.0).a11 > 0.0) {
            return Err(Error::InvalidHamiltonian(format!("cell {i} has h1 <= 0")));
        }
    }
    let (win, _) = windows(h)?;
    let ell = h.ell();
    let terms: Vec<f64> = win
        .iter()
        .map(|&(a, b)| {
            if a >= ell {
                return 0.0;
            }
            let m = h.integral_fn(a, b, |m| Mat2R::diag(m.a11, 1.0 / m.a11));
            m.a11 * m.a22 - 4.0
        })
        .collect();
    Ok((pairwise_sum(&terms), ktilde(h)?.total))
}

/// Entropy with its parts.
#[derive(Clone, Debug, Serialize)]
pub struct EntropyReport {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "logI")]
    pub log_i: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub error_estimate: f64,
    pub method: EntropyMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMethod {
    ClosedForm,
    Quadrature,
}

/// Closed-form entropy as a report (`J` recovered as `logI - K`).
pub fn entropy_closed_form_report(h: &PiecewiseHamiltonian) -> Result<EntropyReport> {
    let k = solver::entropy_closed_form(h)?;
    let log_i = weyl_fc(h, I_UNIT)?.im().ln();
    Ok(EntropyReport { k, log_i, j: log_i - k, error_estimate: 0.0, method: EntropyMethod::ClosedForm })
}

/// Entropy from the logarithmic integral of the density.
pub fn entropy_quadrature(h: &PiecewiseHamiltonian) -> Result<EntropyReport> {
    entropy_quadrature_with(h, Exec::default())
}

/// [`entropy_quadrature`] with an explicit execution policy.
pub fn entropy_quadrature_with(h: &PiecewiseHamiltonian, exec: Exec) -> Result<EntropyReport> {
    h.require_pd_tail()?;
    let i_tail = weyl_constant(&h.tail())?.im;
    let log_i = weyl_fc(h, I_UNIT)?.im().ln();
    let opts = PoissonOptions { exec, ..PoissonOptions::default() };
    let res = poisson_log_integral(|x| solver::log_density_at(h, x, i_tail).unwrap_or(f64::NAN), &opts)?;
    if !res.value.is_finite() {
        return Err(Error::QuadratureNotConverged { last: res.value, previous: res.previous });
    }
    Ok(EntropyReport {
        k: log_i - res.value,
        log_i,
        j: res.value,
        error_estimate: res.error_estimate(),
        method: EntropyMethod::Quadrature,
    })
}

/// `(theta, log w(tan theta))` on `n` interior points of `(-pi/2, pi/2)`.
pub fn entropy_diagnostics(h: &PiecewiseHamiltonian, n: usize) -> Result<Vec<(f64, f64)>> {
    h.require_pd_tail()?;
    let i_tail = weyl_constant(&h.tail())?.im;
    let pts = map_indexed(Exec::default(), n, |k| {
        let theta = std::f64::consts::PI * ((k as f64 + 0.5) / n as f64 - 0.5);
        solver::log_density_at(h, theta.tan(), i_tail).map(|v| (theta, v))
    });
    pts.into_iter().collect()
}

/// `(r, K_H(r))` at the requested points; exactly 0 for `r >= ell`.
pub fn entropy_profile(h: &PiecewiseHamiltonian, rs: &[f64]) -> Result<Vec<(f64, f64)>> {
    let ks = solver::entropy_profile_points(h, rs)?;
    Ok(rs.iter().copied().zip(ks).collect())
}

/// Both functionals of the entropy comparison and their ratios.
#[derive(Clone, Debug, Serialize)]
pub struct FunctionalComparison {
    /// `None` when the entropy is infinite or not computable.
    pub k_m: Option<f64>,
    /// `None` when `K~` is undefined (the determinant clock saturates).
    pub ktilde: Option<f64>,
    /// `K~ / K_m`.
    pub ratio: Option<f64>,
    /// `K~ / (K_m e^{K_m})`.
    pub ratio_exp: Option<f64>,
    /// Set when exactly one of the two functionals is finite.
    pub finiteness_mismatch: bool,
}

/// Compute `K_m` and `K~` side by side.
pub fn compare_functionals(h: &PiecewiseHamiltonian) -> FunctionalComparison {
    let k_m = solver::entropy_closed_form(h).ok().filter(|k| k.is_finite());
    let kt = ktilde(h).ok().map(|r| r.total).filter(|k| k.is_finite());
    let ratio = match (k_m, kt) {
        (Some(k), Some(t)) if k > 0.0 => Some(t / k),
        _ => None,
    };
    let ratio_exp = match (k_m, kt) {
        (Some(k), Some(t)) if k > 0.0 => Some(t / (k * k.exp())),
        _ => None,
    };
    FunctionalComparison { k_m, ktilde: kt, ratio, ratio_exp, finiteness_mismatch: k_m.is_some() != kt.is_some() }
}

/// Smallest `C` with `kt <= C k e^{C k}` for every pair `(k, kt)`.
/// Pairs with `kt <= tol` impose nothing; `k <= 0 < kt` forces infinity.
pub fn trend_constant(pairs: &[(f64, f64)], tol: f64) -> f64 {
    let mut c_max: f64 = 0.0;
    for &(k, kt) in pairs {
        if kt <= tol {
            continue;
        }
        if k <= 0.0 {
            return f64::INFINITY;
        }
        let f = |c: f64| c * k * (c * k).exp() - kt;
        let (mut lo, mut hi) = (0.0, 1.0);
        while f(hi) < 0.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return f64::INFINITY;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        c_max = c_max.max(hi);
    }
    c_max
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Cell;

    fn example1(l: f64) -> PiecewiseHamiltonian {
        PiecewiseHamiltonian::from_constant(&[(l, Mat2R::diag(1.0, 0.0))], Mat2R::IDENTITY).unwrap()
    }

    #[test]
    fn ktilde_example1() {
        for l in [1.0, 2.0, 5.0, 10.0, 100.0] {
            let r = ktilde(&example1(l)).unwrap();
            assert!((r.total - 2.0 * l).abs() < 1e-9, "L={l}: {}", r.total);
            assert!(r.terms.iter().all(|t| t.1 >= -1e-10));
            assert_eq!(r.n_cutoff, 2);
        }
    }

    #[test]
    fn ktilde_constant_is_zero() {
        let h = PiecewiseHamiltonian::from_constant(&[(2.5, Mat2R::sym(2.0, 0.5, 1.0))], Mat2R::sym(2.0, 0.5, 1.0))
            .unwrap();
        assert!(ktilde(&h).unwrap().total.abs() < 1e-14);
    }

    #[test]
    fn a2_form_matches_on_bump() {
        let cells = vec![
            Cell::constant(0.7, Mat2R::diag(2f64.exp(), (-2f64).exp())),
            Cell::constant(1.6, Mat2R::diag(0.5f64.exp(), (-0.5f64).exp())),
            Cell::framed(1.3, Mat2R::IDENTITY, Mat2R::diag(0.4, -0.4), Mat2R::IDENTITY),
        ];
        let h = PiecewiseHamiltonian::new(cells, Mat2R::IDENTITY).unwrap();
        let h = h.with_tail_after(h.ell(), {
            let g = h.cells()[2].frame(1.3);
            g.transpose() * g
        });
        let kt = ktilde(&h).unwrap().total;
        assert!((ktilde_a2(&h).unwrap() - kt).abs() < 1e-9);
        let (lhs, rhs) = diag_a2_bound(&h).unwrap();
        assert!(lhs <= rhs + 1e-9);
        assert!(ktilde_a2(&example1(2.0)).is_err());
    }

    #[test]
    fn diag_bound_equality_for_diagonal() {
        let h = PiecewiseHamiltonian::from_constant(
            &[(1.0, Mat2R::diag(3.0, 1.0 / 3.0)), (1.5, Mat2R::diag(0.5, 2.0))],
            Mat2R::IDENTITY,
        )
        .unwrap();
        let (lhs, rhs) = diag_a2_bound(&h).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn entropy_quadrature_examples() {
        let id = PiecewiseHamiltonian::constant(Mat2R::IDENTITY);
        assert!(entropy_quadrature(&id).unwrap().k.abs() < 1e-10);
        for l in [1.0, 100.0] {
            let r = entropy_quadrature(&example1(l)).unwrap();
            assert!((r.k - (1.0f64 + l).ln()).abs() < 1e-6, "L={l}: {}", r.k);
            assert!((r.k - (r.log_i - r.j)).abs() < 1e-15);
        }
    }

    #[test]
    fn profile_example1() {
        let l = 4.0;
        let p = entropy_profile(&example1(l), &[0.0, 1.0, l, l + 1.0]).unwrap();
        assert!((p[0].1 - 5f64.ln()).abs() < 1e-12);
        assert!(p[1].1 < p[0].1);
        assert_eq!(p[2].1, 0.0);
        assert_eq!(p[3].1, 0.0);
    }

    #[test]
    fn audit_and_trend() {
        let a = compare_functionals(&example1(10.0));
        assert!(!a.finiteness_mismatch);
        assert!((a.ratio.unwrap() - 20.0 / 11f64.ln()).abs() < 1e-9);
        let id = compare_functionals(&PiecewiseHamiltonian::constant(Mat2R::IDENTITY));
        assert_eq!(id.ktilde, Some(0.0));
        assert!(id.k_m.unwrap().abs() < 1e-15);
        let c = trend_constant(&[(1.0, 1.0)], 1e-12);
        assert!((c * c.exp() - 1.0).abs() < 1e-12);
        assert_eq!(trend_constant(&[(0.0, 0.0)], 1e-12), 0.0);
    }
}
