//! Factorizations `H = G^T Q G` with `G' = J V G`, `det G = 1`, `Q >= 0`.
//!
//! Three constructions are provided:
//!
//! * [`factorize_oscillation`] from the unit-window averages of a det-1
//!   Hamiltonian, through a chain of triangular Cholesky steps;
//! * [`factorize_spectral`] from the Weyl function of the shifted
//!   Hamiltonians, `G = ((1/sqrt I, R/sqrt I), (0, sqrt I))`;
//! * [`factorize_exact`] for Hamiltonians whose cells already carry a frame
//!   (Dirac systems) or are constant (frame fixed at the tail's Cholesky
//!   factor).
//!
//! A [`Factorization`] is a callable model, so identities can be checked at
//! any point; [`Factorization::sample`] turns it into the serializable
//! [`FactorizationTriple`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{CellKind, PiecewiseHamiltonian};
use crate::mat2::{cholesky_upper, expm_tracefree_real, Mat2R, C64, I_UNIT, J};
use crate::par::{map_slice, pairwise_sum, Exec};
use crate::quadrature::gl16;
use crate::solver::{backward_sweep, cell_steps};

/// Threshold on the window excess below which the off-diagonal part of the
/// oscillation potential is booked as square integrable.
pub const ZETA_THRESHOLD: f64 = 0.25;
/// Default finite-difference step for the spectral construction.
pub const FD_STEP: f64 = 1e-5;
/// Default sampling step.
pub const GRID_STEP: f64 = 1.0 / 64.0;

/// `G, Q` and the split `V = V1 + V2` at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorPoint {
    pub g: Mat2R,
    pub q: Mat2R,
    pub v1: Mat2R,
    pub v2: Mat2R,
}

impl FactorPoint {
    pub fn v(&self) -> Mat2R {
        self.v1 + self.v2
    }

    fn transformed(&self, c: &Mat2R, a: &Mat2R) -> FactorPoint {
        let ct = c.transpose();
        FactorPoint {
            g: ct * self.g * *a,
            q: (ct * self.q * *c).symmetrized(),
            v1: (ct * self.v1 * *c).symmetrized(),
            v2: (ct * self.v2 * *c).symmetrized(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorMethod {
    Oscillation,
    Spectral,
    Exact,
}

/// Piece where `Q`, `V` are constant and `G(t) = exp((t - start) J V) g0`.
#[derive(Clone, Copy, Debug)]
struct ExpPiece {
    start: f64,
    g0: Mat2R,
    q: Mat2R,
    v1: Mat2R,
    v2: Mat2R,
}

/// Unit window `[n, n+1)` of the oscillation construction.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OscWindow {
    /// `G_n`, with `G_n^T G_n = H_n`.
    pub g_n: Mat2R,
    /// `Lambda_{n+1} = ((x, y), (0, z))`.
    pub lambda: Mat2R,
    /// `det((H_n + H_{n+1})/2) - 1`.
    pub eps: f64,
    /// `det H_n`.
    pub det_h: f64,
    pub zeta: bool,
}

#[derive(Clone, Debug)]
enum Model {
    Exp(Vec<ExpPiece>),
    Osc { h: PiecewiseHamiltonian, windows: Vec<OscWindow> },
    Spectral { h: PiecewiseHamiltonian, y_end: Vec<[C64; 2]>, fd_step: f64 },
}

/// A factorization of a Hamiltonian, evaluable at any `t >= 0`.
///
/// On `[support, inf)` it is constant: `G = G(support)`, `Q = I`, `V = 0`.
#[derive(Clone, Debug)]
pub struct Factorization {
    pub method: FactorMethod,
    model: Model,
    support: f64,
    g_end: Mat2R,
    /// Output transform `G -> C^T G A`, `Q -> C^T Q C`, `V -> C^T V C`.
    c: Mat2R,
    a: Mat2R,
    h: PiecewiseHamiltonian,
    breakpoints: Vec<f64>,
    grid_step: f64,
}

impl Factorization {
    /// The factorized Hamiltonian.
    pub fn hamiltonian(&self) -> &PiecewiseHamiltonian {
        &self.h
    }

    /// End of the non-trivial part.
    pub fn support(&self) -> f64 {
        self.support
    }

    /// Points in `[0, support]` where the factors may fail to be smooth.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    /// Windows of the oscillation construction (empty for other methods).
    pub fn windows(&self) -> &[OscWindow] {
        match &self.model {
            Model::Osc { windows, .. } => windows,
            _ => &[],
        }
    }

    /// Factors at `t`, right-continuous at breakpoints.
    pub fn eval(&self, t: f64) -> Result<FactorPoint> {
        Ok(self.eval_raw(t)?.transformed(&self.c, &self.a))
    }

    fn eval_raw(&self, t: f64) -> Result<FactorPoint> {
        if t >= self.support {
            return Ok(FactorPoint { g: self.g_end, q: Mat2R::IDENTITY, v1: Mat2R::ZERO, v2: Mat2R::ZERO });
        }
        match &self.model {
            Model::Exp(pieces) => {
                let k = pieces.partition_point(|p| p.start <= t).saturating_sub(1);
                let p = &pieces[k];
                let v = p.v1 + p.v2;
                let g = expm_tracefree_real((J * v).scale(t - p.start))? * p.g0;
                Ok(FactorPoint { g, q: p.q, v1: p.v1, v2: p.v2 })
            }
            Model::Osc { h, windows } => {
                let n = (t.floor() as usize).min(windows.len() - 1);
                Ok(osc_point(&windows[n], t - n as f64, h.eval(t)))
            }
            Model::Spectral { h, y_end, fd_step } => {
                let (k, s) = h.locate(t).expect("t below support lies in a cell");
                spectral_point(h, k, s, &y_end[k], *fd_step)
            }
        }
    }

    /// Segments `[a, b]` covering `[0, support]` on which the factors are
    /// smooth; `Some((Q, V))` marks segments where both are constant.
    pub fn segments(&self) -> Vec<Segment> {
        let bp = &self.breakpoints;
        let mut out = Vec::with_capacity(bp.len());
        for w in bp.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let constant = match &self.model {
                Model::Exp(_) => {
                    let p = self.eval(0.5 * (a + b)).expect("exponential pieces evaluate");
                    Some((p.q, p.v()))
                }
                _ => None,
            };
            out.push((a, b, constant));
        }
        out
    }

    /// Factorization of `A^T H A` for `A = B C` obtained by the output
    /// transform `(C, A)`; requires `C` orthogonal with det 1.
    fn transformed(&self, c: &Mat2R, a: &Mat2R) -> Result<Factorization> {
        let h = self.h.conjugate_sl2(a)?;
        Ok(Factorization { c: self.c * *c, a: self.a * *a, h, ..self.clone() })
    }

    /// Factorization of the dual Hamiltonian `J^T H J`:
    /// `G_d = J^T G J`, `Q_d = J^T Q J`, `V_d = J^T V J`.
    pub fn dual(&self) -> Factorization {
        self.transformed(&J, &J).expect("J is in SL(2,R)")
    }

    /// Whether `t` lies on the sampling grid (uniform step or breakpoint).
    pub fn is_grid_point(&self, t: f64) -> bool {
        let k = (t / self.grid_step).round();
        (k * self.grid_step - t).abs() <= 1e-12 * (1.0 + t.abs())
            || self.breakpoints.iter().any(|b| (b - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }

    /// Sampling grid: uniform points up to `support + margin` plus breakpoints.
    pub fn grid(&self, margin: f64) -> Vec<f64> {
        let end = self.support + margin;
        let n = (end / self.grid_step).floor() as usize;
        let mut g: Vec<f64> = (0..=n).map(|k| k as f64 * self.grid_step).collect();
        g.extend(self.breakpoints.iter().copied());
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        g.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        g
    }

    /// Integral norms `q = int (tr Q - 2)`, `v1 = int |V1|`, `v2 = (int |V2|^2)^{1/2}`.
    pub fn norms(&self) -> Result<FactorNorms> {
        let grid = self.grid(0.0);
        let parts = map_slice(Exec::default(), &grid.windows(2).collect::<Vec<_>>(), |w| {
            let (a, b) = (w[0], w[1]);
            let (x, wt) = gl16();
            let mut acc = [0.0; 3];
            for (xi, wi) in x.iter().zip(wt) {
                let p = self.eval(a + 0.5 * (b - a) * (xi + 1.0))?;
                let s = 0.5 * (b - a) * wi;
                acc[0] += s * (p.q.trace() - 2.0);
                acc[1] += s * p.v1.op_norm();
                acc[2] += s * p.v2.op_norm().powi(2);
            }
            Ok(acc)
        });
        let parts: Vec<[f64; 3]> = parts.into_iter().collect::<Result<_>>()?;
        let col = |i: usize| pairwise_sum(&parts.iter().map(|p| p[i]).collect::<Vec<_>>());
        Ok(FactorNorms { q: col(0), v1: col(1), v2: col(2).sqrt() })
    }

    /// Samples on [`Self::grid`] with a margin of one unit past the support.
    pub fn sample(&self) -> Result<FactorizationTriple> {
        let grid = self.grid(1.0);
        let pts: Vec<FactorPoint> =
            map_slice(Exec::default(), &grid, |&t| self.eval(t)).into_iter().collect::<Result<_>>()?;
        Ok(FactorizationTriple {
            g: pts.iter().map(|p| p.g).collect(),
            q: pts.iter().map(|p| p.q).collect(),
            v1: pts.iter().map(|p| p.v1).collect(),
            v2: pts.iter().map(|p| p.v2).collect(),
            norms: self.norms()?,
            grid,
        })
    }
}

/// Certified `L1`/`L2` norms of a factorization.
/// `(start, end, Some((Q, V)))` where the factors are constant on the piece.
pub type Segment = (f64, f64, Option<(Mat2R, Mat2R)>);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorNorms {
    pub q: f64,
    pub v1: f64,
    pub v2: f64,
}

/// Sampled factorization, the exchange format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationTriple {
    pub grid: Vec<f64>,
    #[serde(rename = "G")]
    pub g: Vec<Mat2R>,
    #[serde(rename = "Q")]
    pub q: Vec<Mat2R>,
    #[serde(rename = "V1")]
    pub v1: Vec<Mat2R>,
    #[serde(rename = "V2")]
    pub v2: Vec<Mat2R>,
    pub norms: FactorNorms,
}

/// Result of one triangular Cholesky step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TriangularStep {
    /// Upper Cholesky factor of `C = Lambda_A^{-T} B Lambda_A^{-1}`.
    pub lambda_c: Mat2R,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// `det((A + B)/2) - 1`.
    pub delta: f64,
    /// `(x - z)/2`, the first-order part of `x - 1` and `1 - z`.
    pub delta_hat: f64,
}

impl TriangularStep {
    /// Largest violation of `1/(4k) <= x, z <= 2 sqrt k` and
    /// `1/(2 sqrt k) <= xz <= 2 sqrt k`, `k = 1 + delta` (0 when all hold).
    pub fn bound_violation(&self) -> f64 {
        let k = 1.0 + self.delta.max(0.0);
        let lo = 1.0 / (4.0 * k);
        let hi = 2.0 * k.sqrt();
        let xz = self.x * self.z;
        [lo - self.x, self.x - hi, lo - self.z, self.z - hi, 1.0 / hi - xz, xz - hi].into_iter().fold(0.0, f64::max)
    }
}

/// `Lambda_C` for `C = Lambda_A^{-T} B Lambda_A^{-1}`, so `Lambda_B = Lambda_C Lambda_A`.
pub fn triangular_step(a: &Mat2R, b: &Mat2R) -> Result<TriangularStep> {
    let la = cholesky_upper(*a)?;
    let inv = la.inverse().ok_or_else(|| Error::NotPositiveDefinite("Cholesky factor is singular".into()))?;
    let c = (inv.transpose() * *b * inv).symmetrized();
    let lc = cholesky_upper(c)?;
    let delta = (*a + *b).scale(0.5).det() - 1.0;
    Ok(TriangularStep { lambda_c: lc, x: lc.a11, y: lc.a12, z: lc.a22, delta, delta_hat: 0.5 * (lc.a11 - lc.a22) })
}

fn osc_point(w: &OscWindow, tau: f64, h: Mat2R) -> FactorPoint {
    let (x, y, z) = (w.lambda.a11, w.lambda.a12, w.lambda.a22);
    let g = (Mat2R::IDENTITY + (w.lambda - Mat2R::IDENTITY).scale(tau)) * w.g_n;
    let nu = g.det().sqrt().recip();
    let gg = g.scale(nu);
    let gi = gg.inverse().expect("det G = 1");
    let q = (gi.transpose() * h * gi).symmetrized();
    let u = 1.0 / (1.0 - tau + tau * x);
    let v = 1.0 / (1.0 - tau + tau * z);
    let tr_z = (x - 1.0) * u + (z - 1.0) * v;
    let d = y * u * v;
    let zeta = if w.zeta { 1.0 } else { 0.0 };
    let off1 = 0.5 * tr_z - (x - 1.0) * (1.0 - zeta) * u;
    let v1 = Mat2R::sym(0.0, off1, -(1.0 - zeta) * d);
    let v2 = Mat2R::sym(0.0, -(x - 1.0) * zeta * u, -zeta * d);
    FactorPoint { g: gg, q, v1, v2 }
}

/// Factorization from unit-window averages `H_n = int_n^{n+1} H`.
pub fn factorize_oscillation(h: &PiecewiseHamiltonian) -> Result<Factorization> {
    factorize_oscillation_with(h, GRID_STEP)
}

/// [`factorize_oscillation`] with an explicit sampling step.
pub fn factorize_oscillation_with(h: &PiecewiseHamiltonian, grid_step: f64) -> Result<Factorization> {
    h.require_unit_det()?;
    let n0 = h.ell().ceil() as usize;
    let avg: Vec<Mat2R> = (0..=n0 + 1).map(|n| h.integral(n as f64, n as f64 + 1.0)).collect();
    let mut g_n = cholesky_upper(avg[0]).map_err(|_| Error::SingularWindow(0))?;
    let mut windows = Vec::with_capacity(n0);
    for n in 0..n0 {
        if !(avg[n + 1].det() > 0.0) {
            return Err(Error::SingularWindow(n + 1));
        }
        let step = triangular_step(&avg[n], &avg[n + 1]).map_err(|_| Error::SingularWindow(n + 1))?;
        let eps = (avg[n] + avg[n + 1]).scale(0.5).det() - 1.0;
        windows.push(OscWindow { g_n, lambda: step.lambda_c, eps, det_h: avg[n].det(), zeta: eps < ZETA_THRESHOLD });
        g_n = step.lambda_c * g_n;
    }
    let mut breakpoints: Vec<f64> = (0..=n0).map(|n| n as f64).collect();
    breakpoints.extend(h.boundaries().iter().copied());
    sort_dedup(&mut breakpoints);
    let model = if windows.is_empty() { Model::Exp(Vec::new()) } else { Model::Osc { h: h.clone(), windows } };
    Ok(Factorization {
        method: FactorMethod::Oscillation,
        model,
        support: n0 as f64,
        g_end: g_n,
        c: Mat2R::IDENTITY,
        a: Mat2R::IDENTITY,
        h: h.clone(),
        breakpoints,
        grid_step,
    })
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
}

/// Weyl value of the shifted Hamiltonian at local time `s` of cell `k`,
/// from the row vector at the end of that cell.
fn weyl_in_cell(h: &PiecewiseHamiltonian, k: usize, s: f64, y_end: &[C64; 2]) -> Result<C64> {
    let c = &h.cells()[k];
    let mut y = *y_end;
    for p in cell_steps(c, s, c.len, I_UNIT).iter().rev() {
        y = p.apply_left(y);
        let n = y[0].norm().max(y[1].norm());
        y = [y[0] / n, y[1] / n];
    }
    if y[0].norm() <= 1e-300 {
        return Err(Error::PoleHit(y[0].norm()));
    }
    Ok(y[1] / y[0])
}

/// `m` and `m'` at local time `s` of cell `k` by centered differences with one
/// Richardson step, one-sided near the cell ends.
fn weyl_derivative(h: &PiecewiseHamiltonian, k: usize, s: f64, y_end: &[C64; 2], step: f64) -> Result<(C64, C64)> {
    let len = h.cells()[k].len;
    let hh = step.min(len / 4.0);
    let m = |x: f64| weyl_in_cell(h, k, x, y_end);
    let m0 = m(s)?;
    let d = |e: f64| -> Result<C64> {
        if s - e >= 0.0 && s + e <= len {
            Ok((m(s + e)? - m(s - e)?) / (2.0 * e))
        } else if s + 2.0 * e <= len {
            Ok((m(s + e)? * 4.0 - m0 * 3.0 - m(s + 2.0 * e)?) / (2.0 * e))
        } else {
            Ok((m0 * 3.0 - m(s - e)? * 4.0 + m(s - 2.0 * e)?) / (2.0 * e))
        }
    };
    let d1 = d(hh)?;
    let d2 = d(0.5 * hh)?;
    let rich = (d2 * 4.0 - d1) / 3.0;
    let gap = (rich - d2).norm();
    if !(gap <= 1e-4 * (1.0 + rich.norm())) {
        return Err(Error::DerivativeUnstable { t: h.boundaries()[k] + s, gap });
    }
    Ok((m0, rich))
}

fn spectral_frame(m: C64) -> Mat2R {
    let si = m.im.sqrt();
    Mat2R::new(1.0 / si, m.re / si, 0.0, si)
}

fn spectral_point(h: &PiecewiseHamiltonian, k: usize, s: f64, y_end: &[C64; 2], step: f64) -> Result<FactorPoint> {
    let (m, dm) = weyl_derivative(h, k, s, y_end, step)?;
    let (i, di, dr) = (m.im, dm.im, dm.re);
    let g = spectral_frame(m);
    let gi = g.inverse().expect("det G = 1");
    let hv = h.cells()[k].value(s);
    let q = (gi.transpose() * hv * gi).symmetrized();
    let ih = i * hv.a11;
    let in_s1 = (0.5..=2.0).contains(&ih);
    let g2 = if in_s1 { 0.5 * (ih - 1.0 / ih) } else { 0.0 };
    let g1 = di / (2.0 * i) - g2;
    let rr = -dr / i;
    let (t1, t2) = if in_s1 { (0.0, rr) } else { (rr, 0.0) };
    Ok(FactorPoint { g, q, v1: Mat2R::sym(0.0, g1, t1), v2: Mat2R::sym(0.0, g2, t2) })
}

/// Factorization from the Weyl functions `m_r(i) = R + iI` of the shifts.
pub fn factorize_spectral(h: &PiecewiseHamiltonian) -> Result<Factorization> {
    factorize_spectral_with(h, FD_STEP, GRID_STEP)
}

/// [`factorize_spectral`] with explicit difference and sampling steps.
pub fn factorize_spectral_with(h: &PiecewiseHamiltonian, fd_step: f64, grid_step: f64) -> Result<Factorization> {
    h.require_unit_det()?;
    let pts = backward_sweep(h, I_UNIT, h.boundaries())?;
    let y_end: Vec<[C64; 2]> = pts[1..].iter().map(|p| p.y).collect();
    let m_end = pts[pts.len() - 1].weyl()?;
    let mut breakpoints = h.boundaries().to_vec();
    sort_dedup(&mut breakpoints);
    Ok(Factorization {
        method: FactorMethod::Spectral,
        model: Model::Spectral { h: h.clone(), y_end, fd_step },
        support: h.ell(),
        g_end: spectral_frame(m_end),
        c: Mat2R::IDENTITY,
        a: Mat2R::IDENTITY,
        h: h.clone(),
        breakpoints,
        grid_step,
    })
}

/// Exact factorization read off the cells: a framed cell contributes its own
/// frame, `Q = q` and `V` (booked as `V2`); a constant cell keeps the frame
/// fixed with `Q = G^{-T} H G^{-1}`. The frame at `ell` is the last framed
/// cell's end frame, or the tail's Cholesky factor; frames must join
/// continuously. `det Q = det H` cellwise, so this is a genuine factorization
/// only for det-1 input; the Krein identities do not need that.
pub fn factorize_exact(h: &PiecewiseHamiltonian) -> Result<Factorization> {
    let cells = h.cells();
    let mut g = match cells.last().map(|c| c.kind) {
        Some(CellKind::Framed { .. }) => cells[cells.len() - 1].frame(cells[cells.len() - 1].len),
        _ => cholesky_upper(h.tail())?,
    };
    if (g.transpose() * g).max_diff(&h.tail()) > 1e-10 * h.tail().max_abs().max(1.0) {
        return Err(Error::InvalidInput("tail is not G^T G for the final frame".into()));
    }
    let g_end = g;
    let mut pieces = Vec::with_capacity(cells.len());
    for (k, c) in cells.iter().enumerate().rev() {
        let start = h.boundaries()[k];
        let piece = match c.kind {
            CellKind::Constant(hv) => {
                let gi = g.inverse().expect("frames are invertible");
                ExpPiece { start, g0: g, q: (gi.transpose() * hv * gi).symmetrized(), v1: Mat2R::ZERO, v2: Mat2R::ZERO }
            }
            CellKind::Framed { q, v, g0 } => {
                let end = c.frame(c.len);
                if end.max_diff(&g) > 1e-10 * g.max_abs().max(1.0) {
                    return Err(Error::InvalidInput(format!("frame of cell {k} does not join the next one")));
                }
                if (g0.det() - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidInput(format!("frame of cell {k} is not in SL(2,R)")));
                }
                g = g0;
                ExpPiece { start, g0, q, v1: Mat2R::ZERO, v2: v }
            }
        };
        pieces.push(piece);
    }
    pieces.reverse();
    let mut breakpoints = h.boundaries().to_vec();
    sort_dedup(&mut breakpoints);
    Ok(Factorization {
        method: FactorMethod::Exact,
        model: Model::Exp(pieces),
        support: h.ell(),
        g_end,
        c: Mat2R::IDENTITY,
        a: Mat2R::IDENTITY,
        h: h.clone(),
        breakpoints,
        grid_step: GRID_STEP,
    })
}

/// Normalization by `A = G(0)^{-1} B C_phi`: afterwards `m_A(i) = i` and
/// `G(0) = diag(a, 1/a)` with `a` in `(0, 1]`.
pub fn normalize_at_i(f: &Factorization) -> Result<(Mat2R, Factorization)> {
    let g0 = f.eval(0.0)?.g;
    let g0i = g0.inverse().ok_or(Error::NotSl2 { det: g0.det() })?;
    let h1 = f.h.conjugate_sl2(&g0i)?;
    let m = crate::solver::weyl_fc(&h1, I_UNIT)?.m;
    let (r, i) = (m.re, m.im);
    let d = (i + 1.0) / (i * (r * r + (i + 1.0).powi(2))).sqrt();
    let a = d * (i + r * r / (1.0 + i));
    let b = -d * r / (1.0 + i);
    let bm = Mat2R::sym(a, b, d);
    // Rotation whose first column is the eigenvector of the smaller eigenvalue.
    let (lo, _) = bm.sym_eigenvalues();
    let (e1, e2) = if b.abs() > 1e-300 {
        let (x, y) = (b, lo - a);
        let n = x.hypot(y);
        (x / n, y / n)
    } else if a <= d {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let c = Mat2R::new(e1, -e2, e2, e1);
    let amat = g0i * bm * c;
    let out = f.transformed(&c, &amat)?;
    Ok((amat, out))
}

/// Truncation at a grid point `ell2`: the Hamiltonian becomes `G(ell2)^T
/// G(ell2)` after `ell2`, and the factorization `Q = I`, `V = 0` there.
pub fn truncate_factorized(f: &Factorization, ell2: f64) -> Result<Factorization> {
    if !(ell2 >= 0.0) || !f.is_grid_point(ell2) {
        return Err(Error::GridMismatch(ell2));
    }
    if ell2 >= f.support {
        return Ok(f.clone());
    }
    let g_raw = f.eval_raw(ell2)?.g;
    let g = f.c.transpose() * g_raw * f.a;
    let h = f.h.with_tail_after(ell2, (g.transpose() * g).symmetrized());
    let mut breakpoints: Vec<f64> = f.breakpoints.iter().copied().filter(|&b| b < ell2).collect();
    breakpoints.push(ell2);
    Ok(Factorization { support: ell2, g_end: g_raw, h, breakpoints, ..f.clone() })
}

/// Pointwise and integral checks of a factorization.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub points: usize,
    /// `max |H - G^T Q G| / max(1, |H|)`.
    pub reconstruction: f64,
    pub det_g: f64,
    pub det_q: f64,
    /// Most negative eigenvalue of `Q` (0 if `Q >= 0`).
    pub q_negativity: f64,
    pub v_asymmetry: f64,
    /// `min (tr Q - 2)`.
    pub trace_q_excess_min: f64,
    /// `max |G(b) - G(a) - int_a^b J V G| / max(1, |G|)` over grid intervals;
    /// `None` when only samples are available.
    pub derivative: Option<f64>,
    pub norms: Option<FactorNorms>,
    /// Largest of the residuals above.
    pub residual: f64,
}

fn finish_report(mut r: VerifyReport) -> VerifyReport {
    r.residual = [r.reconstruction, r.det_g, r.det_q, r.q_negativity, r.v_asymmetry, r.derivative.unwrap_or(0.0)]
        .into_iter()
        .fold(0.0, f64::max);
    r
}

fn pointwise(h: &PiecewiseHamiltonian, t: f64, p: &FactorPoint) -> [f64; 6] {
    let hv = h.eval(t);
    let rec = (p.g.transpose() * p.q * p.g).max_diff(&hv) / hv.max_abs().max(1.0);
    let v = p.v();
    [
        rec,
        (p.g.det() - 1.0).abs(),
        (p.q.det() - 1.0).abs(),
        (-p.q.sym_eigenvalues().0).max(0.0),
        (v.a12 - v.a21).abs(),
        p.q.trace() - 2.0,
    ]
}

fn reduce(rows: &[[f64; 6]]) -> [f64; 6] {
    let mut out = [0.0, 0.0, 0.0, 0.0, 0.0, f64::INFINITY];
    for r in rows {
        for i in 0..5 {
            out[i] = f64::max(out[i], r[i]);
        }
        out[5] = out[5].min(r[5]);
    }
    out
}

/// Verify a factorization model against `h` on its grid (with one unit of
/// margin past the support), including the integral form of `G' = J V G`.
pub fn verify_factorization(h: &PiecewiseHamiltonian, f: &Factorization) -> Result<VerifyReport> {
    let grid = f.grid(1.0);
    let rows: Vec<[f64; 6]> = map_slice(Exec::default(), &grid, |&t| f.eval(t).map(|p| pointwise(h, t, &p)))
        .into_iter()
        .collect::<Result<_>>()?;
    let derivs: Vec<f64> = map_slice(Exec::default(), &grid.windows(2).collect::<Vec<_>>(), |w| {
        let (a, b) = (w[0], w[1]);
        let (x, wt) = gl16();
        let mut acc = Mat2R::ZERO;
        for (xi, wi) in x.iter().zip(wt) {
            let p = f.eval(a + 0.5 * (b - a) * (xi + 1.0))?;
            acc += (J * p.v() * p.g).scale(0.5 * (b - a) * wi);
        }
        let ga = f.eval(a)?.g;
        let gb = left_limit_g(f, b)?;
        Ok((gb - ga - acc).max_abs() / gb.max_abs().max(1.0))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let r = reduce(&rows);
    Ok(finish_report(VerifyReport {
        points: grid.len(),
        reconstruction: r[0],
        det_g: r[1],
        det_q: r[2],
        q_negativity: r[3],
        v_asymmetry: r[4],
        trace_q_excess_min: r[5],
        derivative: Some(derivs.into_iter().fold(0.0, f64::max)),
        norms: Some(f.norms()?),
        residual: 0.0,
    }))
}

/// `G` is continuous, but evaluate just inside the interval for robustness
/// against the right-continuous model switch at `b`.
fn left_limit_g(f: &Factorization, b: f64) -> Result<Mat2R> {
    let gb = f.eval(b)?.g;
    let inside = f.eval(b - 1e-13 * (1.0 + b))?.g;
    Ok(if (gb - inside).max_abs() <= 1e-10 * gb.max_abs().max(1.0) { gb } else { inside })
}

/// Pointwise checks of a sampled triple against `h`.
pub fn verify_triple(h: &PiecewiseHamiltonian, tr: &FactorizationTriple) -> Result<VerifyReport> {
    let n = tr.grid.len();
    if tr.g.len() != n || tr.q.len() != n || tr.v1.len() != n || tr.v2.len() != n {
        return Err(Error::InvalidInput("factorization arrays differ in length from the grid".into()));
    }
    let rows: Vec<[f64; 6]> = (0..n)
        .map(|k| pointwise(h, tr.grid[k], &FactorPoint { g: tr.g[k], q: tr.q[k], v1: tr.v1[k], v2: tr.v2[k] }))
        .collect();
    let r = reduce(&rows);
    Ok(finish_report(VerifyReport {
        points: n,
        reconstruction: r[0],
        det_g: r[1],
        det_q: r[2],
        q_negativity: r[3],
        v_asymmetry: r[4],
        trace_q_excess_min: r[5],
        derivative: None,
        norms: Some(tr.norms),
        residual: 0.0,
    }))
}

/// Window facts of the oscillation construction: `int_n^{n+1} Q_n = I` and
/// `1 <= det H_n <= min((1+eps_n)^2, 4(1+eps_n))`. Returns the largest
/// deviation from `I` and the largest bound violation.
pub fn window_report(h: &PiecewiseHamiltonian, f: &Factorization) -> (f64, f64) {
    let mut dev: f64 = 0.0;
    let mut viol: f64 = 0.0;
    for (n, w) in f.windows().iter().enumerate() {
        let gi = w.g_n.inverse().expect("invertible");
        let hn = h.integral(n as f64, n as f64 + 1.0);
        dev = dev.max((gi.transpose() * hn * gi).max_diff(&Mat2R::IDENTITY));
        let k = 1.0 + w.eps;
        let hi = (k * k).min(4.0 * k);
        viol = viol.max(1.0 - w.det_h).max(w.det_h - hi);
    }
    (dev, viol)
}

/// `L1 + L2` bound on `q1 - q2 + 2iq` from the stored `Q`: on `{tr Q - 2 > 1}`
/// its `L1` norm is at most `3q`, elsewhere its `L2` norm is at most `3 sqrt q`.
/// Returns `(l1_part, l2_part, q)`.
pub fn q_split_bound(f: &Factorization) -> Result<(f64, f64, f64)> {
    let grid = f.grid(0.0);
    let (x, wt) = gl16();
    let (mut l1, mut l2sq, mut q) = (0.0, 0.0, 0.0);
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (xi, wi) in x.iter().zip(wt) {
            let p = f.eval(a + 0.5 * (b - a) * (xi + 1.0))?.q;
            let s = 0.5 * (b - a) * wi;
            let mag = C64::new(p.a11 - p.a22, 2.0 * p.a12).norm();
            let ex = p.trace() - 2.0;
            q += s * ex;
            if ex > 1.0 {
                l1 += s * mag;
            } else {
                l2sq += s * mag * mag;
            }
        }
    }
    Ok((l1, l2sq.sqrt(), q))
}

/// `(I, R, I', R')` of the shifted Weyl function at `z = i` from the exact
/// Riccati equation `m' = -i (h1 m^2 - 2 h m + h2)`.
pub fn weyl_shift_rates(h: &PiecewiseHamiltonian, t: f64) -> Result<(f64, f64, f64, f64)> {
    let m = crate::solver::weyl_at_r(h, t, I_UNIT)?;
    let hv = h.eval(t);
    let dm = -I_UNIT * (m * m * hv.a11 - m * 2.0 * hv.a12 + hv.a22);
    Ok((m.im, m.re, dm.im, dm.re))
}
