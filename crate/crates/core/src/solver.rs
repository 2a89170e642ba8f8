//! Exact propagation of the canonical system `J M' = z H M`.
//!
//! Transfer matrices are products of closed-form cell propagators. Weyl
//! functions, densities and entropies all come from one backward sweep: the
//! row vector `(1, m_ell) M(ell <- r)` is carried from the tail down to `r`
//! and renormalized at every step, with the scale kept as a logarithm. That
//! keeps long, strongly growing Hamiltonians inside floating-point range.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{Cell, CellKind, PiecewiseHamiltonian};
use crate::io::ComplexJson;
use crate::mat2::{expm_tracefree, Mat2C, Mat2R, C64, I_UNIT, J};
use crate::par::{map_slice, Exec};

/// Largest exponential growth allowed in one propagation step.
const MAX_STEP_GROWTH: f64 = 16.0;

/// Transfer matrix `M(t, z)` with `M(0, z) = I`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TransferMatrix {
    #[serde(serialize_with = "crate::io::ser_mat2c")]
    pub m: Mat2C,
    pub t: f64,
    #[serde(serialize_with = "crate::io::ser_c64")]
    pub z: C64,
}

/// Value of a Weyl function at one point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HerglotzPoint {
    #[serde(serialize_with = "crate::io::ser_c64")]
    pub z: C64,
    #[serde(serialize_with = "crate::io::ser_c64")]
    pub m: C64,
}

impl HerglotzPoint {
    /// `I = Im m`, meaningful as `I_H` when `z = i`.
    pub fn im(&self) -> f64 {
        self.m.im
    }

    /// `R = Re m`, meaningful as `R_H` when `z = i`.
    pub fn re(&self) -> f64 {
        self.m.re
    }

    pub fn to_json(&self) -> ComplexJson {
        self.m.into()
    }
}

/// Generator of the propagator over a local span `dt` of a cell.
fn cell_generator(kind: &CellKind, dt: f64, z: C64) -> Mat2C {
    match *kind {
        CellKind::Constant(h) => (J * h).to_complex().scale(-z * dt),
        CellKind::Framed { q, v, .. } => {
            let jq = (J * q).to_complex().scale(z);
            let jv = (J * v).to_complex();
            (jq - jv).scale(C64::new(-dt, 0.0))
        }
    }
}

/// Number of equal substeps keeping each step's growth bounded.
fn substeps(cell: &Cell, dt: f64, z: C64) -> usize {
    let g = cell_generator(&cell.kind, dt, z);
    let rho = (-g.det()).sqrt();
    let growth = rho.re.abs() + 2.0 * cell.frame_rate() * dt.abs();
    ((growth / MAX_STEP_GROWTH).ceil() as usize).max(1)
}

/// Exact propagator of a cell from local time `s0` to `s1`.
pub fn cell_propagator(cell: &Cell, s0: f64, s1: f64, z: C64) -> Mat2C {
    let e = expm_tracefree(cell_generator(&cell.kind, s1 - s0, z)).expect("cell generator is trace-free");
    match cell.kind {
        CellKind::Constant(_) => e,
        CellKind::Framed { .. } => {
            let g0 = cell.frame(s0).to_complex();
            let g1 = cell.frame(s1).inverse().expect("frames are invertible").to_complex();
            g1 * e * g0
        }
    }
}

/// Propagators of consecutive substeps covering `[s0, s1]`, in time order.
pub(crate) fn cell_steps(cell: &Cell, s0: f64, s1: f64, z: C64) -> Vec<Mat2C> {
    let n = substeps(cell, s1 - s0, z);
    let h = (s1 - s0) / n as f64;
    (0..n)
        .map(|k| {
            let a = s0 + k as f64 * h;
            let b = if k + 1 == n { s1 } else { a + h };
            cell_propagator(cell, a, b, z)
        })
        .collect()
}

/// Constant-cell view of the tail over a span.
fn tail_cell(h: &PiecewiseHamiltonian, len: f64) -> Cell {
    Cell::constant(len, h.tail())
}

/// Transfer matrix `M(t, z)`.
pub fn transfer(h: &PiecewiseHamiltonian, t: f64, z: C64) -> Result<TransferMatrix> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("transfer needs t >= 0, got {t}")));
    }
    let mut m = Mat2C::IDENTITY;
    for (k, c) in h.cells().iter().enumerate() {
        let start = h.boundaries()[k];
        if start >= t {
            break;
        }
        let s1 = (t - start).min(c.len);
        for p in cell_steps(c, 0.0, s1, z) {
            m = p * m;
        }
    }
    if t > h.ell() {
        let tc = tail_cell(h, t - h.ell());
        for p in cell_steps(&tc, 0.0, tc.len, z) {
            m = p * m;
        }
    }
    Ok(TransferMatrix { m, t, z })
}

/// Transfer matrix normalized to unit max-entry, with the log of the scale.
fn transfer_scaled(h: &PiecewiseHamiltonian, t: f64, z: C64) -> (Mat2C, f64) {
    let mut m = Mat2C::IDENTITY;
    let mut log = 0.0;
    let mut push = |p: Mat2C, m: &mut Mat2C| {
        *m = p * *m;
        let s = m.max_abs();
        if s > 0.0 && s.is_finite() {
            *m = m.scale(C64::new(1.0 / s, 0.0));
            log += s.ln();
        }
    };
    for (k, c) in h.cells().iter().enumerate() {
        let start = h.boundaries()[k];
        if start >= t {
            break;
        }
        for p in cell_steps(c, 0.0, (t - start).min(c.len), z) {
            push(p, &mut m);
        }
    }
    if t > h.ell() {
        let tc = tail_cell(h, t - h.ell());
        for p in cell_steps(&tc, 0.0, tc.len, z) {
            push(p, &mut m);
        }
    }
    (m, log)
}

/// Weyl value of a constant Hamiltonian: `(a12 + i sqrt(det A)) / a11`.
pub fn weyl_constant(a: &Mat2R) -> Result<C64> {
    let (lo, _) = a.sym_eigenvalues();
    if !a.is_symmetric(1e-12) || !(lo > 0.0) || !(a.det() > 0.0) || !(a.a11 > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("constant Weyl value of {:?}", a.rows())));
    }
    let s = a.symmetrized();
    Ok(C64::new(s.a12, s.det().sqrt()) / s.a11)
}

/// Row vector `(1, m_ell) M(ell <- r)` at a set of points, normalized, with
/// its log scale.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SweepPoint {
    pub r: f64,
    pub y: [C64; 2],
    pub log_scale: f64,
}

impl SweepPoint {
    /// `m_r = y[1] / y[0]`.
    pub fn weyl(&self) -> Result<C64> {
        if self.y[0].norm() <= 1e-300 {
            return Err(Error::PoleHit(self.y[0].norm()));
        }
        Ok(self.y[1] / self.y[0])
    }

    /// `log |y[0]|` including the scale; `y[0]` is `F_r` of the entropy shift.
    pub fn log_abs_f(&self) -> f64 {
        self.log_scale + self.y[0].norm().ln()
    }
}

fn normalize(y: &mut [C64; 2], log: &mut f64) {
    let s = y[0].norm().max(y[1].norm());
    if s > 0.0 && s.is_finite() {
        y[0] /= s;
        y[1] /= s;
        *log += s.ln();
    }
}

/// Backward sweep from the tail to every point of `stops` (each must be a
/// cell boundary of `h` or in the tail). Results follow the order of `stops`.
pub(crate) fn backward_sweep(h: &PiecewiseHamiltonian, z: C64, stops: &[f64]) -> Result<Vec<SweepPoint>> {
    h.require_pd_tail()?;
    let ml = weyl_constant(&h.tail())?;
    let n = h.cells().len();
    let mut by_boundary: Vec<Option<SweepPoint>> = vec![None; n + 1];
    let mut y = [C64::new(1.0, 0.0), ml];
    let mut log = 0.0;
    let wanted: Vec<usize> =
        stops.iter().filter_map(|&r| if r >= h.ell() { None } else { h.boundary_index(r) }).collect();
    let lowest = wanted.iter().copied().min().unwrap_or(n);
    by_boundary[n] = Some(SweepPoint { r: h.ell(), y, log_scale: 0.0 });
    for k in (lowest..n).rev() {
        let c = &h.cells()[k];
        for p in cell_steps(c, 0.0, c.len, z).iter().rev() {
            y = p.apply_left(y);
            normalize(&mut y, &mut log);
        }
        by_boundary[k] = Some(SweepPoint { r: h.boundaries()[k], y, log_scale: log });
    }
    stops
        .iter()
        .map(|&r| {
            if r >= h.ell() {
                return Ok(SweepPoint { r, y: [C64::new(1.0, 0.0), ml], log_scale: 0.0 });
            }
            let k = h.boundary_index(r).ok_or_else(|| Error::InvalidInput(format!("{r} is not a cell boundary")))?;
            Ok(by_boundary[k].expect("swept"))
        })
        .collect()
}

/// Sweep down to a single point, splitting the straddling cell if needed.
pub(crate) fn sweep_to(h: &PiecewiseHamiltonian, r: f64, z: C64) -> Result<SweepPoint> {
    let hs = h.split_at(r);
    Ok(backward_sweep(&hs, z, &[r])?[0])
}

fn require_upper(z: C64) -> Result<()> {
    if !(z.im > 0.0) {
        return Err(Error::InvalidInput(format!("Weyl functions need Im z > 0, got {z}")));
    }
    Ok(())
}

/// Weyl function `m(z)` of a Hamiltonian with positive definite tail.
pub fn weyl_fc(h: &PiecewiseHamiltonian, z: C64) -> Result<HerglotzPoint> {
    require_upper(z)?;
    let m = sweep_to(h, 0.0, z)?.weyl()?;
    Ok(HerglotzPoint { z, m })
}

/// Weyl function of the shifted Hamiltonian `t -> H(t + r)`.
pub fn weyl_at_r(h: &PiecewiseHamiltonian, r: f64, z: C64) -> Result<C64> {
    require_upper(z)?;
    if r >= h.ell() {
        return weyl_constant(&h.tail());
    }
    sweep_to(h, r, z)?.weyl()
}

/// Forward composition: `m = (Phi+ + m_r Phi-) / (Theta+ + m_r Theta-)` with
/// `M(r, z)`.
pub fn compose_weyl(m_r_transfer: &Mat2C, m_r: C64) -> Result<C64> {
    let (tp, phip, tm, phim) = (m_r_transfer.a11, m_r_transfer.a12, m_r_transfer.a21, m_r_transfer.a22);
    let den = tp + m_r * tm;
    if den.norm() <= 1e-300 {
        return Err(Error::PoleHit(den.norm()));
    }
    Ok((phip + m_r * phim) / den)
}

/// Inverse composition: `m_r = (Theta+ m - Phi+) / (Phi- - Theta- m)`.
pub fn invert_weyl(m_r_transfer: &Mat2C, m: C64) -> Result<C64> {
    let (tp, phip, tm, phim) = (m_r_transfer.a11, m_r_transfer.a12, m_r_transfer.a21, m_r_transfer.a22);
    let den = phim - tm * m;
    if den.norm() <= 1e-300 {
        return Err(Error::PoleHit(den.norm()));
    }
    Ok((tp * m - phip) / den)
}

/// Spectral density `w(x) = I_tail / |Theta+(ell,x) + m_ell Theta-(ell,x)|^2`.
pub fn spectral_density(h: &PiecewiseHamiltonian, xs: &[f64]) -> Result<Vec<f64>> {
    spectral_density_with(h, xs, Exec::default())
}

/// [`spectral_density`] with an explicit execution policy.
pub fn spectral_density_with(h: &PiecewiseHamiltonian, xs: &[f64], exec: Exec) -> Result<Vec<f64>> {
    Ok(log_spectral_density_with(h, xs, exec)?.into_iter().map(f64::exp).collect())
}

/// `log w(x)` on a grid.
pub fn log_spectral_density_with(h: &PiecewiseHamiltonian, xs: &[f64], exec: Exec) -> Result<Vec<f64>> {
    h.require_pd_tail()?;
    let i_tail = weyl_constant(&h.tail())?.im;
    map_slice(exec, xs, |&x| log_density_at(h, x, i_tail)).into_iter().collect()
}

pub(crate) fn log_density_at(h: &PiecewiseHamiltonian, x: f64, i_tail: f64) -> Result<f64> {
    let p = backward_sweep(h, C64::new(x, 0.0), &[0.0])?[0];
    Ok(i_tail.ln() - 2.0 * p.log_abs_f())
}

/// Ratios `(w Phi+ + Phi-) / (w Theta+ + Theta-)` of the transfer matrix at
/// each `t`; `omega = None` means `w = infinity`, i.e. `Phi+ / Theta+`.
pub fn weyl_limit_probe(h: &PiecewiseHamiltonian, z: C64, omega: Option<f64>, ts: &[f64]) -> Vec<Result<C64>> {
    map_slice(Exec::default(), ts, |&t| {
        let (m, _) = transfer_scaled(h, t, z);
        let (num, den) = match omega {
            Some(w) => (m.a12 * w + m.a22, m.a11 * w + m.a21),
            None => (m.a12, m.a11),
        };
        if den.norm() <= 1e-300 * (1.0 + num.norm()) {
            return Err(Error::DenominatorVanished(t));
        }
        Ok(num / den)
    })
}

/// Entropy `K_H(0)` from the closed-form shift identity:
/// `log Im m(i) - log Im m_ell - 2 xi(ell) + 2 log|F_ell(i)|`.
pub fn entropy_closed_form(h: &PiecewiseHamiltonian) -> Result<f64> {
    entropy_at_r(h, 0.0)
}

/// Entropy `K_H(r)` of the shifted Hamiltonian; exactly 0 for `r >= ell`.
pub fn entropy_at_r(h: &PiecewiseHamiltonian, r: f64) -> Result<f64> {
    Ok(entropy_profile_points(h, &[r])?[0])
}

/// `K_H(r)` at several points with one sweep.
pub(crate) fn entropy_profile_points(h: &PiecewiseHamiltonian, rs: &[f64]) -> Result<Vec<f64>> {
    h.require_pd_tail()?;
    let mut hs = h.clone();
    for &r in rs {
        hs = hs.split_at(r);
    }
    let xi = hs.xi_eta();
    let xi_ell = xi.total();
    let i_tail = weyl_constant(&h.tail())?.im;
    let pts = backward_sweep(&hs, I_UNIT, rs)?;
    pts.iter()
        .map(|p| {
            if p.r >= h.ell() {
                return Ok(0.0);
            }
            let m = p.weyl()?;
            Ok(m.im.ln() - i_tail.ln() - 2.0 * (xi_ell - xi.xi_at(p.r)) + 2.0 * p.log_abs_f())
        })
        .collect()
}
