//! Piecewise Hamiltonians with a constant tail.
//!
//! A Hamiltonian is a finite list of cells followed by a constant positive
//! matrix on `[ell, inf)`. A cell either holds a constant symmetric matrix or
//! a *framed* matrix function `H(s) = (e^{sJV} g0)^T q (e^{sJV} g0)`, which is
//! what a piecewise-constant potential produces. Framed cells have constant
//! determinant and closed-form transfer matrices, so every operation here is
//! exact for both kinds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::{expm_tracefree_real, Mat2R, J};
use crate::quadrature::gl16;

/// Matrix content of one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CellKind {
    /// Constant symmetric matrix.
    Constant(Mat2R),
    /// `H(s) = G(s)^T q G(s)` with `G(s) = exp(s J v) g0`, `v` symmetric.
    Framed { q: Mat2R, v: Mat2R, g0: Mat2R },
}

/// One cell: a length and its matrix content.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub len: f64,
    pub kind: CellKind,
}

impl Cell {
    pub fn constant(len: f64, h: Mat2R) -> Self {
        Cell { len, kind: CellKind::Constant(h) }
    }

    pub fn framed(len: f64, q: Mat2R, v: Mat2R, g0: Mat2R) -> Self {
        Cell { len, kind: CellKind::Framed { q, v, g0 } }
    }

    /// Frame `G(s)`; identity for constant cells.
    pub fn frame(&self, s: f64) -> Mat2R {
        match self.kind {
            CellKind::Constant(_) => Mat2R::IDENTITY,
            CellKind::Framed { v, g0, .. } => frame_exp(&v, s) * g0,
        }
    }

    /// Value of H at local time `s` in `[0, len]`.
    pub fn value(&self, s: f64) -> Mat2R {
        match self.kind {
            CellKind::Constant(h) => h,
            CellKind::Framed { q, .. } => {
                let g = self.frame(s);
                (g.transpose() * q * g).symmetrized()
            }
        }
    }

    /// Determinant of H, constant across the cell.
    pub fn det(&self) -> f64 {
        match self.kind {
            CellKind::Constant(h) => h.det(),
            CellKind::Framed { q, g0, .. } => {
                let d = g0.det();
                q.det() * d * d
            }
        }
    }

    /// Exponential rate at which the frame can grow (0 for constant cells).
    pub fn frame_rate(&self) -> f64 {
        match self.kind {
            CellKind::Constant(_) => 0.0,
            CellKind::Framed { v, .. } => v.det().abs().sqrt(),
        }
    }

    /// Number of 16-point panels that resolve the cell over a span of `dt`.
    pub(crate) fn panels(&self, dt: f64) -> usize {
        let r = self.frame_rate();
        if r == 0.0 {
            return 1;
        }
        ((4.0 * r * dt.abs()).ceil() as usize).clamp(1, 1 << 20)
    }

    /// Integral of `f(H(s))` over local `[s0, s1]`.
    pub fn integral_fn<F: Fn(Mat2R) -> Mat2R>(&self, s0: f64, s1: f64, f: F) -> Mat2R {
        if s1 <= s0 {
            return Mat2R::ZERO;
        }
        match self.kind {
            CellKind::Constant(h) => f(h).scale(s1 - s0),
            CellKind::Framed { .. } => {
                let (x, w) = gl16();
                let n = self.panels(s1 - s0);
                let h = (s1 - s0) / n as f64;
                let mut acc = Mat2R::ZERO;
                for p in 0..n {
                    let a = s0 + p as f64 * h;
                    let mut part = Mat2R::ZERO;
                    for (xi, wi) in x.iter().zip(w) {
                        part += f(self.value(a + 0.5 * h * (xi + 1.0))).scale(*wi);
                    }
                    acc += part.scale(0.5 * h);
                }
                acc
            }
        }
    }

    /// Integral of H over local `[s0, s1]`.
    pub fn integral(&self, s0: f64, s1: f64) -> Mat2R {
        self.integral_fn(s0, s1, |h| h)
    }

    /// Split at local time `s`, returning the two halves.
    pub fn split(&self, s: f64) -> (Cell, Cell) {
        let first = Cell { len: s, kind: self.kind };
        let kind = match self.kind {
            CellKind::Constant(h) => CellKind::Constant(h),
            CellKind::Framed { q, v, .. } => CellKind::Framed { q, v, g0: self.frame(s) },
        };
        (first, Cell { len: self.len - s, kind })
    }

    fn conjugated(&self, a: &Mat2R) -> Cell {
        let kind = match self.kind {
            CellKind::Constant(h) => CellKind::Constant((a.transpose() * h * *a).symmetrized()),
            CellKind::Framed { q, v, g0 } => CellKind::Framed { q, v, g0: g0 * *a },
        };
        Cell { len: self.len, kind }
    }

    fn sample_values(&self) -> [Mat2R; 3] {
        [self.value(0.0), self.value(0.5 * self.len), self.value(self.len)]
    }
}

/// `exp(s J v)` for symmetric `v`.
pub(crate) fn frame_exp(v: &Mat2R, s: f64) -> Mat2R {
    expm_tracefree_real((J * *v).scale(s)).expect("J v is trace-free for symmetric v")
}

/// Outcome of [`PiecewiseHamiltonian::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum Classification {
    ValidNontrivialSingular,
    Trivial,
    Invalid(String),
}

/// Cells of constant or framed matrices followed by a constant tail.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseHamiltonian {
    cells: Vec<Cell>,
    tail: Mat2R,
    starts: Vec<f64>,
}

impl PiecewiseHamiltonian {
    /// Build from cells and tail. Only structural checks happen here (finite
    /// data, positive lengths, invertible frames); use [`Self::validate`] for
    /// the Hamiltonian conditions.
    pub fn new(cells: Vec<Cell>, tail: Mat2R) -> Result<Self> {
        for (i, c) in cells.iter().enumerate() {
            if !(c.len > 0.0) || !c.len.is_finite() {
                return Err(Error::InvalidHamiltonian(format!("cell {i} has non-positive length {}", c.len)));
            }
            let finite = match c.kind {
                CellKind::Constant(h) => h.is_finite(),
                CellKind::Framed { q, v, g0 } => q.is_finite() && v.is_finite() && g0.is_finite(),
            };
            if !finite {
                return Err(Error::InvalidHamiltonian(format!("cell {i} has non-finite entries")));
            }
            if let CellKind::Framed { v, g0, .. } = c.kind {
                if !v.is_symmetric(1e-12) {
                    return Err(Error::InvalidHamiltonian(format!("cell {i} potential is not symmetric")));
                }
                if g0.det().abs() <= 1e-300 {
                    return Err(Error::InvalidHamiltonian(format!("cell {i} frame is singular")));
                }
            }
        }
        if !tail.is_finite() {
            return Err(Error::InvalidHamiltonian("tail has non-finite entries".into()));
        }
        let mut starts = Vec::with_capacity(cells.len() + 1);
        let mut t = 0.0;
        for c in &cells {
            starts.push(t);
            t += c.len;
        }
        starts.push(t);
        Ok(PiecewiseHamiltonian { cells, tail, starts })
    }

    /// Constant cells `(len, h)` with a tail.
    pub fn from_constant(cells: &[(f64, Mat2R)], tail: Mat2R) -> Result<Self> {
        Self::new(cells.iter().map(|&(l, h)| Cell::constant(l, h)).collect(), tail)
    }

    /// Constant Hamiltonian `a` on the whole half-line.
    pub fn constant(a: Mat2R) -> Self {
        Self::new(Vec::new(), a).expect("finite constant")
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn tail(&self) -> Mat2R {
        self.tail
    }

    /// Start of the tail.
    pub fn ell(&self) -> f64 {
        *self.starts.last().unwrap()
    }

    /// Cell start times followed by `ell`.
    pub fn boundaries(&self) -> &[f64] {
        &self.starts
    }

    /// Cell index and local time for `t`, right-continuous; `None` in the tail.
    pub fn locate(&self, t: f64) -> Option<(usize, f64)> {
        if t >= self.ell() || self.cells.is_empty() {
            return None;
        }
        let k = match self.starts.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        let k = k.min(self.cells.len() - 1);
        Some((k, (t - self.starts[k]).max(0.0)))
    }

    /// H(t), right-continuous at boundaries.
    pub fn eval(&self, t: f64) -> Mat2R {
        match self.locate(t) {
            Some((k, s)) => self.cells[k].value(s),
            None => self.tail,
        }
    }

    /// True when every cell and the tail have determinant 1 within `tol`.
    pub fn is_unit_det(&self, tol: f64) -> bool {
        self.cells.iter().all(|c| (c.det() - 1.0).abs() <= tol) && (self.tail.det() - 1.0).abs() <= tol
    }

    pub(crate) fn require_unit_det(&self) -> Result<()> {
        for (i, c) in self.cells.iter().enumerate() {
            if (c.det() - 1.0).abs() > 1e-8 {
                return Err(Error::NotUnitDeterminant(format!("cell {i} has det {}", c.det())));
            }
        }
        if (self.tail.det() - 1.0).abs() > 1e-8 {
            return Err(Error::NotUnitDeterminant(format!("tail has det {}", self.tail.det())));
        }
        Ok(())
    }

    pub(crate) fn require_pd_tail(&self) -> Result<()> {
        let (lo, _) = self.tail.sym_eigenvalues();
        if !self.tail.is_symmetric(1e-12) || !(lo > 0.0) || !(self.tail.det() > 0.0) {
            return Err(Error::NotPositiveDefinite("tail".into()));
        }
        Ok(())
    }

    /// Classify against the Hamiltonian conditions: each cell PSD with
    /// positive trace, tail PSD with positive trace (singularity), and the
    /// triviality test.
    pub fn validate(&self) -> Classification {
        for (i, c) in self.cells.iter().enumerate() {
            let (psd, tr) = match c.kind {
                CellKind::Constant(h) => (h.is_psd(), h.trace()),
                CellKind::Framed { q, .. } => (q.is_psd(), q.trace()),
            };
            if !psd {
                return Classification::Invalid(format!("cell {i} not PSD"));
            }
            if !(tr > 0.0) {
                return Classification::Invalid(format!("cell {i} has zero trace"));
            }
        }
        if !self.tail.is_psd() {
            return Classification::Invalid("tail not PSD".into());
        }
        if !(self.tail.trace() > 0.0) {
            return Classification::Invalid("tail has zero trace".into());
        }
        if self.is_trivial() {
            return Classification::Trivial;
        }
        Classification::ValidNontrivialSingular
    }

    fn is_trivial(&self) -> bool {
        let rank_one = |h: &Mat2R| h.det().abs() <= 1e-12 * h.trace() * h.trace();
        let p = self.tail;
        if !rank_one(&p) {
            return false;
        }
        let proportional = |h: &Mat2R| {
            let (a, b) = ([h.a11, h.a12, h.a22], [p.a11, p.a12, p.a22]);
            let tol = 1e-12 * h.trace().abs() * p.trace().abs();
            (a[0] * b[1] - a[1] * b[0]).abs() <= tol
                && (a[0] * b[2] - a[2] * b[0]).abs() <= tol
                && (a[1] * b[2] - a[2] * b[1]).abs() <= tol
        };
        self.cells.iter().all(|c| c.sample_values().iter().all(|h| rank_one(h) && proportional(h)))
    }

    /// Integral of H over `[a, b]`, exact for constant cells.
    pub fn integral(&self, a: f64, b: f64) -> Mat2R {
        self.integral_fn(a, b, |h| h)
    }

    /// Integral of `f(H(t))` over `[a, b]`.
    pub fn integral_fn<F: Fn(Mat2R) -> Mat2R + Copy>(&self, a: f64, b: f64, f: F) -> Mat2R {
        let mut acc = Mat2R::ZERO;
        if b <= a {
            return acc;
        }
        for (k, c) in self.cells.iter().enumerate() {
            let (c0, c1) = (self.starts[k], self.starts[k + 1]);
            let (lo, hi) = (a.max(c0), b.min(c1));
            if hi > lo {
                acc += c.integral_fn(lo - c0, (hi - c0).min(c.len), f);
            }
        }
        let lo = a.max(self.ell());
        if b > lo {
            acc += f(self.tail).scale(b - lo);
        }
        acc
    }

    /// Same Hamiltonian with a cell boundary at `t` (no-op if one exists or
    /// `t` is in the tail).
    pub fn split_at(&self, t: f64) -> Self {
        let tol = 1e-12 * (1.0 + t.abs());
        if t <= 0.0 || t >= self.ell() || self.starts.iter().any(|s| (s - t).abs() <= tol) {
            return self.clone();
        }
        let (k, s) = self.locate(t).expect("t inside cells");
        let (left, right) = self.cells[k].split(s);
        let mut cells = self.cells.clone();
        cells.splice(k..=k, [left, right]);
        Self::new(cells, self.tail).expect("split keeps structure")
    }

    /// Index of the boundary equal to `t` after splitting there.
    pub(crate) fn boundary_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * (1.0 + t.abs());
        self.starts.iter().position(|s| (s - t).abs() <= tol)
    }

    /// Cells covering `[0, r)` (splitting the straddling cell).
    pub fn head_cells(&self, r: f64) -> Vec<Cell> {
        let h = self.split_at(r);
        match h.boundary_index(r) {
            Some(k) => h.cells[..k].to_vec(),
            None if r >= self.ell() => h.cells.clone(),
            None => Vec::new(),
        }
    }

    /// The shifted Hamiltonian t -> H(t + r).
    pub fn shifted(&self, r: f64) -> Self {
        if r >= self.ell() {
            return Self::constant(self.tail);
        }
        let h = self.split_at(r);
        let k = h.boundary_index(r).unwrap_or(0);
        Self::new(h.cells[k..].to_vec(), self.tail).expect("shift keeps structure")
    }

    /// Same cells on `[0, r)` with a new tail.
    pub fn with_tail_after(&self, r: f64, tail: Mat2R) -> Self {
        Self::new(self.head_cells(r), tail).expect("head keeps structure")
    }

    /// The conjugated Hamiltonian `A^T H A`.
    pub fn conjugate_sl2(&self, a: &Mat2R) -> Result<Self> {
        if !a.is_sl2(1e-10) {
            return Err(Error::NotSl2 { det: a.det() });
        }
        let cells = self.cells.iter().map(|c| c.conjugated(a)).collect();
        Self::new(cells, (a.transpose() * self.tail * *a).symmetrized())
    }

    /// The dual Hamiltonian `J^T H J`.
    pub fn dual(&self) -> Self {
        self.conjugate_sl2(&J).expect("J is in SL(2,R)")
    }

    /// Equivalent Hamiltonian with unit determinant, obtained by the time
    /// change along the determinant clock. Cells already at det 1 (within
    /// 1e-13) are kept bit for bit.
    pub fn renormalize_det1(&self) -> Result<Self> {
        let mut cells = Vec::with_capacity(self.cells.len());
        for (i, c) in self.cells.iter().enumerate() {
            let d = c.det();
            if !(d > 1e-14) {
                return Err(Error::DegenerateCell { index: i, det: d });
            }
            if (d - 1.0).abs() <= 1e-13 {
                cells.push(*c);
                continue;
            }
            let s = d.sqrt();
            let kind = match c.kind {
                CellKind::Constant(h) => CellKind::Constant(h.scale(1.0 / s)),
                CellKind::Framed { q, v, g0 } => CellKind::Framed { q: q.scale(1.0 / s), v: v.scale(1.0 / s), g0 },
            };
            cells.push(Cell { len: c.len * s, kind });
        }
        let d = self.tail.det();
        if !(d > 1e-14) {
            return Err(Error::DegenerateCell { index: self.cells.len(), det: d });
        }
        let tail = if (d - 1.0).abs() <= 1e-13 { self.tail } else { self.tail.scale(1.0 / d.sqrt()) };
        Self::new(cells, tail)
    }

    /// Determinant clock and its inverse.
    pub fn xi_eta(&self) -> XiProfile {
        let slopes: Vec<f64> = self.cells.iter().map(|c| c.det().max(0.0).sqrt()).collect();
        let mut xi = Vec::with_capacity(self.starts.len());
        let mut acc = 0.0;
        xi.push(0.0);
        for (c, s) in self.cells.iter().zip(&slopes) {
            acc += c.len * s;
            xi.push(acc);
        }
        XiProfile { breakpoints: self.starts.clone(), xi, slopes, tail_slope: self.tail.det().max(0.0).sqrt() }
    }

    /// Bernstein-Szego approximation: H on `[0, r)` and the constant matrix
    /// encoding `(I_H(r), R_H(r))` after `r`.
    pub fn bernstein_szego(&self, r: f64) -> Result<Self> {
        let m = crate::solver::weyl_at_r(self, r, crate::mat2::I_UNIT)?;
        let (re, im) = (m.re, m.im);
        let tail = Mat2R::sym(1.0 / im, re / im, (im * im + re * re) / im);
        Ok(self.with_tail_after(r, tail))
    }
}

/// Piecewise-linear determinant clock `xi(t) = int_0^t sqrt(det H)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XiProfile {
    /// Cell boundaries, starting at 0 and ending at `ell`.
    pub breakpoints: Vec<f64>,
    /// Clock values at the breakpoints.
    pub xi: Vec<f64>,
    /// `sqrt(det H)` per cell.
    pub slopes: Vec<f64>,
    pub tail_slope: f64,
}

impl XiProfile {
    pub fn xi_at(&self, t: f64) -> f64 {
        let ell = *self.breakpoints.last().unwrap();
        if t >= ell {
            return self.xi.last().unwrap() + self.tail_slope * (t - ell);
        }
        let k = match self.breakpoints.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(k) => k,
            Err(k) => k - 1,
        };
        self.xi[k] + self.slopes[k] * (t - self.breakpoints[k])
    }

    pub fn total(&self) -> f64 {
        *self.xi.last().unwrap()
    }

    /// Leftmost time at which the clock reaches `n`.
    pub fn eta(&self, n: usize) -> Result<f64> {
        let target = n as f64;
        if n == 0 {
            return Ok(0.0);
        }
        for k in 0..self.slopes.len() {
            let (x0, x1) = (self.xi[k], self.xi[k + 1]);
            if x0 >= target {
                return Ok(self.breakpoints[k]);
            }
            if x1 >= target && self.slopes[k] > 0.0 {
                let t = self.breakpoints[k] + (target - x0) / self.slopes[k];
                return Ok(t.min(self.breakpoints[k + 1]));
            }
        }
        let (ell, x) = (*self.breakpoints.last().unwrap(), self.total());
        if x >= target {
            return Ok(ell);
        }
        if self.tail_slope > 0.0 {
            return Ok(ell + (target - x) / self.tail_slope);
        }
        Err(Error::EtaUnreachable(n))
    }
}

#[derive(Serialize, Deserialize)]
struct CellJson {
    len: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    h: Option<Mat2R>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    q: Option<Mat2R>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    v: Option<Mat2R>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    g0: Option<Mat2R>,
}

#[derive(Serialize, Deserialize)]
struct TailJson {
    h: Mat2R,
}

#[derive(Serialize, Deserialize)]
struct HamiltonianJson {
    cells: Vec<CellJson>,
    tail: TailJson,
}

impl Serialize for PiecewiseHamiltonian {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let cells = self
            .cells
            .iter()
            .map(|c| match c.kind {
                CellKind::Constant(h) => CellJson { len: c.len, h: Some(h), q: None, v: None, g0: None },
                CellKind::Framed { q, v, g0 } => CellJson { len: c.len, h: None, q: Some(q), v: Some(v), g0: Some(g0) },
            })
            .collect();
        HamiltonianJson { cells, tail: TailJson { h: self.tail } }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PiecewiseHamiltonian {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = HamiltonianJson::deserialize(d)?;
        let mut cells = Vec::with_capacity(raw.cells.len());
        for (i, c) in raw.cells.into_iter().enumerate() {
            let kind = match (c.h, c.q, c.v, c.g0) {
                (Some(h), None, None, None) => CellKind::Constant(h),
                (None, Some(q), v, g0) => {
                    CellKind::Framed { q, v: v.unwrap_or(Mat2R::ZERO), g0: g0.unwrap_or(Mat2R::IDENTITY) }
                }
                _ => {
                    return Err(D::Error::custom(format!(
                        "cell {i}: give either \"h\" or \"q\" (with optional \"v\", \"g0\")"
                    )))
                }
            };
            cells.push(Cell { len: c.len, kind });
        }
        PiecewiseHamiltonian::new(cells, raw.tail.h).map_err(D::Error::custom)
    }
}
