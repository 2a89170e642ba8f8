//! Exactly solvable Hamiltonians with reference values attached, the Dirac
//! reduction, and random instance generators for property sweeps.
//!
//! Oracles here are written out from closed forms and never call the solver,
//! so tests comparing the two are independent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{frame_exp, Cell, PiecewiseHamiltonian};
use crate::mat2::{Mat2R, C64, I_UNIT};

/// One cell of a Dirac potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracCell {
    pub len: f64,
    pub v: Mat2R,
}

/// Piecewise-constant real symmetric trace-free potential on `[0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracPotential {
    pub cells: Vec<DiracCell>,
}

impl DiracPotential {
    pub fn new(cells: Vec<DiracCell>) -> Result<Self> {
        for (i, c) in cells.iter().enumerate() {
            if !(c.len > 0.0) || !c.len.is_finite() || !c.v.is_finite() {
                return Err(Error::InvalidInput(format!("potential cell {i} has bad length or entries")));
            }
            if c.v.a12 != c.v.a21 {
                return Err(Error::InvalidInput(format!("potential cell {i} is not symmetric")));
            }
            if c.v.trace() != 0.0 {
                return Err(Error::NonTraceFree { trace: c.v.trace() });
            }
        }
        Ok(DiracPotential { cells })
    }

    /// Scalar potential `diag(v, -v)` from `(len, v)` pieces.
    pub fn diagonal(pieces: &[(f64, f64)]) -> Result<Self> {
        Self::new(pieces.iter().map(|&(len, v)| DiracCell { len, v: Mat2R::diag(v, -v) }).collect())
    }

    /// Extent `T`.
    pub fn extent(&self) -> f64 {
        self.cells.iter().map(|c| c.len).sum()
    }

    /// Transfer matrix `N0` at each cell start and at `T`.
    pub fn frames(&self) -> Vec<Mat2R> {
        let mut n = Mat2R::IDENTITY;
        let mut out = Vec::with_capacity(self.cells.len() + 1);
        out.push(n);
        for c in &self.cells {
            n = frame_exp(&c.v, c.len) * n;
            out.push(n);
        }
        out
    }
}

/// Canonical system of a Dirac operator: `N0' = J V N0`, `H = N0^T N0`,
/// one framed cell per potential cell, tail `N0(T)^T N0(T)`.
pub fn dirac_to_hamiltonian(pot: &DiracPotential) -> Result<PiecewiseHamiltonian> {
    let pot = DiracPotential::new(pot.cells.clone())?;
    let frames = pot.frames();
    let cells = pot.cells.iter().zip(&frames).map(|(c, g)| Cell::framed(c.len, Mat2R::IDENTITY, c.v, *g)).collect();
    let n = frames[frames.len() - 1];
    PiecewiseHamiltonian::new(cells, (n.transpose() * n).symmetrized())
}

/// Reference values for the singular interval example.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Example1Oracle {
    pub l: f64,
    pub ktilde: f64,
    pub entropy: f64,
}

impl Example1Oracle {
    /// `m(z) = i / (1 - i z L)`.
    pub fn weyl(&self, z: C64) -> C64 {
        I_UNIT / (1.0 - I_UNIT * z * self.l)
    }

    /// `w(x) = 1 / (1 + x^2 L^2)`.
    pub fn density(&self, x: f64) -> f64 {
        1.0 / (1.0 + x * x * self.l * self.l)
    }
}

/// `diag(1, 0)` on `[0, L]`, identity after.
pub fn example1(l: f64) -> Result<(PiecewiseHamiltonian, Example1Oracle)> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidInput(format!("L must be positive, got {l}")));
    }
    let h = PiecewiseHamiltonian::from_constant(&[(l, Mat2R::diag(1.0, 0.0))], Mat2R::IDENTITY)?;
    Ok((h, Example1Oracle { l, ktilde: 2.0 * l, entropy: (1.0 + l).ln() }))
}

/// Reference values for the constant off-diagonal Dirac potential.
#[derive(Clone, Debug, Serialize)]
pub struct Example2Oracle {
    pub eps: f64,
    pub t: usize,
    pub ktilde: f64,
    /// Set outside the long-time regime `eps^2 T >= 10`.
    pub warning: Option<String>,
}

impl Example2Oracle {
    /// Closed-form window sum of the oscillation functional.
    pub fn ktilde_sum(eps: f64, t: usize) -> f64 {
        let e2 = 2.0 * eps;
        let e4 = 4.0 * eps;
        let inner = (-(-e4).exp_m1()) * e4.exp_m1() / (e4 * e4 / 4.0) - 4.0;
        let edge = (e2.exp_m1() / e2 + 1.0) * (-(-e2).exp_m1() / e2 + 1.0) - 4.0;
        (t as f64 - 1.0) * inner + edge
    }

    /// `P*_{2r}(x)` for real `x` from the eigenvalues `mu = ix +- sqrt(eps^2 - x^2)`.
    pub fn pstar(&self, r: f64, x: f64) -> C64 {
        let e = self.eps;
        let s = C64::new(e * e - x * x, 0.0).sqrt();
        let mp = I_UNIT * x + s;
        let mm = I_UNIT * x - s;
        let d = mp - mm;
        (e + mp) / d * (mm * r).exp() - (e + mm) / d * (mp * r).exp()
    }

    /// Spectral density `|P*_{2T}(x)|^-2`.
    pub fn density(&self, x: f64) -> f64 {
        self.pstar(self.t as f64, x).norm_sqr().recip()
    }
}

/// Dirac potential `((0, eps), (eps, 0))` on `[0, T]` in unit cells, so the
/// windows of the oscillation functional are `[n, n + 2]`.
pub fn example2(eps: f64, t: usize) -> Result<(PiecewiseHamiltonian, Example2Oracle)> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1/2], got {eps}")));
    }
    if t == 0 {
        return Err(Error::InvalidInput("T must be positive".into()));
    }
    let warning = (eps * eps * (t as f64) < 10.0)
        .then(|| format!("eps^2 T = {} is below the long-time regime (>= 10)", eps * eps * t as f64));
    let pot = DiracPotential::new(vec![DiracCell { len: 1.0, v: Mat2R::sym(0.0, eps, 0.0) }; t])?;
    let h = dirac_to_hamiltonian(&pot)?;
    Ok((h, Example2Oracle { eps, t, ktilde: Example2Oracle::ktilde_sum(eps, t), warning }))
}

/// The potential behind an Example 3 instance; its factorization
/// `G = N0, Q = I, V = diag(v, -v)` is exact.
#[derive(Clone, Debug, Serialize)]
pub struct Example3Oracle {
    pub potential: DiracPotential,
}

impl Example3Oracle {
    /// `H(t) = ((cosh 2phi, sinh 2phi), (sinh 2phi, cosh 2phi))`, `phi = int_0^t v`.
    pub fn value(&self, t: f64) -> Mat2R {
        let mut phi = 0.0;
        let mut s = 0.0;
        for c in &self.potential.cells {
            let d = (t - s).clamp(0.0, c.len);
            phi += c.v.a11 * d;
            s += c.len;
        }
        let (ch, sh) = ((2.0 * phi).cosh(), (2.0 * phi).sinh());
        Mat2R::sym(ch, sh, ch)
    }
}

/// Dirac system with scalar potential `diag(v, -v)` given as `(len, v)` pieces.
pub fn example3(pieces: &[(f64, f64)]) -> Result<(PiecewiseHamiltonian, Example3Oracle)> {
    let potential = DiracPotential::diagonal(pieces)?;
    let h = dirac_to_hamiltonian(&potential)?;
    Ok((h, Example3Oracle { potential }))
}

/// Random symmetric det-1 matrix with diagonal entries in `[lo, hi]`.
pub fn random_det1<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> Mat2R {
    loop {
        let a: f64 = rng.gen_range(lo..=hi);
        let b: f64 = rng.gen_range(-hi..=hi);
        let c = (1.0 + b * b) / a;
        if (lo..=hi).contains(&c) {
            return Mat2R::sym(a, b, c);
        }
    }
}

/// Random det-1 FC Hamiltonian: 1 to `max_cells` constant cells of length in
/// `[1/4, 2]` and a det-1 tail, diagonal entries in `[1/4, 4]`.
pub fn random_det1_fc<R: Rng + ?Sized>(rng: &mut R, max_cells: usize) -> PiecewiseHamiltonian {
    let n = rng.gen_range(1..=max_cells.max(1));
    let cells: Vec<(f64, Mat2R)> = (0..n).map(|_| (rng.gen_range(0.25..=2.0), random_det1(rng, 0.25, 4.0))).collect();
    let tail = random_det1(rng, 0.25, 4.0);
    PiecewiseHamiltonian::from_constant(&cells, tail).expect("finite random data")
}

/// Random Example 3 potential: up to `max_cells` pieces, `|v| <= vmax`.
pub fn random_example3_pieces<R: Rng + ?Sized>(rng: &mut R, max_cells: usize, vmax: f64) -> Vec<(f64, f64)> {
    let n = rng.gen_range(1..=max_cells.max(1));
    (0..n).map(|_| (rng.gen_range(0.25..=1.5), rng.gen_range(-vmax..=vmax))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirac_examples() {
        let zero = DiracPotential::diagonal(&[(2.0, 0.0)]).unwrap();
        let h = dirac_to_hamiltonian(&zero).unwrap();
        assert!(h.eval(1.0).max_diff(&Mat2R::IDENTITY) < 1e-15);
        assert!(h.tail().max_diff(&Mat2R::IDENTITY) < 1e-15);

        let (h, o) = example3(&[(1.0, 1.0)]).unwrap();
        let c2 = 2f64.cosh();
        let s2 = 2f64.sinh();
        assert!(h.tail().max_diff(&Mat2R::sym(c2, s2, c2)) < 1e-13);
        for t in [0.0, 0.3, 0.99] {
            assert!(h.eval(t).max_diff(&o.value(t)) < 1e-13);
        }
        assert!(h.is_unit_det(1e-12));

        let eps = 0.1;
        let (h, _) = example2(eps, 30).unwrap();
        for t in [0.0, 0.5, 7.25, 29.9] {
            let want = Mat2R::diag((-2.0 * eps * t).exp(), (2.0 * eps * t).exp());
            assert!(h.eval(t).max_diff(&want) < 1e-12 * want.max_abs());
        }
    }

    #[test]
    fn bad_potentials() {
        let bad = DiracPotential::new(vec![DiracCell { len: 1.0, v: Mat2R::diag(1.0, 0.0) }]);
        assert!(matches!(bad, Err(Error::NonTraceFree { .. })));
        assert!(DiracPotential::new(vec![DiracCell { len: 1.0, v: Mat2R::new(0.0, 1.0, 2.0, 0.0) }]).is_err());
        assert!(example2(0.7, 10).is_err());
        assert!(example1(0.0).is_err());
    }

    #[test]
    fn example2_oracles() {
        let (_, o) = example2(0.1, 5).unwrap();
        assert!(o.warning.is_some());
        // The window sum against brute force over windows.
        let eps: f64 = 0.1;
        let t = 5usize;
        let mut brute = 0.0;
        for n in 0..t + 2 {
            let (a, b) = (n as f64, n as f64 + 2.0);
            let tt = t as f64;
            let i1 = |a: f64, b: f64| ((-2.0 * eps * a).exp() - (-2.0 * eps * b).exp()) / (2.0 * eps);
            let i2 = |a: f64, b: f64| ((2.0 * eps * b).exp() - (2.0 * eps * a).exp()) / (2.0 * eps);
            let (ca, cb) = (a.min(tt), b.min(tt));
            let x = i1(ca, cb) + (b - cb.max(a)) * (-2.0 * eps * tt).exp();
            let y = i2(ca, cb) + (b - cb.max(a)) * (2.0 * eps * tt).exp();
            brute += x * y - 4.0;
        }
        assert!((brute - o.ktilde).abs() < 1e-12);
        // P* at r = 0 is 1, and the density approaches 1 as eps -> 0.
        assert!((o.pstar(0.0, 0.03) - 1.0).norm() < 1e-15);
        let small = Example2Oracle { eps: 1e-6, t: 3, ktilde: 0.0, warning: None };
        assert!((small.density(5e-7) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn example_functionals_match_oracles() {
        for (eps, t) in [(0.1, 500), (0.05, 4000)] {
            let (h, o) = example2(eps, t).unwrap();
            let kt = crate::functionals::ktilde(&h).unwrap().total;
            assert!((kt - o.ktilde).abs() < 1e-9, "{eps} {t}: {kt} vs {}", o.ktilde);
        }
        let (h, o) = example1(5.0).unwrap();
        let m = crate::solver::weyl_fc(&h, I_UNIT).unwrap().m;
        assert!((m - o.weyl(I_UNIT)).norm() < 1e-12);
    }

    #[test]
    fn random_generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let h = random_det1_fc(&mut rng, 12);
            assert!(h.is_unit_det(1e-12));
            assert!(h.cells().len() <= 12);
            for c in h.cells() {
                let v = c.value(0.0);
                assert!((0.25..=4.0).contains(&v.a11) && (0.25..=4.0).contains(&v.a22));
            }
        }
    }
}
