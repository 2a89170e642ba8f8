//! Gauss-Legendre quadrature: fixed rules, adaptive bisection, and the
//! Poisson-weighted logarithmic integral over the real line.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::par::{map_indexed, pairwise_sum, Exec};

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { t } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (t * p - pm) / (t * t - 1.0);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Cached 16-point rule.
pub fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// 16-point Gauss-Legendre estimate of the integral of `f` over [a, b].
pub fn gl_integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let (x, w) = gl16();
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * x.iter().zip(w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>()
}

/// Composite 16-point rule on `panels` equal panels.
pub fn gl_composite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels).map(|k| gl_integrate(&f, a + k as f64 * h, a + (k + 1) as f64 * h)).sum()
}

/// Adaptive bisection on top of the 16-point rule; stops when a panel and its
/// two halves agree to `tol` (absolute, scaled by panel share).
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> Result<f64> {
        let m = 0.5 * (a + b);
        let l = gl_integrate(f, a, m);
        let r = gl_integrate(f, m, b);
        let diff = (l + r - whole).abs();
        if diff <= tol || (b - a).abs() < 1e-13 * (1.0 + a.abs()) {
            return Ok(l + r);
        }
        if depth >= 40 {
            return Err(Error::QuadratureNotConverged { last: l + r, previous: whole });
        }
        Ok(rec(f, a, m, l, 0.5 * tol, depth + 1)? + rec(f, m, b, r, 0.5 * tol, depth + 1)?)
    }
    let whole = gl_integrate(&f, a, b);
    rec(&f, a, b, whole, tol, 0)
}

/// Options for [`poisson_log_integral`].
#[derive(Clone, Copy, Debug)]
pub struct PoissonOptions {
    /// Stop once successive refinements differ by less than this.
    pub tol: f64,
    pub min_level: u32,
    pub max_level: u32,
    pub exec: Exec,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        PoissonOptions { tol: 1e-7, min_level: 4, max_level: 14, exec: Exec::default() }
    }
}

/// Result of a Poisson-weighted integral with its refinement history.
#[derive(Clone, Copy, Debug)]
pub struct PoissonResult {
    pub value: f64,
    pub previous: f64,
    pub level: u32,
}

impl PoissonResult {
    pub fn error_estimate(&self) -> f64 {
        (self.value - self.previous).abs()
    }
}

/// theta(u) = (pi/2) psi(u) with psi(u) = (15u - 10u^3 + 3u^5)/8, which
/// flattens both ends of [-1, 1] to third order.
fn smooth_map(u: f64) -> (f64, f64) {
    let u2 = u * u;
    let psi = u * (15.0 - 10.0 * u2 + 3.0 * u2 * u2) / 8.0;
    let dpsi = 15.0 * (1.0 - u2) * (1.0 - u2) / 8.0;
    (FRAC_PI_2 * psi, FRAC_PI_2 * dpsi)
}

/// (1/pi) * integral over R of g(x)/(1+x^2), computed as (1/pi) * integral of
/// g(tan theta) over (-pi/2, pi/2) with composite Gauss-Legendre on 2^k panels.
/// Nodes never touch the endpoints.
pub fn poisson_log_integral<G>(g: G, opts: &PoissonOptions) -> Result<PoissonResult>
where
    G: Fn(f64) -> f64 + Sync + Send,
{
    let (x, w) = gl16();
    let level_sum = |k: u32| -> f64 {
        let panels = 1usize << k;
        let h = 2.0 / panels as f64;
        let parts = map_indexed(opts.exec, panels, |p| {
            let a = -1.0 + p as f64 * h;
            let mut s = 0.0;
            for (xi, wi) in x.iter().zip(w) {
                let u = a + 0.5 * h * (xi + 1.0);
                let (theta, dtheta) = smooth_map(u);
                if dtheta == 0.0 {
                    continue;
                }
                s += wi * dtheta * g(theta.tan());
            }
            0.5 * h * s
        });
        pairwise_sum(&parts) / PI
    };
    let mut prev = level_sum(opts.min_level.saturating_sub(1));
    let mut cur = prev;
    for k in opts.min_level..=opts.max_level {
        cur = level_sum(k);
        if (cur - prev).abs() < opts.tol {
            return Ok(PoissonResult { value: cur, previous: prev, level: k });
        }
        if k < opts.max_level {
            prev = cur;
        }
    }
    Err(Error::QuadratureNotConverged { last: cur, previous: prev })
}
