//! `debranges` command line.
//!
//! Hamiltonians are read as JSON from a file argument or standard input and
//! structured results are written as JSON to standard output; grids are CSV
//! with a header row. Exit status: 1 for unreadable input or arguments,
//! 2 when a precondition fails (the message names it), 3 when a numerical
//! method does not converge.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use debranges::factorization::{
    factorize_exact, factorize_oscillation_with, factorize_spectral_with, normalize_at_i, truncate_factorized,
    verify_triple, Factorization, FactorizationTriple,
};
use debranges::functionals::{
    compare_functionals, entropy_closed_form_report, entropy_diagnostics, entropy_profile, entropy_quadrature, ktilde,
    trend_constant,
};
use debranges::hamiltonian::{Classification, PiecewiseHamiltonian};
use debranges::io::{parse_complex, write_csv};
use debranges::krein::{density_via_pstar, propagate_krein};
use debranges::mat2::{C64, I_UNIT};
use debranges::models::{dirac_to_hamiltonian, example1, example2, example3, random_det1_fc, DiracPotential};
use debranges::solver::{spectral_density, transfer, weyl_at_r};
use debranges::Error;

#[derive(Parser)]
#[command(
    name = "debranges",
    version,
    about = "Canonical Hamiltonian systems: Weyl functions, entropy, factorizations, Krein systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Hamiltonian JSON file; standard input when absent or `-`.
    input: Option<PathBuf>,
}

#[derive(Args)]
struct Grid {
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    x_min: f64,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    x_max: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 201)]
    n: usize,
}

impl Grid {
    fn points(&self) -> Result<Vec<f64>, Fail> {
        if self.n < 2 || !(self.x_max > self.x_min) {
            return Err(Fail::precondition("grid needs n >= 2 and x-max > x-min"));
        }
        let h = (self.x_max - self.x_min) / (self.n - 1) as f64;
        Ok((0..self.n).map(|k| self.x_min + k as f64 * h).collect())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EntropyMethodArg {
    Closed,
    Quad,
}

#[derive(Clone, Copy, ValueEnum)]
enum FactorMethodArg {
    Oscillation,
    Spectral,
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a Hamiltonian; exits 2 with the failing predicate if invalid.
    Validate(Input),
    /// Transfer matrix M(t, z).
    Transfer {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        t: f64,
        /// Spectral parameter as `re+imi`.
        #[arg(long, default_value = "i", allow_hyphen_values = true)]
        z: String,
    },
    /// Weyl function m_r(z) of the shifted Hamiltonian (r = 0 by default).
    Weyl {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "i", allow_hyphen_values = true)]
        z: String,
        #[arg(long, default_value_t = 0.0)]
        r: f64,
    },
    /// Spectral density on a grid. CSV columns: x,w.
    Density {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        grid: Grid,
    },
    /// Entropy K_H(0). With --diagnostics N prints CSV columns theta,logw instead.
    Entropy {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "closed")]
        method: EntropyMethodArg,
        #[arg(long)]
        diagnostics: Option<usize>,
    },
    /// Oscillation functional. With --terms prints CSV columns n,term instead.
    Ktilde {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        terms: bool,
    },
    /// Entropy profile r -> K_H(r) on [0, ell + 1]. CSV columns: r,K.
    Profile {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 65)]
        n: usize,
    },
    /// Sampled factorization H = G^T Q G as JSON {grid, G, Q, V1, V2, norms}.
    Factorize {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "oscillation")]
        method: FactorMethodArg,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        grid_step: f64,
    },
    /// Check a factorization file against a Hamiltonian.
    VerifyFact {
        #[command(flatten)]
        input: Input,
        /// Factorization JSON as written by `factorize`.
        #[arg(long)]
        fact: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Density through the Krein system of the truncation at --ell.
    /// CSV columns: x,w,pstar_sq with w the solver density of the truncation.
    /// With --path prints r,pstar_i,pstar_d_i for the normalized factorization.
    KreinDensity {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "exact")]
        method: FactorMethodArg,
        /// Truncation point; defaults to the end of the last cell.
        #[arg(long)]
        ell: Option<f64>,
        #[command(flatten)]
        grid: Grid,
        #[arg(long)]
        path: bool,
    },
    /// K_m and K~ side by side; with --random N runs a seeded suite instead.
    AuditTheorem1 {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        max_cells: usize,
    },
    /// diag(1, 0) on [0, L], identity after.
    Example1 {
        #[arg(long = "L")]
        l: f64,
        /// Print the reference values instead of the Hamiltonian.
        #[arg(long)]
        oracle: bool,
    },
    /// Constant off-diagonal Dirac potential eps on [0, T].
    Example2 {
        #[arg(long)]
        eps: f64,
        #[arg(long = "T")]
        t: usize,
        #[arg(long)]
        oracle: bool,
    },
    /// Scalar Dirac potential diag(v, -v) from pieces `len:v,len:v,...`.
    Example3 {
        #[arg(long, allow_hyphen_values = true)]
        pieces: String,
    },
    /// Canonical system of a Dirac potential JSON {"cells": [{"len", "v"}]}.
    Dirac(Input),
}

#[derive(Debug)]
struct Fail {
    code: u8,
    message: String,
}

impl Fail {
    fn parse(m: impl Into<String>) -> Self {
        Fail { code: 1, message: m.into() }
    }
    fn precondition(m: impl Into<String>) -> Self {
        Fail { code: 2, message: m.into() }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail { code: if e.is_numerical() { 3 } else { 2 }, message: e.to_string() }
    }
}

fn read_text(input: &Input) -> Result<String, Fail> {
    let mut s = String::new();
    match &input.input {
        Some(p) if p.as_os_str() != "-" => {
            s = std::fs::read_to_string(p).map_err(|e| Fail::parse(format!("{}: {e}", p.display())))?;
        }
        _ => {
            std::io::stdin().read_to_string(&mut s).map_err(|e| Fail::parse(format!("stdin: {e}")))?;
        }
    }
    Ok(s)
}

fn read_hamiltonian(input: &Input) -> Result<PiecewiseHamiltonian, Fail> {
    serde_json::from_str(&read_text(input)?).map_err(|e| Fail::parse(format!("Hamiltonian JSON: {e}")))
}

/// Read and reject anything that is not a Hamiltonian.
fn read_valid(input: &Input) -> Result<PiecewiseHamiltonian, Fail> {
    let h = read_hamiltonian(input)?;
    match h.validate() {
        Classification::Invalid(reason) => Err(Fail::precondition(reason)),
        _ => Ok(h),
    }
}

fn complex_arg(s: &str) -> Result<C64, Fail> {
    parse_complex(s).map_err(|e| Fail::parse(e.to_string()))
}

fn factorize(h: &PiecewiseHamiltonian, method: FactorMethodArg, grid_step: f64) -> Result<Factorization, Fail> {
    if !(grid_step > 0.0) {
        return Err(Fail::precondition("grid-step must be positive"));
    }
    Ok(match method {
        FactorMethodArg::Oscillation => factorize_oscillation_with(h, grid_step)?,
        FactorMethodArg::Spectral => factorize_spectral_with(h, 1e-5, grid_step)?,
        FactorMethodArg::Exact => factorize_exact(h)?,
    })
}

fn emit_json<T: Serialize>(out: &mut Vec<u8>, v: &T) -> Result<(), Fail> {
    serde_json::to_writer(&mut *out, v).map_err(|e| Fail::parse(e.to_string()))?;
    out.push(b'\n');
    Ok(())
}

fn emit_csv(out: &mut Vec<u8>, header: &[&str], rows: &[Vec<f64>]) -> Result<(), Fail> {
    write_csv(out, header, rows).map_err(|e| Fail::parse(e.to_string()))
}

fn run(cmd: Command, out: &mut Vec<u8>) -> Result<(), Fail> {
    match cmd {
        Command::Validate(input) => {
            let h = read_hamiltonian(&input)?;
            let c = h.validate();
            emit_json(out, &c)?;
            if let Classification::Invalid(reason) = c {
                return Err(Fail::precondition(reason));
            }
        }
        Command::Transfer { input, t, z } => {
            let h = read_valid(&input)?;
            if !(t >= 0.0) {
                return Err(Fail::precondition("t must be non-negative"));
            }
            emit_json(out, &transfer(&h, t, complex_arg(&z)?)?)?;
        }
        Command::Weyl { input, z, r } => {
            let h = read_valid(&input)?;
            let z = complex_arg(&z)?;
            let m = weyl_at_r(&h, r, z)?;
            emit_json(out, &json!({ "z": { "re": z.re, "im": z.im }, "m": { "re": m.re, "im": m.im } }))?;
        }
        Command::Density { input, grid } => {
            let h = read_valid(&input)?;
            let xs = grid.points()?;
            let w = spectral_density(&h, &xs)?;
            let rows: Vec<_> = xs.iter().zip(&w).map(|(x, w)| vec![*x, *w]).collect();
            emit_csv(out, &["x", "w"], &rows)?;
        }
        Command::Entropy { input, method, diagnostics } => {
            let h = read_valid(&input)?;
            if let Some(n) = diagnostics {
                let rows: Vec<_> = entropy_diagnostics(&h, n)?.into_iter().map(|(t, l)| vec![t, l]).collect();
                return emit_csv(out, &["theta", "logw"], &rows);
            }
            match method {
                EntropyMethodArg::Closed => emit_json(out, &json!({ "K": entropy_closed_form_report(&h)?.k }))?,
                EntropyMethodArg::Quad => emit_json(out, &entropy_quadrature(&h)?)?,
            }
        }
        Command::Ktilde { input, terms } => {
            let h = read_valid(&input)?;
            let r = ktilde(&h)?;
            if terms {
                let rows: Vec<_> = r.terms.iter().map(|&(n, t)| vec![n as f64, t]).collect();
                emit_csv(out, &["n", "term"], &rows)?;
            } else {
                emit_json(out, &json!({ "ktilde": r.total }))?;
            }
        }
        Command::Profile { input, n } => {
            let h = read_valid(&input)?;
            if n < 2 {
                return Err(Fail::precondition("n must be at least 2"));
            }
            let end = h.ell() + 1.0;
            let rs: Vec<f64> = (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect();
            let rows: Vec<_> = entropy_profile(&h, &rs)?.into_iter().map(|(r, k)| vec![r, k]).collect();
            emit_csv(out, &["r", "K"], &rows)?;
        }
        Command::Factorize { input, method, grid_step } => {
            let h = read_valid(&input)?;
            emit_json(out, &factorize(&h, method, grid_step)?.sample()?)?;
        }
        Command::VerifyFact { input, fact, tol } => {
            let h = read_valid(&input)?;
            let text = std::fs::read_to_string(&fact).map_err(|e| Fail::parse(format!("{}: {e}", fact.display())))?;
            let triple: FactorizationTriple =
                serde_json::from_str(&text).map_err(|e| Fail::parse(format!("factorization JSON: {e}")))?;
            let report = verify_triple(&h, &triple)?;
            let pass = report.residual < tol;
            emit_json(out, &json!({ "report": report, "tol": tol, "pass": pass }))?;
        }
        Command::KreinDensity { input, method, ell, grid, path } => {
            let h = read_valid(&input)?;
            let f = factorize(&h, method, 1.0 / 64.0)?;
            let ell = ell.unwrap_or(h.ell());
            if path {
                let (_, fn_) = normalize_at_i(&truncate_factorized(&f, ell)?)?;
                let p = propagate_krein(&fn_, I_UNIT, ell)?;
                let d = propagate_krein(&fn_.dual(), I_UNIT, ell)?;
                let rows: Vec<_> =
                    p.states.iter().zip(&d.states).map(|(a, b)| vec![a.r, a.pstar.norm(), b.pstar.norm()]).collect();
                return emit_csv(out, &["r", "pstar_i", "pstar_d_i"], &rows);
            }
            let xs = grid.points()?;
            let wp = density_via_pstar(&f, ell, &xs)?;
            let ws = spectral_density(truncate_factorized(&f, ell)?.hamiltonian(), &xs)?;
            let rows: Vec<_> = xs.iter().zip(ws.iter().zip(&wp)).map(|(x, (w, p))| vec![*x, *w, 1.0 / p]).collect();
            emit_csv(out, &["x", "w", "pstar_sq"], &rows)?;
        }
        Command::AuditTheorem1 { input, random, seed, max_cells } => match random {
            None => {
                let h = read_valid(&input)?;
                emit_json(out, &compare_functionals(&h))?;
            }
            Some(n) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let audits: Vec<_> =
                    (0..n).map(|_| compare_functionals(&random_det1_fc(&mut rng, max_cells))).collect();
                let pairs: Vec<_> = audits.iter().filter_map(|a| Some((a.k_m?, a.ktilde?))).collect();
                let mismatches = audits.iter().filter(|a| a.finiteness_mismatch).count();
                emit_json(
                    out,
                    &json!({ "instances": audits, "fitted_c": trend_constant(&pairs, 1e-12), "finiteness_mismatches": mismatches }),
                )?;
            }
        },
        Command::Example1 { l, oracle } => {
            let (h, o) = example1(l)?;
            if oracle {
                emit_json(out, &o)?;
            } else {
                emit_json(out, &h)?;
            }
        }
        Command::Example2 { eps, t, oracle } => {
            let (h, o) = example2(eps, t)?;
            if let Some(w) = &o.warning {
                eprintln!("warning: {w}");
            }
            if oracle {
                emit_json(out, &o)?;
            } else {
                emit_json(out, &h)?;
            }
        }
        Command::Example3 { pieces } => {
            let mut parsed = Vec::new();
            for p in pieces.split(',').filter(|p| !p.trim().is_empty()) {
                let (len, v) = p.split_once(':').ok_or_else(|| Fail::parse(format!("piece {p:?} is not len:v")))?;
                let num =
                    |s: &str| s.trim().parse::<f64>().map_err(|_| Fail::parse(format!("bad number in piece {p:?}")));
                parsed.push((num(len)?, num(v)?));
            }
            emit_json(out, &example3(&parsed)?.0)?;
        }
        Command::Dirac(input) => {
            let pot: DiracPotential =
                serde_json::from_str(&read_text(&input)?).map_err(|e| Fail::parse(format!("potential JSON: {e}")))?;
            emit_json(out, &dirac_to_hamiltonian(&pot)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut out = Vec::new();
    let status = run(cli.command, &mut out);
    let _ = std::io::stdout().write_all(&out);
    match status {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
