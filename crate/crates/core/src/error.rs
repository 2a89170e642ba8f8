use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix exponential requires a trace-free generator (trace = {trace:e})")]
    NonTraceFree { trace: f64 },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("Moebius map hits a pole (|cz+d| = {0:e})")]
    PoleHit(f64),
    #[error("Weyl limit denominator vanished at t = {0}")]
    DenominatorVanished(f64),
    #[error("matrix is not in SL(2,R) (det = {det})")]
    NotSl2 { det: f64 },
    #[error("cell {index} has degenerate determinant {det:e}")]
    DegenerateCell { index: usize, det: f64 },
    #[error("eta_{0} is unreachable: the determinant clock saturates")]
    EtaUnreachable(usize),
    #[error("Hamiltonian does not have unit determinant ({0})")]
    NotUnitDeterminant(String),
    #[error("quadrature did not converge (last = {last}, previous = {previous})")]
    QuadratureNotConverged { last: f64, previous: f64 },
    #[error("window {0} integral is not positive definite")]
    SingularWindow(usize),
    #[error("finite-difference derivative unstable at t = {t} (Richardson gap {gap:e})")]
    DerivativeUnstable { t: f64, gap: f64 },
    #[error("{0} is not a grid point of the factorization")]
    GridMismatch(f64),
    #[error("ODE step control underflow at r = {r}")]
    StepUnderflow { r: f64 },
    #[error("invalid Hamiltonian: {0}")]
    InvalidHamiltonian(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures caused by numerical non-convergence rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNotConverged { .. }
                | Error::DerivativeUnstable { .. }
                | Error::StepUnderflow { .. }
                | Error::PoleHit(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
