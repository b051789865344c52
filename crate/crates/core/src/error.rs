use thiserror::Error;

/// Failure while evaluating an expression or one of its derivatives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in {func}: argument {arg}")]
    Domain { func: &'static str, arg: f64 },
    #[error("derivative of {func} is unbounded at argument {arg}")]
    DerivativeSingular { func: &'static str, arg: f64 },
    #[error("expected {expected} state components, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Error raised by parsing, with the byte offset into the source.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: found {found}, expected one of {}", expected.join(", "))]
    Syntax { found: String, expected: Vec<&'static str> },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("rational power {p}/{q} has an even denominator")]
    EvenDenominator { p: i64, q: i64 },
    #[error("invalid literal `{0}`")]
    BadLiteral(String),
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{source} (at t = {t})")]
    Eval { t: f64, source: EvalError },
    #[error("quadrature did not reach tolerance {tol:e} within {budget} subdivisions on [{a}, {b}]")]
    NoConvergence { a: f64, b: f64, tol: f64, budget: usize },
    #[error("time {t} outside the interval [{t0}, {t1}]")]
    OutsideInterval { t: f64, t0: f64, t1: f64 },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("not applicable: {0}")]
    Inapplicable(String),
    #[error("Hessian varies with (x, dx): integrand is not quadratic ({0})")]
    NonconstantHessian(String),
    #[error("coefficient A(t) is singular at t = {t} (min eigenvalue {eig:e})")]
    SingularA { t: f64, eig: f64 },
    #[error("L_dxdx is singular at t = {t} (min |eigenvalue| {eig:e})")]
    SingularLegendre { t: f64, eig: f64 },
    #[error("ODE step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("endpoint map does not change sign over slope bracket [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("Q is not finite at t = {t}")]
    NonfiniteQ { t: f64 },
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("boundary mismatch: candidate {which} value {got:?} differs from {expected:?}")]
    BoundaryMismatch { which: &'static str, got: Vec<f64>, expected: Vec<f64> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attaches the evaluation time to an [`EvalError`].
    pub fn eval_at(t: f64) -> impl FnOnce(EvalError) -> Error {
        move |source| Error::Eval { t, source }
    }

    /// True for failures caused by the input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Schema { .. }
                | Error::BoundaryMismatch { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::InvalidTrajectory(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
