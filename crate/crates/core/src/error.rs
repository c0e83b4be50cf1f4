use thiserror::Error;

use crate::expr::EvalError;
use crate::setcalc::SetError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("problem file: {0}")]
    Json(String),
    #[error("expression `{field}`: syntax error at line {line}, column {column}: {message}")]
    Syntax {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("expression `{field}` uses unknown variable {name}")]
    UnknownVariable { field: String, name: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("S(x)=∅ at x={x:?}: the feasible set is empty, violating the standing assumption that S(x) is nonempty")]
    Infeasible { x: Vec<f64> },
    #[error("feasible set is unbounded at x={x:?}; the compactness assumption is violated")]
    Unbounded { x: Vec<f64> },
    #[error("no y_box given; the multistart solver needs a bounding box for y")]
    NeedsBox,
    #[error("not a KKT point: residual {residual:e} exceeds {tol:e}")]
    NotKkt { residual: f64, tol: f64 },
    #[error("wrong formula: {0}")]
    WrongFormula(String),
    #[error("hypothesis failed: {0}")]
    Hypothesis(String),
    #[error("|theta| = {theta} exceeds the branch cap {cap}; raise --branch-cap or use the C-type flavor")]
    BranchCap { theta: usize, cap: usize },
    #[error("strict complementarity fails (theta = {0:?})")]
    StrictComplementarity(Vec<usize>),
    #[error("degenerate system: {0}")]
    Degenerate(String),
    #[error("empty estimate: {0}")]
    Empty(String),
    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Empty(_) => 1,
            Error::Json(_)
            | Error::Syntax { .. }
            | Error::UnknownVariable { .. }
            | Error::Dimension(_)
            | Error::Usage(_) => 64,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
