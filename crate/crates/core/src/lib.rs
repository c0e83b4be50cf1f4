//! Generalized first- and second-order derivative estimates for the optimal
//! value function `phi(x) = min { f(x, y) : g(x, y) <= 0 }`.
//!
//! Every set-valued answer is a [`PolySet`]: a finite union of affine images
//! of polyhedra. See the crate README for the command-line front end.

pub mod battery;
pub mod coderiv;
pub mod error;
pub mod expr;
pub mod firstorder;
pub mod hessian;
pub mod hypothesis;
pub mod kernel;
pub mod lp;
pub mod model;
pub mod num;
pub mod oracle;
pub mod report;
pub mod setcalc;

pub use expr::{EvalError, Expr, ParseError, Var};
pub use setcalc::{Affine, ConvexHull, HullCertificate, Membership, Piece, PolySet, Polyhedron};
pub use error::{Error, Result};
pub use model::{parse_problem, KktPoint, LagrangianEval, ParametricProblem, Partition, Tolerances};
