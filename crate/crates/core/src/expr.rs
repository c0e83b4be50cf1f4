//! Expression trees over parameter variables `x1..xn` and decision variables
//! `y1..ym`, with a recursive-descent parser, exact symbolic differentiation
//! and evaluation.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | base ('^' integer)?
//! base   := number | ident | '(' expr ')'
//! ident  := ('x'|'y') digits
//! ```

use std::fmt;

use thiserror::Error;

/// A variable of the parametric program. Indices are zero based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X(usize),
    Y(usize),
}

impl Var {
    /// Position in the stacked `(x, y)` vector.
    pub fn stacked(self, n: usize) -> usize {
        match self {
            Var::X(j) => j,
            Var::Y(i) => n + i,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero while evaluating `{0}`")]
    DivisionByZero(String),
    #[error("variable {0:?} out of range")]
    VariableOutOfRange(Var),
}

// Smart constructors with constant folding. Only folding, no algebraic
// rewriting beyond identities with 0 and 1.

pub fn constant(c: f64) -> Expr {
    Expr::Const(c)
}

pub fn var(v: Var) -> Expr {
    Expr::Var(v)
}

fn as_const(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(x), _) if x == 0.0 => Expr::Const(0.0),
        (_, Some(y)) if y == 0.0 => Expr::Const(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
        (Some(x), _) if x == 0.0 => Expr::Const(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, k: i32) -> Expr {
    match (as_const(&a), k) {
        (_, 0) => Expr::Const(1.0),
        (_, 1) => a,
        (Some(x), k) if x != 0.0 || k > 0 => Expr::Const(x.powi(k)),
        _ => Expr::Pow(Box::new(a), k),
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        Parser::new(text).parse_all()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => match *v {
                Var::X(j) => *x.get(j).ok_or(EvalError::VariableOutOfRange(*v))?,
                Var::Y(i) => *y.get(i).ok_or(EvalError::VariableOutOfRange(*v))?,
            },
            Expr::Neg(a) => -a.eval(x, y)?,
            Expr::Add(a, b) => a.eval(x, y)? + b.eval(x, y)?,
            Expr::Sub(a, b) => a.eval(x, y)? - b.eval(x, y)?,
            Expr::Mul(a, b) => a.eval(x, y)? * b.eval(x, y)?,
            Expr::Div(a, b) => {
                let den = b.eval(x, y)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero(b.to_string()));
                }
                a.eval(x, y)? / den
            }
            Expr::Pow(a, k) => {
                let base = a.eval(x, y)?;
                if base == 0.0 && *k < 0 {
                    return Err(EvalError::DivisionByZero(a.to_string()));
                }
                base.powi(*k)
            }
        })
    }

    /// Symbolic partial derivative.
    pub fn diff(&self, wrt: Var) -> Expr {
        match self {
            Expr::Const(_) => constant(0.0),
            Expr::Var(v) => constant(if *v == wrt { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(wrt)),
            Expr::Add(a, b) => add(a.diff(wrt), b.diff(wrt)),
            Expr::Sub(a, b) => sub(a.diff(wrt), b.diff(wrt)),
            Expr::Mul(a, b) => add(
                mul(a.diff(wrt), (**b).clone()),
                mul((**a).clone(), b.diff(wrt)),
            ),
            Expr::Div(a, b) => {
                // (a'b - ab') / b^2
                let num = sub(
                    mul(a.diff(wrt), (**b).clone()),
                    mul((**a).clone(), b.diff(wrt)),
                );
                div(num, pow((**b).clone(), 2))
            }
            Expr::Pow(a, k) => mul(
                mul(constant(*k as f64), pow((**a).clone(), k - 1)),
                a.diff(wrt),
            ),
        }
    }

    pub fn visit_vars(&self, out: &mut impl FnMut(Var)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out(*v),
            Expr::Neg(a) | Expr::Pow(a, _) => a.visit_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit_vars(out);
                b.visit_vars(out);
            }
        }
    }

    pub fn depends_on_x(&self) -> bool {
        let mut found = false;
        self.visit_vars(&mut |v| found |= matches!(v, Var::X(_)));
        found
    }

    pub fn depends_on_y(&self) -> bool {
        let mut found = false;
        self.visit_vars(&mut |v| found |= matches!(v, Var::Y(_)));
        found
    }

    /// Structural affinity test in `y`: every first `y` derivative is free
    /// of `y` after constant folding.
    pub fn is_affine_in_y(&self, m: usize) -> bool {
        (0..m).all(|i| !self.diff(Var::Y(i)).depends_on_y())
    }

    pub fn max_indices(&self) -> (Option<usize>, Option<usize>) {
        let (mut mx, mut my) = (None::<usize>, None::<usize>);
        self.visit_vars(&mut |v| match v {
            Var::X(j) => mx = Some(mx.map_or(j, |c| c.max(j))),
            Var::Y(i) => my = Some(my.map_or(i, |c| c.max(i))),
        });
        (mx, my)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "({:?})", c)
            }
            Expr::Const(c) => write!(f, "{:?}", c),
            Expr::Var(Var::X(j)) => write!(f, "x{}", j + 1),
            Expr::Var(Var::Y(i)) => write!(f, "y{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{})", a),
            Expr::Add(a, b) => write!(f, "({} + {})", a, b),
            Expr::Sub(a, b) => write!(f, "({} - {})", a, b),
            Expr::Mul(a, b) => write!(f, "({} * {})", a, b),
            Expr::Div(a, b) => write!(f, "({} / {})", a, b),
            Expr::Pow(a, k) => write!(f, "({}^{})", a, k),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, at: usize, message: impl Into<String>) -> ParseError {
        let before = &self.src[..at.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let column = at - before.rfind('\n').map_or(0, |p| p + 1) + 1;
        ParseError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn parse_all(mut self) -> Result<Expr, ParseError> {
        let e = self.expr()?;
        match self.peek() {
            None => Ok(e),
            Some(c) => Err(self.error(self.pos, format!("unexpected `{}`", c as char))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == b'+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = if op == b'*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Neg(Box::new(other)),
            });
        }
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.integer()?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.bytes.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits {
            return Err(self.error(start, "expected integer exponent"));
        }
        self.src[start..self.pos]
            .parse()
            .map_err(|_| self.error(start, "exponent out of range"))
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        match self.peek() {
            None => Err(self.error(self.pos, "unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error(self.pos, "expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c @ (b'x' | b'y')) => {
                let at = self.pos;
                self.pos += 1;
                let digits = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if self.pos == digits {
                    return Err(self.error(at, "variable needs an index, e.g. `x1`"));
                }
                let idx: usize = self.src[digits..self.pos]
                    .parse()
                    .map_err(|_| self.error(at, "bad variable index"))?;
                if idx == 0 {
                    return Err(self.error(at, "variable indices start at 1"));
                }
                Ok(Expr::Var(if c == b'x' {
                    Var::X(idx - 1)
                } else {
                    Var::Y(idx - 1)
                }))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let at = self.pos;
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_digit() || self.bytes[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'e' | b'E') {
                    let save = self.pos;
                    self.pos += 1;
                    if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'+' | b'-') {
                        self.pos += 1;
                    }
                    let exp_digits = self.pos;
                    while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    if self.pos == exp_digits {
                        self.pos = save;
                    }
                }
                self.src[at..self.pos]
                    .parse::<f64>()
                    .map(Expr::Const)
                    .map_err(|_| self.error(at, "malformed number"))
            }
            Some(c) => {
                let _ = start;
                Err(self.error(self.pos, format!("unexpected `{}`", c as char)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_precedence() {
        let e = Expr::parse("y1 - x1*2^2").unwrap();
        assert_eq!(e.eval(&[1.0], &[5.0]).unwrap(), 1.0);
        let e = Expr::parse("-y1^2").unwrap();
        assert_eq!(e.eval(&[], &[3.0]).unwrap(), -9.0);
        let e = Expr::parse("(y1 - x1)^2").unwrap();
        assert_eq!(e.eval(&[1.0], &[3.0]).unwrap(), 4.0);
        let e = Expr::parse("1e-3 * y1 / 2").unwrap();
        assert!((e.eval(&[], &[4.0]).unwrap() - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn rejects_double_plus_at_second_plus() {
        let err = Expr::parse("y1 ++ x1").unwrap_err();
        let ParseError::Syntax { line, column, .. } = err;
        assert_eq!((line, column), (1, 5));
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("z1").is_err());
        assert!(Expr::parse("x").is_err());
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("(y1").is_err());
        assert!(Expr::parse("y1 y2").is_err());
        assert!(Expr::parse("y1^x1").is_err());
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = Expr::parse("1 / (y1 - 1)").unwrap();
        assert!(matches!(
            e.eval(&[], &[1.0]),
            Err(EvalError::DivisionByZero(_))
        ));
        let e = Expr::parse("y1^-1").unwrap();
        assert!(e.eval(&[], &[0.0]).is_err());
    }

    #[test]
    fn derivative_by_hand() {
        let f = Expr::parse("(y1 - x1)^2").unwrap();
        let dxx = f.diff(Var::X(0)).diff(Var::X(0));
        let dxy = f.diff(Var::X(0)).diff(Var::Y(0));
        let dyy = f.diff(Var::Y(0)).diff(Var::Y(0));
        assert_eq!(dxx.eval(&[0.3], &[0.1]).unwrap(), 2.0);
        assert_eq!(dxy.eval(&[0.3], &[0.1]).unwrap(), -2.0);
        assert_eq!(dyy.eval(&[0.3], &[0.1]).unwrap(), 2.0);
    }

    #[test]
    fn affine_detection() {
        assert!(Expr::parse("x1*y1 + 3").unwrap().is_affine_in_y(1));
        assert!(Expr::parse("x1^2*y1 - y2/4").unwrap().is_affine_in_y(2));
        assert!(!Expr::parse("(y1 - x1)^2").unwrap().is_affine_in_y(1));
        assert!(!Expr::parse("y1*y2").unwrap().is_affine_in_y(2));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-5.0f64..5.0).prop_map(|c| Expr::Const((c * 4.0).round() / 4.0)),
            (0usize..2).prop_map(|j| Expr::Var(Var::X(j))),
            (0usize..2).prop_map(|i| Expr::Var(Var::Y(i))),
        ];
        leaf.prop_recursive(3, 16, 2, |inner| {
            prop_oneof![
                inner
                    .clone()
                    .prop_filter("no negated constants", |e| !matches!(e, Expr::Const(_)))
                    .prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), 0i32..4).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_round_trips(e in arb_expr()) {
            let back = Expr::parse(&e.to_string()).unwrap();
            prop_assert_eq!(back, e);
        }

        #[test]
        fn gradient_matches_central_differences(
            e in arb_expr(),
            x in proptest::collection::vec(-1.5f64..1.5, 2),
            y in proptest::collection::vec(-1.5f64..1.5, 2),
        ) {
            for v in [Var::X(0), Var::X(1), Var::Y(0), Var::Y(1)] {
                let d = e.diff(v).eval(&x, &y).unwrap();
                let h = 1e-5;
                let (mut xp, mut yp, mut xm, mut ym) = (x.clone(), y.clone(), x.clone(), y.clone());
                match v {
                    Var::X(j) => { xp[j] += h; xm[j] -= h; }
                    Var::Y(i) => { yp[i] += h; ym[i] -= h; }
                }
                let fd = (e.eval(&xp, &yp).unwrap() - e.eval(&xm, &ym).unwrap()) / (2.0 * h);
                let scale = 1f64.max(d.abs()).max(e.eval(&x, &y).unwrap().abs());
                prop_assert!((d - fd).abs() <= 1e-6 * scale, "d={} fd={} for {}", d, fd, e);
            }
        }
    }
}
