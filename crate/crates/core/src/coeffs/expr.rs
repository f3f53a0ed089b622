//! Expression trees for coefficient fields and initial conditions.
//!
//! Grammar (whitespace-insensitive, `^` right-associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := unary ('^' factor)?
//! unary  := '-'? atom
//! atom   := number | ident | func '(' expr ')' | '(' expr ')'
//! ```

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

/// Maximum tree depth of a parsed expression.
pub const MAX_DEPTH: usize = 64;

/// Maximum source length in bytes.
pub const MAX_SOURCE_LEN: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,

    #[error("expression of {len} bytes exceeds the {MAX_SOURCE_LEN}-byte limit")]
    TooLong { len: usize },

    #[error("syntax error at byte {offset}: found {found}, expected {}", expected.join(" or "))]
    Syntax {
        offset: usize,
        found: String,
        expected: Vec<String>,
    },

    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("function '{name}' at byte {offset} takes 1 argument, got {found}")]
    WrongArity {
        name: String,
        offset: usize,
        found: usize,
    },

    #[error("expression nests deeper than {MAX_DEPTH} at byte {offset}")]
    TooDeep { offset: usize },
}

impl ParseError {
    /// Byte offset of the error, when it has one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Empty | ParseError::TooLong { .. } => None,
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::WrongArity { offset, .. }
            | ParseError::TooDeep { offset } => Some(*offset),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at x = {point:?}, t = {time}")]
pub struct EvalError {
    pub message: String,
    pub point: Vec<f64>,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Spatial coordinate, 1-based.
    X(usize),
    T,
    Pi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Abs,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 6] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Tanh,
        Func::Abs,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    pub fn depth(&self) -> usize {
        match self {
            Node::Num(_) | Node::Var(_) => 1,
            Node::Neg(e) | Node::Call(_, e) => 1 + e.depth(),
            Node::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    fn any_var(&self, pred: &dyn Fn(Var) -> bool) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(v) => pred(*v),
            Node::Neg(e) | Node::Call(_, e) => e.any_var(pred),
            Node::Binary(_, a, b) => a.any_var(pred) || b.any_var(pred),
        }
    }

    fn eval(&self, x: &[f64], t: f64) -> Result<f64, &'static str> {
        let v = match self {
            Node::Num(v) => *v,
            Node::Var(Var::X(i)) => x[i - 1],
            Node::Var(Var::T) => t,
            Node::Var(Var::Pi) => PI,
            Node::Neg(e) => -e.eval(x, t)?,
            Node::Binary(op, a, b) => {
                let a = a.eval(x, t)?;
                let b = b.eval(x, t)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err("division by zero");
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let r = a.powf(b);
                        if r.is_nan() {
                            return Err("power outside its real domain");
                        }
                        r
                    }
                }
            }
            Node::Call(f, e) => {
                let a = e.eval(x, t)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Tanh => a.tanh(),
                    Func::Abs => a.abs(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err("square root of a negative number");
                        }
                        a.sqrt()
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err("non-finite intermediate value")
        }
    }
}

/// Prints every node in atom form, so the output reparses to the same tree.
impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v:?}"),
            Node::Var(Var::X(i)) => write!(f, "x{i}"),
            Node::Var(Var::T) => f.write_str("t"),
            Node::Var(Var::Pi) => f.write_str("pi"),
            Node::Neg(e) => write!(f, "(-{e})"),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Node::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

/// A parsed scalar expression in `x1..xd` and `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    dim: usize,
}

impl Expr {
    /// Parses `text` for a `dim`-dimensional problem.
    pub fn parse(text: &str, dim: usize) -> Result<Expr, ParseError> {
        let root = super::parser::parse(text, dim)?;
        Ok(Expr { root, dim })
    }

    /// Wraps an already-built tree, checking variables and depth.
    pub fn from_node(root: Node, dim: usize) -> Result<Expr, ParseError> {
        if root.depth() > MAX_DEPTH {
            return Err(ParseError::TooDeep { offset: 0 });
        }
        if let Some(i) = max_axis(&root).filter(|&i| i > dim) {
            return Err(ParseError::UnknownIdentifier {
                name: format!("x{i}"),
                offset: 0,
            });
        }
        Ok(Expr { root, dim })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depends_on_time(&self) -> bool {
        self.root.any_var(&|v| v == Var::T)
    }

    /// Whether `x_axis` (1-based) occurs syntactically.
    pub fn depends_on_axis(&self, axis: usize) -> bool {
        self.root.any_var(&|v| v == Var::X(axis))
    }

    /// Evaluates at a point with at least `dim` coordinates.
    pub fn eval(&self, point: &[f64], t: f64) -> Result<f64, EvalError> {
        debug_assert!(point.len() >= self.dim);
        self.root.eval(point, t).map_err(|message| EvalError {
            message: message.to_string(),
            point: point[..self.dim].to_vec(),
            time: t,
        })
    }

    /// `∫_t^{t+h} e(x, s) ds` by 4-point Gauss–Legendre quadrature.
    ///
    /// A time-independent expression returns `h · e(x)` exactly.
    pub fn integrate_time(&self, point: &[f64], t: f64, h: f64) -> Result<f64, EvalError> {
        if !self.depends_on_time() {
            return Ok(h * self.eval(point, t)?);
        }
        let half = 0.5 * h;
        let mid = t + half;
        let mut acc = 0.0;
        for (node, weight) in GAUSS_LEGENDRE_4 {
            acc += weight * self.eval(point, mid - half * node)?;
            acc += weight * self.eval(point, mid + half * node)?;
        }
        Ok(half * acc)
    }

    /// `∫_{t0}^{t1} e(x, s) ds`.
    pub fn time_integral(&self, point: &[f64], t0: f64, t1: f64) -> Result<f64, EvalError> {
        self.integrate_time(point, t0, t1 - t0)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

/// Positive nodes and weights of the 4-point Gauss–Legendre rule on [-1, 1].
const GAUSS_LEGENDRE_4: [(f64, f64); 2] = [
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

fn max_axis(node: &Node) -> Option<usize> {
    match node {
        Node::Num(_) | Node::Var(Var::T) | Node::Var(Var::Pi) => None,
        Node::Var(Var::X(i)) => Some(*i),
        Node::Neg(e) | Node::Call(_, e) => max_axis(e),
        Node::Binary(_, a, b) => max_axis(a).max(max_axis(b)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str) -> f64 {
        Expr::parse(s, 3).unwrap().eval(&[0.0, 0.0, 0.0], 0.0).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(ev("sin(0)"), 0.0);
        assert_eq!(ev("exp(1)"), 2.718281828459045);
        let e = Expr::parse("x1+t", 1).unwrap();
        assert_eq!(e.eval(&[0.25], 0.5).unwrap(), 0.75);
        assert_eq!(ev("pi"), PI);
    }

    #[test]
    fn evaluation_errors_carry_the_point() {
        let e = Expr::parse("1/x1", 1).unwrap();
        let err = e.eval(&[0.0], 0.25).unwrap_err();
        assert_eq!(err.point, vec![0.0]);
        assert_eq!(err.time, 0.25);
        assert!(err.message.contains("division"));
        let e = Expr::parse("sqrt(x1-1)", 1).unwrap();
        assert!(e.eval(&[0.5], 0.0).is_err());
        let e = Expr::parse("exp(1000*x1)", 1).unwrap();
        assert!(e.eval(&[1.0], 0.0).is_err());
        let e = Expr::parse("(x1-1)^0.5", 1).unwrap();
        assert!(e.eval(&[0.5], 0.0).is_err());
    }

    #[test]
    fn time_integral_examples() {
        let one = Expr::parse("1", 1).unwrap();
        assert_eq!(one.time_integral(&[0.0], 0.0, 0.1).unwrap(), 0.1);
        let t = Expr::parse("t", 1).unwrap();
        assert!((t.time_integral(&[0.0], 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let c = Expr::parse("cos(2*pi*t)", 1).unwrap();
        let v = c.time_integral(&[0.0], 0.0, 0.25).unwrap();
        // Single four-point Gauss rule over a quarter period: error ~5e-9.
        assert!((v - 1.0 / (2.0 * PI)).abs() < 2e-8);
    }

    #[test]
    fn quadrature_is_exact_to_degree_seven() {
        let p = Expr::parse("3*t^7 - 2*t^4 + t - 5", 1).unwrap();
        let exact = |t: f64| 3.0 / 8.0 * t.powi(8) - 0.4 * t.powi(5) + 0.5 * t * t - 5.0 * t;
        let v = p.time_integral(&[0.0], 0.3, 1.7).unwrap();
        assert!((v - (exact(1.7) - exact(0.3))).abs() < 1e-12);
    }

    #[test]
    fn time_integral_is_linear() {
        let f = Expr::parse("sin(3*t)*x1", 1).unwrap();
        let g = Expr::parse("exp(-t)", 1).unwrap();
        let fg = Expr::parse("sin(3*t)*x1+exp(-t)", 1).unwrap();
        for (t0, t1) in [(0.0, 0.1), (0.3, 0.9), (1.0, 1.0)] {
            let a = f.time_integral(&[0.4], t0, t1).unwrap();
            let b = g.time_integral(&[0.4], t0, t1).unwrap();
            let c = fg.time_integral(&[0.4], t0, t1).unwrap();
            assert!((a + b - c).abs() < 1e-14);
        }
    }

    #[test]
    fn dependency_queries() {
        let e = Expr::parse("1+0.5*sin(2*pi*x2)*t", 2).unwrap();
        assert!(e.depends_on_time());
        assert!(e.depends_on_axis(2));
        assert!(!e.depends_on_axis(1));
    }
}
