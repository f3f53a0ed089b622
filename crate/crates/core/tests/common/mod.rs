#![allow(dead_code)]

use proptest::prelude::*;
use splitstep::coeffs::{BinOp, Func, Node, ParseError, Var};
use splitstep::Expr;

// Accepted inputs and their fully parenthesized form.
pub const ACCEPTED: &[(&str, &str)] = &[
    ("1+2*3", "(1.0 + (2.0 * 3.0))"),
    ("(1+2)*3", "((1.0 + 2.0) * 3.0)"),
    ("1-2-3", "((1.0 - 2.0) - 3.0)"),
    ("8/4/2", "((8.0 / 4.0) / 2.0)"),
    ("2^3^2", "(2.0 ^ (3.0 ^ 2.0))"),
    ("-2^2", "((-2.0) ^ 2.0)"),
    ("-x1*x2", "((-x1) * x2)"),
    ("2*-x1", "(2.0 * (-x1))"),
    ("2^-1", "(2.0 ^ (-1.0))"),
    ("sin(x1)^2", "(sin(x1) ^ 2.0)"),
    ("exp(-t)*cos(2*pi*x1)", "(exp((-t)) * cos(((2.0 * pi) * x1)))"),
    ("1e-3", "0.001"),
    ("2.5E+2", "250.0"),
    (".5", "0.5"),
    ("5.", "5.0"),
    ("x1/x2*x3", "((x1 / x2) * x3)"),
    ("x1-(x2-x3)", "(x1 - (x2 - x3))"),
    ("  x1  +  t  ", "(x1 + t)"),
    ("tanh(abs(sqrt(x2)))", "tanh(abs(sqrt(x2)))"),
    ("pi", "pi"),
    ("1+2^3*4", "(1.0 + ((2.0 ^ 3.0) * 4.0))"),
    ("((((x3))))", "x3"),
    ("1-x1+x2", "((1.0 - x1) + x2)"),
    ("x1*x2/x3^2", "((x1 * x2) / (x3 ^ 2.0))"),
    ("-(1+t)", "(-(1.0 + t))"),
];

#[derive(Debug, PartialEq)]
pub enum Kind {
    Empty,
    Syntax,
    Unknown,
    Arity,
}

// Rejected inputs, the error class and its byte offset.
pub const REJECTED: &[(&str, Kind, Option<usize>)] = &[
    ("", Kind::Empty, None),
    ("   ", Kind::Empty, None),
    ("--x1", Kind::Syntax, Some(1)),
    ("1+", Kind::Syntax, Some(2)),
    ("*2", Kind::Syntax, Some(0)),
    ("(1+2", Kind::Syntax, Some(4)),
    ("1+2)", Kind::Syntax, Some(3)),
    ("sin x1", Kind::Syntax, Some(4)),
    ("sin()", Kind::Arity, Some(0)),
    ("sin(1,2)", Kind::Arity, Some(0)),
    ("foo(1)", Kind::Unknown, Some(0)),
    ("x4", Kind::Unknown, Some(0)),
    ("x0", Kind::Unknown, Some(0)),
    ("1 + y", Kind::Unknown, Some(4)),
    ("2 3", Kind::Syntax, Some(2)),
    ("x1 x2", Kind::Syntax, Some(3)),
    ("()", Kind::Syntax, Some(1)),
    ("3!", Kind::Syntax, Some(1)),
    ("x1+*x2", Kind::Syntax, Some(3)),
    ("cos(", Kind::Syntax, Some(4)),
    ("^2", Kind::Syntax, Some(0)),
    ("pi(1)", Kind::Syntax, Some(2)),
    ("sin", Kind::Syntax, Some(3)),
    ("x1^^2", Kind::Syntax, Some(3)),
    ("exp((x1)", Kind::Syntax, Some(8)),
];

pub fn kind(e: &ParseError) -> Kind {
    match e {
        ParseError::Empty => Kind::Empty,
        ParseError::Syntax { .. } => Kind::Syntax,
        ParseError::UnknownIdentifier { .. } => Kind::Unknown,
        ParseError::WrongArity { .. } => Kind::Arity,
        other => panic!("unexpected error {other:?}"),
    }
}

/// Runs every golden case and returns a description of each mismatch.
pub fn golden_mismatches() -> Vec<String> {
    let mut bad = Vec::new();
    for (src, printed) in ACCEPTED {
        match Expr::parse(src, 3) {
            Ok(e) if e.to_string() == *printed => {}
            Ok(e) => bad.push(format!("{src:?} printed as {e}")),
            Err(err) => bad.push(format!("{src:?} rejected: {err}")),
        }
    }
    for (src, expected, offset) in REJECTED {
        match Expr::parse(src, 3) {
            Ok(e) => bad.push(format!("{src:?} accepted as {e}")),
            Err(err) if kind(&err) != *expected || err.offset() != *offset => {
                bad.push(format!("{src:?}: {err}"))
            }
            Err(_) => {}
        }
    }
    bad
}

fn leaf(dim: usize) -> impl Strategy<Value = Node> {
    prop_oneof![
        prop_oneof![
            0.0..1e3f64,
            Just(0.0),
            Just(1.0),
            Just(0.1),
            Just(1e-7),
            Just(2.5e21),
            any::<u16>().prop_map(f64::from),
        ]
        .prop_map(Node::Num),
        (1..=dim).prop_map(|i| Node::Var(Var::X(i))),
        Just(Node::Var(Var::T)),
        Just(Node::Var(Var::Pi)),
    ]
}

fn op() -> impl Strategy<Value = BinOp> {
    prop_oneof![
        Just(BinOp::Add),
        Just(BinOp::Sub),
        Just(BinOp::Mul),
        Just(BinOp::Div),
        Just(BinOp::Pow),
    ]
}

/// Random expression trees in `x1..x{dim}` and `t`.
pub fn tree(dim: usize) -> impl Strategy<Value = Node> {
    leaf(dim).prop_recursive(8, 64, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Node::Neg(Box::new(e))),
            (op(), inner.clone(), inner.clone())
                .prop_map(|(o, a, b)| Node::Binary(o, Box::new(a), Box::new(b))),
            (prop::sample::select(Func::ALL.to_vec()), inner)
                .prop_map(|(f, e)| Node::Call(f, Box::new(e))),
        ]
    })
}
