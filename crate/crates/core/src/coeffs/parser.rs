//! Hand-written recursive-descent parser for the expression grammar.

use super::expr::{BinOp, Func, Node, ParseError, Var, MAX_DEPTH, MAX_SOURCE_LEN};

/// Recursion guard, independent of tree depth: redundant parentheses nest
/// the parser without growing the tree.
const MAX_NESTING: usize = 4 * MAX_DEPTH;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let value = lit.parse::<f64>().ok().filter(|v| v.is_finite());
                match value {
                    Some(v) => {
                        out.push((Tok::Num(v), start));
                        continue;
                    }
                    None => {
                        return Err(ParseError::Syntax {
                            offset: start,
                            found: format!("malformed number '{lit}'"),
                            expected: vec!["finite number".into()],
                        })
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().expect("non-empty remainder");
                return Err(ParseError::Syntax {
                    offset: start,
                    found: format!("character '{ch}'"),
                    expected: vec!["operator".into(), "operand".into()],
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
    nesting: usize,
}

type Parsed = Result<(Node, usize), ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, expected: &[&str]) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            found: self.peek().describe(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(ParseError::TooDeep {
                offset: self.offset(),
            });
        }
        Ok(())
    }

    fn node(&self, node: Node, depth: usize, offset: usize) -> Parsed {
        if depth > MAX_DEPTH {
            return Err(ParseError::TooDeep { offset });
        }
        Ok((node, depth))
    }

    fn expr(&mut self) -> Parsed {
        self.enter()?;
        let (mut lhs, mut depth) = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            let at = self.bump().1;
            let (rhs, rd) = self.term()?;
            let d = 1 + depth.max(rd);
            (lhs, depth) = self.node(Node::Binary(op, Box::new(lhs), Box::new(rhs)), d, at)?;
        }
        self.nesting -= 1;
        Ok((lhs, depth))
    }

    fn term(&mut self) -> Parsed {
        let (mut lhs, mut depth) = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            let at = self.bump().1;
            let (rhs, rd) = self.factor()?;
            let d = 1 + depth.max(rd);
            (lhs, depth) = self.node(Node::Binary(op, Box::new(lhs), Box::new(rhs)), d, at)?;
        }
        Ok((lhs, depth))
    }

    fn factor(&mut self) -> Parsed {
        self.enter()?;
        let (base, bd) = self.unary()?;
        let out = if *self.peek() == Tok::Caret {
            let at = self.bump().1;
            let (exp, ed) = self.factor()?;
            self.node(
                Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)),
                1 + bd.max(ed),
                at,
            )?
        } else {
            (base, bd)
        };
        self.nesting -= 1;
        Ok(out)
    }

    fn unary(&mut self) -> Parsed {
        if *self.peek() == Tok::Minus {
            let at = self.bump().1;
            if *self.peek() == Tok::Minus {
                return Err(self.syntax(&["number", "identifier", "'('"]));
            }
            let (inner, d) = self.atom()?;
            return self.node(Node::Neg(Box::new(inner)), d + 1, at);
        }
        self.atom()
    }

    fn atom(&mut self) -> Parsed {
        let at = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok((Node::Num(v), 1))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.syntax(&["operator", "')'"]));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(func) = Func::from_name(&name) {
                    return self.call(func, name, at);
                }
                let var = match name.as_str() {
                    "t" => Some(Var::T),
                    "pi" => Some(Var::Pi),
                    _ => name
                        .strip_prefix('x')
                        .and_then(|d| d.parse::<usize>().ok())
                        .filter(|&i| i >= 1 && i <= self.dim && name == format!("x{i}"))
                        .map(Var::X),
                };
                match var {
                    Some(v) => Ok((Node::Var(v), 1)),
                    None => Err(ParseError::UnknownIdentifier { name, offset: at }),
                }
            }
            _ => Err(self.syntax(&["number", "identifier", "'('", "'-'"])),
        }
    }

    fn call(&mut self, func: Func, name: String, at: usize) -> Parsed {
        if *self.peek() != Tok::LParen {
            return Err(self.syntax(&["'('"]));
        }
        self.bump();
        if *self.peek() == Tok::RParen {
            return Err(ParseError::WrongArity {
                name,
                offset: at,
                found: 0,
            });
        }
        let (arg, d) = self.expr()?;
        let mut count = 1;
        while *self.peek() == Tok::Comma {
            self.bump();
            self.expr()?;
            count += 1;
        }
        if count != 1 {
            return Err(ParseError::WrongArity {
                name,
                offset: at,
                found: count,
            });
        }
        if *self.peek() != Tok::RParen {
            return Err(self.syntax(&["operator", "')'"]));
        }
        self.bump();
        self.node(Node::Call(func, Box::new(arg)), d + 1, at)
    }
}

pub(crate) fn parse(text: &str, dim: usize) -> Result<Node, ParseError> {
    if text.len() > MAX_SOURCE_LEN {
        return Err(ParseError::TooLong { len: text.len() });
    }
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        dim,
        nesting: 0,
    };
    let (node, _) = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.syntax(&["operator", "end of input"]));
    }
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::super::expr::Expr;
    use super::*;

    #[test]
    fn precedence_and_associativity() {
        let v = |s: &str| Expr::parse(s, 1).unwrap().eval(&[0.0], 0.0).unwrap();
        assert_eq!(v("1+2*3"), 7.0);
        assert_eq!(v("2^3^2"), 512.0);
        assert_eq!(v("8/4/2"), 1.0);
        assert_eq!(v("-2^2"), 4.0);
        assert_eq!(v("2^-1"), 0.5);
    }

    #[test]
    fn unknown_axis_for_dimension() {
        let err = Expr::parse("sin(2*pi*x2)", 1).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownIdentifier {
                name: "x2".into(),
                offset: 9
            }
        );
        assert!(Expr::parse("sin(2*pi*x2)", 2).is_ok());
        assert!(Expr::parse("x0", 3).is_err());
        assert!(Expr::parse("x01", 3).is_err());
    }

    #[test]
    fn syntax_errors_report_offsets() {
        match Expr::parse("1 + * 2", 1).unwrap_err() {
            ParseError::Syntax { offset, .. } => assert_eq!(offset, 4),
            e => panic!("{e:?}"),
        }
        match Expr::parse("(1+2", 1).unwrap_err() {
            ParseError::Syntax {
                offset, expected, ..
            } => {
                assert_eq!(offset, 4);
                assert!(expected.contains(&"')'".to_string()));
            }
            e => panic!("{e:?}"),
        }
        assert_eq!(
            Expr::parse("sin(1, 2)", 1).unwrap_err(),
            ParseError::WrongArity {
                name: "sin".into(),
                offset: 0,
                found: 2
            }
        );
    }

    #[test]
    fn depth_limits() {
        let deep = format!("{}1{}", "(".repeat(100), ")".repeat(100));
        assert!(Expr::parse(&deep, 1).is_ok());
        let very_deep = format!("{}1{}", "(".repeat(5000), ")".repeat(5000));
        assert!(matches!(
            Expr::parse(&very_deep, 1),
            Err(ParseError::TooDeep { .. })
        ));
        let chain = vec!["1"; 70].join("+");
        assert!(matches!(
            Expr::parse(&chain, 1),
            Err(ParseError::TooDeep { .. })
        ));
        let pow = vec!["2"; 30_000].join("^");
        assert!(matches!(
            Expr::parse(&pow, 1),
            Err(ParseError::TooDeep { .. })
        ));
    }

    #[test]
    fn length_limit() {
        let long = "1".repeat(MAX_SOURCE_LEN + 1);
        assert!(matches!(
            Expr::parse(&long, 1),
            Err(ParseError::TooLong { .. })
        ));
        assert_eq!(Expr::parse("   ", 1).unwrap_err(), ParseError::Empty);
    }
}
