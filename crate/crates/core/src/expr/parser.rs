use super::ast::{BinOp, Constant, ExprAst, Func, Node};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    /// Malformed input at `position`; `expected` names what the parser wanted.
    Syntax { expected: String, found: String },
    UnknownFunction(String),
    WrongArity { func: String, expected: usize, found: usize },
}

/// Parse failure with a byte offset into the source text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax { expected, found } => write!(
                f,
                "syntax error at position {}: expected {expected}, found {found}",
                self.position
            ),
            ParseErrorKind::UnknownFunction(name) => {
                write!(f, "unknown function `{name}` at position {}", self.position)
            }
            ParseErrorKind::WrongArity { func, expected, found } => write!(
                f,
                "function `{func}` at position {} takes {expected} argument(s), got {found}",
                self.position
            ),
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Op(c) => write!(f, "`{c}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            // exponent only when followed by digits, so `2e` stays a syntax error
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
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError {
                position: start,
                kind: ParseErrorKind::Syntax {
                    expected: "number".into(),
                    found: format!("`{text}`"),
                },
            })?;
            out.push((start, Tok::Num(value)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
            continue;
        }
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    position: i,
                    kind: ParseErrorKind::Syntax {
                        expected: "expression".into(),
                        found: format!("`{ch}`"),
                    },
                });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError {
            position: self.offset(),
            kind: ParseErrorKind::Syntax {
                expected: expected.into(),
                found: self.peek().to_string(),
            },
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    // unary minus sits between `*` and `^`: -a^b = -(a^b), -a*b = (-a)*b
    fn unary(&mut self) -> Result<Node, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let at = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let func = Func::from_name(&name).ok_or_else(|| ParseError {
                        position: at,
                        kind: ParseErrorKind::UnknownFunction(name.clone()),
                    })?;
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        args.push(self.expr()?);
                        while *self.peek() == Tok::Comma {
                            self.bump();
                            args.push(self.expr()?);
                        }
                    }
                    self.expect(Tok::RParen, "`,` or `)`")?;
                    if args.len() != func.arity() {
                        return Err(ParseError {
                            position: at,
                            kind: ParseErrorKind::WrongArity {
                                func: name,
                                expected: func.arity(),
                                found: args.len(),
                            },
                        });
                    }
                    return Ok(Node::Call(func, args));
                }
                Ok(match name.as_str() {
                    "pi" => Node::Const(Constant::Pi),
                    "e" => Node::Const(Constant::E),
                    _ => Node::Var(name),
                })
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

/// Parse a scalar expression.
///
/// Operators `+ - * / ^` with the usual precedence, `^` right-associative and
/// unary minus binding tighter than `*` but looser than `^`. Functions: sin,
/// cos, tan, exp, log, sqrt, abs, sign, pow(a,b), atan2(a,b). Constants: pi, e.
pub fn parse_expression(src: &str) -> Result<ExprAst, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("operator or end of input"));
    }
    Ok(ExprAst::new(root))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_call_reports_end_position() {
        let err = parse_expression("sin(").unwrap_err();
        assert_eq!(err.position, 4);
        match err.kind {
            ParseErrorKind::Syntax { expected, .. } => assert_eq!(expected, "expression"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn implicit_multiplication_rejected() {
        assert!(parse_expression("2q").is_err());
        assert!(parse_expression("2e").is_err());
        assert!(parse_expression("2 x").is_err());
    }

    #[test]
    fn unknown_function_and_arity() {
        let err = parse_expression("foo(1)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownFunction("foo".into()));
        let err = parse_expression("pow(1)").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::WrongArity { expected: 2, found: 1, .. }));
        let err = parse_expression("sin(1, 2)").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::WrongArity { expected: 1, found: 2, .. }));
    }

    #[test]
    fn exponent_literals() {
        let ast = parse_expression("1e-7 + 2.5E+3").unwrap();
        let vars = ast.variables();
        assert!(vars.is_empty());
    }

    #[test]
    fn stray_characters() {
        let err = parse_expression("1 + $").unwrap_err();
        assert_eq!(err.position, 4);
        assert!(parse_expression("(1 + 2").is_err());
        assert!(parse_expression("1 + 2)").is_err());
        assert!(parse_expression("").is_err());
    }

    #[test]
    fn unary_minus_precedence() {
        let a = parse_expression("-a^b").unwrap();
        let b = parse_expression("-(a^b)").unwrap();
        assert_eq!(a, b);
        let c = parse_expression("-a*b").unwrap();
        let d = parse_expression("(-a)*b").unwrap();
        assert_eq!(c, d);
    }
}
