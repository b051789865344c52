use super::{BinOp, Func, Node};
use crate::error::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    /// Returns the next token and its starting byte offset.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || (c == '.' && rest[1..].starts_with(|d: char| d.is_ascii_digit())) {
            let bytes = rest.as_bytes();
            let mut i = 0;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
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
            let text = &rest[..i];
            let v: f64 = text.parse().map_err(|_| ParseError {
                offset: start,
                kind: ParseErrorKind::BadLiteral(text.to_string()),
            })?;
            self.pos += i;
            return Ok((Tok::Num(v), start));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let len = rest
                .char_indices()
                .find(|&(_, ch)| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .map(|(i, _)| i)
                .unwrap_or(rest.len());
            self.pos += len;
            return Ok((Tok::Ident(rest[..len].to_string()), start));
        }
        if "+-*/^()[],".contains(c) {
            self.pos += 1;
            return Ok((Tok::Sym(c), start));
        }
        Err(ParseError {
            offset: start,
            kind: ParseErrorKind::Syntax {
                found: format!("`{c}`"),
                expected: vec!["number", "identifier", "operator"],
            },
        })
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    at: usize,
    n: usize,
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Sym(c) => format!("`{c}`"),
        Tok::End => "end of input".to_string(),
    }
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, at) = self.lex.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn syntax(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError {
            offset: self.at,
            kind: ParseErrorKind::Syntax { found: describe(&self.tok), expected },
        }
    }

    fn expect(&mut self, c: char, name: &'static str) -> Result<(), ParseError> {
        if self.tok == Tok::Sym(c) {
            self.bump()
        } else {
            Err(self.syntax(vec![name]))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        match self.tok {
            Tok::Sym('-') => {
                self.bump()?;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Tok::Sym('+') => {
                self.bump()?;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.tok != Tok::Sym('^') {
            return Ok(base);
        }
        self.bump()?;
        let exp_at = self.at;
        let exponent = self.unary()?;
        lower_power(base, exponent, exp_at)
    }

    fn index(&mut self) -> Result<usize, ParseError> {
        self.expect('[', "`[`")?;
        let at = self.at;
        let idx = match self.tok {
            Tok::Num(v) if v.fract() == 0.0 && v >= 1.0 => v as usize,
            _ => return Err(self.syntax(vec!["positive integer index"])),
        };
        self.bump()?;
        self.expect(']', "`]`")?;
        if idx > self.n {
            return Err(ParseError {
                offset: at,
                kind: ParseErrorKind::UnknownSymbol(format!("index {idx} (dimension {})", self.n)),
            });
        }
        Ok(idx - 1)
    }

    fn signed_int(&mut self) -> Result<i64, ParseError> {
        let neg = if self.tok == Tok::Sym('-') {
            self.bump()?;
            true
        } else {
            false
        };
        match self.tok {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() < 1e9 => {
                self.bump()?;
                Ok(if neg { -(v as i64) } else { v as i64 })
            }
            _ => Err(self.syntax(vec!["integer literal"])),
        }
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let at = self.at;
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Node::Num(v))
            }
            Tok::Sym('(') => {
                self.bump()?;
                let inner = self.expr()?;
                self.expect(')', "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump()?;
                match name.as_str() {
                    "t" => Ok(Node::T),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    "x" | "dx" => {
                        let i = if self.tok == Tok::Sym('[') {
                            self.index()?
                        } else if self.n == 1 {
                            0
                        } else {
                            return Err(ParseError {
                                offset: at,
                                kind: ParseErrorKind::UnknownSymbol(format!(
                                    "{name} (use {name}[i] in dimension {})",
                                    self.n
                                )),
                            });
                        };
                        Ok(if name == "x" { Node::X(i) } else { Node::Dx(i) })
                    }
                    "rpow" => {
                        self.expect('(', "`(`")?;
                        let base = self.expr()?;
                        self.expect(',', "`,`")?;
                        let p_at = self.at;
                        let p = self.signed_int()?;
                        self.expect(',', "`,`")?;
                        let q = self.signed_int()?;
                        self.expect(')', "`)`")?;
                        make_rpow(base, p, q, p_at)
                    }
                    other => match Func::from_name(other) {
                        Some(f) => {
                            self.expect('(', "`(`")?;
                            let arg = self.expr()?;
                            self.expect(')', "`)`")?;
                            Ok(Node::Call(f, Box::new(arg)))
                        }
                        None => Err(ParseError {
                            offset: at,
                            kind: ParseErrorKind::UnknownSymbol(other.to_string()),
                        }),
                    },
                }
            }
            _ => Err(self.syntax(vec!["number", "identifier", "`(`"])),
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn make_rpow(base: Node, p: i64, q: i64, at: usize) -> Result<Node, ParseError> {
    if q == 0 {
        return Err(ParseError { offset: at, kind: ParseErrorKind::BadLiteral("zero denominator".into()) });
    }
    let (mut p, mut q) = if q < 0 { (-p, -q) } else { (p, q) };
    let g = gcd(p, q).max(1);
    p /= g;
    q /= g;
    if q % 2 == 0 {
        return Err(ParseError { offset: at, kind: ParseErrorKind::EvenDenominator { p, q } });
    }
    if q == 1 {
        return Ok(Node::Powi(Box::new(base), p as i32));
    }
    Ok(Node::Rpow(Box::new(base), p as i32, q as u32))
}

fn int_literal(node: &Node) -> Option<i64> {
    match node {
        Node::Num(v) if v.fract() == 0.0 && v.abs() < 1e9 => Some(*v as i64),
        Node::Neg(inner) => int_literal(inner).map(|v| -v),
        _ => None,
    }
}

fn lower_power(base: Node, exponent: Node, at: usize) -> Result<Node, ParseError> {
    if let Some(k) = int_literal(&exponent) {
        return Ok(Node::Powi(Box::new(base), k as i32));
    }
    let ratio = match &exponent {
        Node::Bin(BinOp::Div, p, q) => int_literal(p).zip(int_literal(q)),
        Node::Neg(inner) => match inner.as_ref() {
            Node::Bin(BinOp::Div, p, q) => int_literal(p).zip(int_literal(q)).map(|(p, q)| (-p, q)),
            _ => None,
        },
        _ => None,
    };
    if let Some((p, q)) = ratio {
        return make_rpow(base, p, q, at);
    }
    Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)))
}

pub(super) fn parse(src: &str, n: usize) -> Result<Node, ParseError> {
    let mut p = Parser { lex: Lexer { src, pos: 0 }, tok: Tok::End, at: 0, n };
    p.bump()?;
    let node = p.expr()?;
    if p.tok != Tok::End {
        return Err(p.syntax(vec!["operator", "end of input"]));
    }
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_associativity() {
        // right associative: 2^3^2 = 2^(3^2); the inner literal power lowers to Powi
        assert_eq!(
            parse("2^3^2", 0).unwrap(),
            Node::Bin(
                BinOp::Pow,
                Box::new(Node::Num(2.0)),
                Box::new(Node::Powi(Box::new(Node::Num(3.0)), 2)),
            )
        );
        // -x^2 is -(x^2)
        assert_eq!(
            parse("-x^2", 1).unwrap(),
            Node::Neg(Box::new(Node::Powi(Box::new(Node::X(0)), 2)))
        );
    }

    #[test]
    fn rational_exponents_lower_to_rpow() {
        assert_eq!(parse("x^(4/3)", 1).unwrap(), Node::Rpow(Box::new(Node::X(0)), 4, 3));
        assert_eq!(parse("x^(-2/6)", 1).unwrap(), Node::Rpow(Box::new(Node::X(0)), -1, 3));
        assert_eq!(parse("x^(6/3)", 1).unwrap(), Node::Powi(Box::new(Node::X(0)), 2));
    }

    #[test]
    fn even_denominator_rejected() {
        let err = parse("x^(1/2)", 1).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::EvenDenominator { p: 1, q: 2 }));
        assert_eq!(err.offset, 2);
        assert!(parse("rpow(x, 3, 4)", 1).is_err());
    }

    #[test]
    fn error_offsets() {
        let err = parse("dx^2 + * x", 1).unwrap_err();
        assert_eq!(err.offset, 7);
        assert!(matches!(err.kind, ParseErrorKind::Syntax { .. }));

        let err = parse("y + 1", 1).unwrap_err();
        assert_eq!(err.offset, 0);
        assert!(matches!(err.kind, ParseErrorKind::UnknownSymbol(_)));

        let err = parse("x[3]", 2).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::UnknownSymbol(_)));

        // bare x is ambiguous in dimension 2, and undefined in t-only context
        assert!(parse("x", 2).is_err());
        assert!(parse("cos(x)", 0).is_err());
        assert!(parse("(t", 0).is_err());
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse("1.5e-3", 0).unwrap(), Node::Num(1.5e-3));
        assert_eq!(parse(".5", 0).unwrap(), Node::Num(0.5));
    }
}
