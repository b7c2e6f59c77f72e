//! Scalar-field mini-language for datum and reference expressions.
//!
//! Grammar: coordinate symbols `x1..xn`, numeric literals, `+ - * /` (also
//! accepting the typographic `×` and `−`), unary minus, parentheses, and the
//! functions `sign`, `step` (2 of them unary), `min`, `max` (binary).
//! `step(t)` is 1 for t > 0 and 0 otherwise; `sign(0)` is 0.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.pos, self.msg)
    }
}

impl std::error::Error for ParseError {}

impl From<ParseError> for crate::error::Error {
    fn from(e: ParseError) -> Self {
        crate::error::Error::Config(format!("expression {e}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sign,
    Step,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based coordinate index (`x1` parses to `Coord(0)`).
    Coord(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, depth: 0 };
        let e = p.expression()?;
        if p.pos != p.tokens.len() {
            return Err(ParseError { pos: p.peek_pos(), msg: "trailing input".into() });
        }
        Ok(e)
    }

    pub fn eval(&self, coords: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Coord(k) => coords[*k],
            Expr::Neg(a) => -a.eval(coords),
            Expr::Add(a, b) => a.eval(coords) + b.eval(coords),
            Expr::Sub(a, b) => a.eval(coords) - b.eval(coords),
            Expr::Mul(a, b) => a.eval(coords) * b.eval(coords),
            Expr::Div(a, b) => a.eval(coords) / b.eval(coords),
            Expr::Call(f, args) => {
                let a = args[0].eval(coords);
                match f {
                    Func::Sign => {
                        if a > 0.0 {
                            1.0
                        } else if a < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Step => {
                        if a > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Min => a.min(args[1].eval(coords)),
                    Func::Max => a.max(args[1].eval(coords)),
                }
            }
        }
    }

    /// Highest coordinate index referenced (zero-based), if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Coord(k) => Some(*k),
            Expr::Neg(a) => a.max_coord(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_coord(), b.max_coord()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
            Expr::Call(_, args) => args.iter().filter_map(|a| a.max_coord()).max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Coord(usize),
    Func(Func),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let bytes: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0usize;
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        match c {
            ' ' | '\t' | '\r' | '\n' => i += 1,
            '+' => {
                out.push((pos, Tok::Plus));
                i += 1;
            }
            '-' | '\u{2212}' => {
                out.push((pos, Tok::Minus));
                i += 1;
            }
            '*' | '\u{00d7}' => {
                out.push((pos, Tok::Star));
                i += 1;
            }
            '/' => {
                out.push((pos, Tok::Slash));
                i += 1;
            }
            '(' => {
                out.push((pos, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((pos, Tok::RParen));
                i += 1;
            }
            ',' => {
                out.push((pos, Tok::Comma));
                i += 1;
            }
            '0'..='9' => {
                while i < bytes.len() && bytes[i].1.is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i].1 == '.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i].1 == 'e' || bytes[i].1 == 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j].1 == '+' || bytes[j].1 == '-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].1.is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].1.is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let end = if i < bytes.len() { bytes[i].0 } else { src.len() };
                let text = &src[pos..end];
                let v: f64 = text
                    .parse()
                    .map_err(|_| ParseError { pos, msg: format!("bad number `{text}`") })?;
                if !v.is_finite() {
                    return Err(ParseError { pos, msg: format!("literal `{text}` overflows") });
                }
                out.push((pos, Tok::Num(v)));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len()
                    && (bytes[i].1.is_ascii_alphanumeric() || bytes[i].1 == '_')
                {
                    i += 1;
                }
                let end = if i < bytes.len() { bytes[i].0 } else { src.len() };
                let name = &src[pos..end];
                let tok = match name {
                    "sign" => Tok::Func(Func::Sign),
                    "step" => Tok::Func(Func::Step),
                    "min" => Tok::Func(Func::Min),
                    "max" => Tok::Func(Func::Max),
                    _ => {
                        let rest = name.strip_prefix('x').ok_or_else(|| ParseError {
                            pos,
                            msg: format!("unknown symbol `{name}`"),
                        })?;
                        let k: usize = rest.parse().map_err(|_| ParseError {
                            pos,
                            msg: format!("unknown symbol `{name}`"),
                        })?;
                        if k == 0 || k > 64 {
                            return Err(ParseError {
                                pos,
                                msg: format!("coordinate `{name}` out of range"),
                            });
                        }
                        Tok::Coord(k - 1)
                    }
                };
                out.push((pos, tok));
            }
            other => {
                return Err(ParseError { pos, msg: format!("unexpected character `{other}`") })
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    depth: usize,
}

const MAX_DEPTH: usize = 200;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn peek_pos(&self) -> usize {
        self.tokens.get(self.pos).map(|(p, _)| *p).unwrap_or(usize::MAX)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError { pos: self.peek_pos(), msg: format!("expected {what}") })
        }
    }

    fn expression(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut e = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    e = Expr::Add(Box::new(e), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    e = Expr::Sub(Box::new(e), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        self.leave();
        Ok(e)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    e = Expr::Mul(Box::new(e), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    e = Expr::Div(Box::new(e), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            Expr::Neg(Box::new(self.unary()?))
        } else {
            self.primary()?
        };
        self.leave();
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.peek_pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Coord(k)) => Ok(Expr::Coord(k)),
            Some(Tok::LParen) => {
                let e = self.expression()?;
                self.expect(Tok::RParen, "closing parenthesis")?;
                Ok(e)
            }
            Some(Tok::Func(f)) => {
                self.expect(Tok::LParen, "opening parenthesis after function")?;
                let mut args = vec![self.expression()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    args.push(self.expression()?);
                }
                self.expect(Tok::RParen, "closing parenthesis")?;
                let want = match f {
                    Func::Sign | Func::Step => 1,
                    Func::Min | Func::Max => 2,
                };
                if args.len() != want {
                    return Err(ParseError {
                        pos,
                        msg: format!("function takes {want} argument(s), got {}", args.len()),
                    });
                }
                Ok(Expr::Call(f, args))
            }
            _ => Err(ParseError { pos, msg: "expected a value".into() }),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError { pos: self.peek_pos(), msg: "expression too deep".into() });
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }
}
