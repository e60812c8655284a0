//! The analytic scalar-field grammar used in run configurations:
//! floating-point literals, the coordinates `x1` and `x2`, the operators
//! `+ - * / ^`, the two-or-more-argument functions `min(...)` and `max(...)`,
//! unary minus, and parentheses.

use std::fmt;

use thiserror::Error;

use super::dual::Dual2;
use crate::Vec2;

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("unexpected character '{0}' at byte {1}")]
    BadChar(char, usize),
    #[error("malformed number literal at byte {0}")]
    BadNumber(usize),
    #[error("unknown identifier '{0}'")]
    UnknownIdent(String),
    #[error("expected {0}, found {1}")]
    Expected(&'static str, String),
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("trailing input after expression: '{0}'")]
    Trailing(String),
}

/// Parsed expression tree.
#[derive(Clone, Debug)]
pub enum Expr {
    Const(f64),
    X1,
    X2,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let expr = p.expr()?;
        match p.peek() {
            None => Ok(expr),
            Some(t) => Err(ExprError::Trailing(t.to_string())),
        }
    }

    /// Value only; the cheap path for tight loops that need no derivatives.
    pub fn eval(&self, p: Vec2) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X1 => p.x,
            Expr::X2 => p.y,
            Expr::Neg(a) => -a.eval(p),
            Expr::Add(a, b) => a.eval(p) + b.eval(p),
            Expr::Sub(a, b) => a.eval(p) - b.eval(p),
            Expr::Mul(a, b) => a.eval(p) * b.eval(p),
            Expr::Div(a, b) => a.eval(p) / b.eval(p),
            Expr::Pow(a, b) => a.eval(p).powf(b.eval(p)),
            Expr::Min(a, b) => {
                let (av, bv) = (a.eval(p), b.eval(p));
                if av <= bv {
                    av
                } else {
                    bv
                }
            }
            Expr::Max(a, b) => {
                let (av, bv) = (a.eval(p), b.eval(p));
                if av >= bv {
                    av
                } else {
                    bv
                }
            }
        }
    }

    /// Value, gradient, and Hessian by dual-number propagation.
    pub fn eval2(&self, p: Vec2) -> Dual2 {
        match self {
            Expr::Const(c) => Dual2::constant(*c),
            Expr::X1 => Dual2::var_x(p.x),
            Expr::X2 => Dual2::var_y(p.y),
            Expr::Neg(a) => Dual2::neg(a.eval2(p)),
            Expr::Add(a, b) => Dual2::add(a.eval2(p), b.eval2(p)),
            Expr::Sub(a, b) => Dual2::sub(a.eval2(p), b.eval2(p)),
            Expr::Mul(a, b) => Dual2::mul(a.eval2(p), b.eval2(p)),
            Expr::Div(a, b) => Dual2::div(a.eval2(p), b.eval2(p)),
            Expr::Pow(a, b) => match **b {
                Expr::Const(c) => Dual2::powc(a.eval2(p), c),
                Expr::Neg(ref inner) => match **inner {
                    Expr::Const(c) => Dual2::powc(a.eval2(p), -c),
                    _ => Dual2::pow(a.eval2(p), b.eval2(p)),
                },
                _ => Dual2::pow(a.eval2(p), b.eval2(p)),
            },
            Expr::Min(a, b) => Dual2::min(a.eval2(p), b.eval2(p)),
            Expr::Max(a, b) => Dual2::max(a.eval2(p), b.eval2(p)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    X1,
    X2,
    Min,
    Max,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Token::Num(v) => return write!(f, "number {v}"),
            Token::X1 => "x1",
            Token::X2 => "x2",
            Token::Min => "min",
            Token::Max => "max",
            Token::Plus => "+",
            Token::Minus => "-",
            Token::Star => "*",
            Token::Slash => "/",
            Token::Caret => "^",
            Token::LParen => "(",
            Token::RParen => ")",
            Token::Comma => ",",
        };
        write!(f, "'{s}'")
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // Exponent part, e.g. 1.5e-3.
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ExprError::BadNumber(start))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_alphanumeric() {
                    i += 1;
                }
                match &src[start..i] {
                    "x1" => out.push(Token::X1),
                    "x2" => out.push(Token::X2),
                    "min" => out.push(Token::Min),
                    "max" => out.push(Token::Max),
                    other => return Err(ExprError::UnknownIdent(other.to_string())),
                }
            }
            other => return Err(ExprError::BadChar(other, i)),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &'static str) -> Result<(), ExprError> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(ExprError::Expected(what, t.to_string())),
            None => Err(ExprError::UnexpectedEnd),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.next();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.next();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.next();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.next();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(&Token::Minus) {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(&Token::Caret) {
            self.next();
            // Right-associative, and a unary minus may follow the caret.
            let exponent = self.unary_power()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn unary_power(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(&Token::Minus) {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary_power()?)));
        }
        self.power()
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::X1) => Ok(Expr::X1),
            Some(Token::X2) => Ok(Expr::X2),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen, "')'")?;
                Ok(e)
            }
            Some(t @ (Token::Min | Token::Max)) => {
                let is_min = t == Token::Min;
                self.expect(Token::LParen, "'(' after min/max")?;
                let mut acc = self.expr()?;
                let mut args = 1;
                while self.peek() == Some(&Token::Comma) {
                    self.next();
                    let rhs = self.expr()?;
                    acc = if is_min {
                        Expr::Min(Box::new(acc), Box::new(rhs))
                    } else {
                        Expr::Max(Box::new(acc), Box::new(rhs))
                    };
                    args += 1;
                }
                self.expect(Token::RParen, "')'")?;
                if args < 2 {
                    return Err(ExprError::Expected("at least two min/max arguments", "one".into()));
                }
                Ok(acc)
            }
            Some(t) => Err(ExprError::Expected("a value", t.to_string())),
            None => Err(ExprError::UnexpectedEnd),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_ring_geometry() {
        let g = Expr::parse(
            "max((x1+0.8)^2 + (x2+0.8)^2 - 1.8^2, -(x1+0.8)^2 - (x2+0.8)^2 + 0.6^2)",
        )
        .unwrap();
        // Origin: max(1.28 - 3.24, -1.28 + 0.36) = -0.92.
        assert!((g.eval(Vec2::ZERO) + 0.92).abs() < 1e-12);
        // Center of the hole: max(-3.24, 0.36) = 0.36.
        assert!((g.eval(Vec2::new(-0.8, -0.8)) - 0.36).abs() < 1e-12);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("-x1^2 + 2*3").unwrap();
        // -(x1²) + 6, not (-x1)².
        assert!((e.eval(Vec2::new(2.0, 0.0)) - 2.0).abs() < 1e-12);
        let e = Expr::parse("2^-2").unwrap();
        assert!((e.eval(Vec2::ZERO) - 0.25).abs() < 1e-12);
        let e = Expr::parse("1 - 2 - 3").unwrap();
        assert!((e.eval(Vec2::ZERO) + 4.0).abs() < 1e-12);
        let e = Expr::parse("2 / 4 / 2").unwrap();
        assert!((e.eval(Vec2::ZERO) - 0.25).abs() < 1e-12);
        let e = Expr::parse("1.5e2 + 1e-1").unwrap();
        assert!((e.eval(Vec2::ZERO) - 150.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Expr::parse("x3 + 1").is_err());
        assert!(Expr::parse("min(x1)").is_err());
        assert!(Expr::parse("(x1 + 2").is_err());
        assert!(Expr::parse("x1 + ").is_err());
        assert!(Expr::parse("x1 x2").is_err());
        assert!(Expr::parse("").is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let e = Expr::parse("max(x1^2 + x2^2 - 1, x1*x2/2 - 0.3) / (1 + x1^2)").unwrap();
        let h = 1e-6;
        for &(x, y) in &[(0.4, -0.9), (1.2, 0.3), (-0.7, -0.2)] {
            let d = e.eval2(Vec2::new(x, y));
            let fdx = (e.eval(Vec2::new(x + h, y)) - e.eval(Vec2::new(x - h, y))) / (2.0 * h);
            let fdy = (e.eval(Vec2::new(x, y + h)) - e.eval(Vec2::new(x, y - h))) / (2.0 * h);
            let scale = 1.0 + d.dx.abs().max(d.dy.abs());
            assert!((d.dx - fdx).abs() < 1e-6 * scale, "ddx at ({x},{y})");
            assert!((d.dy - fdy).abs() < 1e-6 * scale, "ddy at ({x},{y})");
        }
    }
}
