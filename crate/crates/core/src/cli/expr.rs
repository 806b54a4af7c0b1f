//! Coefficient expressions: `+ - * / ^`, unary minus, parentheses, numbers,
//! `pi`, coordinate names and `sin cos exp log sqrt sech`.
//!
//! Expressions are parsed once and evaluated on jets, so every derivative the
//! geometry needs is exact.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::jetcalc::{Field, JetError, ScalarField, Taylor};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Sech,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sech" => Func::Sech,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sech => "sech",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str, vars: &[&str]) -> Result<Expr, ParseError> {
        let mut p = Parser { src, vars, toks: lex(src)?, pos: 0 };
        let e = p.expr()?;
        match p.peek() {
            Tok::End => Ok(e),
            _ => Err(p.error("unexpected input after expression")),
        }
    }

    /// Value of a coordinate-free subtree.
    fn constant(&self) -> Option<f64> {
        Some(match self {
            Expr::Num(v) => *v,
            Expr::Var(_) => return None,
            Expr::Neg(a) => -a.constant()?,
            Expr::Add(a, b) => a.constant()? + b.constant()?,
            Expr::Sub(a, b) => a.constant()? - b.constant()?,
            Expr::Mul(a, b) => a.constant()? * b.constant()?,
            Expr::Div(a, b) => a.constant()? / b.constant()?,
            Expr::Pow(a, b) => {
                let (x, p) = (a.constant()?, b.constant()?);
                if p.fract() == 0.0 && p.abs() <= 64.0 {
                    x.powi(p as i32)
                } else {
                    x.powf(p)
                }
            }
            Expr::Call(f, a) => {
                let x = a.constant()?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                    Func::Sqrt => x.sqrt(),
                    Func::Sech => x.cosh().recip(),
                }
            }
        })
    }

    pub fn eval(&self, vars: &[Taylor]) -> Result<Taylor, JetError> {
        let proto = &vars[0];
        Ok(match self {
            Expr::Num(v) => proto.const_like(*v),
            Expr::Var(k) => vars[*k].clone(),
            Expr::Neg(a) => -a.eval(vars)?,
            Expr::Add(a, b) => a.eval(vars)? + b.eval(vars)?,
            Expr::Sub(a, b) => a.eval(vars)? - b.eval(vars)?,
            Expr::Mul(a, b) => a.eval(vars)? * b.eval(vars)?,
            Expr::Div(a, b) => {
                let d = b.eval(vars)?;
                if d.value() == 0.0 {
                    return Err(JetError::Domain("division by zero".into()));
                }
                a.eval(vars)? * d.recip()
            }
            Expr::Pow(a, b) => {
                let base = a.eval(vars)?;
                match b.constant() {
                    Some(p) if p.fract() == 0.0 && p.abs() <= 64.0 => {
                        if p < 0.0 && base.value() == 0.0 {
                            return Err(JetError::Domain("zero to a negative power".into()));
                        }
                        base.powi(p as i32)
                    }
                    Some(p) => {
                        if base.value() <= 0.0 {
                            return Err(JetError::Domain(format!("non-positive base to the power {p}")));
                        }
                        base.powf(p)
                    }
                    None => {
                        if base.value() <= 0.0 {
                            return Err(JetError::Domain("non-positive base to a variable power".into()));
                        }
                        (b.eval(vars)? * base.ln()).exp()
                    }
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(vars)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sech => x.sech(),
                    Func::Log => {
                        if x.value() <= 0.0 {
                            return Err(JetError::Domain(format!("log of {}", x.value())));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x.value() <= 0.0 {
                            return Err(JetError::Domain(format!("sqrt of {} (jets need a positive argument)", x.value())));
                        }
                        x.sqrt()
                    }
                }
            }
        })
    }
}

/// Fully parenthesized source text of an expression; parses back to the same tree.
pub struct Source<'a> {
    expr: &'a Expr,
    vars: &'a [&'a str],
}

impl Expr {
    pub fn source<'a>(&'a self, vars: &'a [&'a str]) -> Source<'a> {
        Source { expr: self, vars }
    }
}

impl fmt::Display for Source<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |e| Source { expr: e, vars: self.vars };
        match self.expr {
            // `{:?}` keeps enough digits to round-trip
            Expr::Num(v) if v.is_sign_negative() => write!(f, "({v:?})"),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(k) => f.write_str(self.vars[*k]),
            Expr::Neg(a) => write!(f, "(-{})", sub(a)),
            Expr::Add(a, b) => write!(f, "({} + {})", sub(a), sub(b)),
            Expr::Sub(a, b) => write!(f, "({} - {})", sub(a), sub(b)),
            Expr::Mul(a, b) => write!(f, "({} * {})", sub(a), sub(b)),
            Expr::Div(a, b) => write!(f, "({} / {})", sub(a), sub(b)),
            Expr::Pow(a, b) => write!(f, "({} ^ {})", sub(a), sub(b)),
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), sub(a)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let (at, c) = bytes[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].1.is_ascii_digit() || bytes[i].1 == '.') {
                i += 1;
            }
            if i < bytes.len() && matches!(bytes[i].1, 'e' | 'E') {
                let mut j = i + 1;
                if j < bytes.len() && matches!(bytes[j].1, '+' | '-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].1.is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let end = bytes.get(i).map_or(src.len(), |b| b.0);
            let text = &src[bytes[start].0..end];
            let v = text.parse::<f64>().map_err(|_| error_at(src, at, format!("malformed number '{text}'")))?;
            out.push((Tok::Num(v), at));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].1.is_alphanumeric() || bytes[i].1 == '_') {
                i += 1;
            }
            let end = bytes.get(i).map_or(src.len(), |b| b.0);
            out.push((Tok::Ident(src[bytes[start].0..end].to_string()), at));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Op(c), at));
            i += 1;
        } else {
            return Err(error_at(src, at, format!("unexpected character '{c}'")));
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

fn error_at(src: &str, offset: usize, message: String) -> ParseError {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    ParseError { line, column, message }
}

struct Parser<'a> {
    src: &'a str,
    vars: &'a [&'a str],
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn error(&self, msg: &str) -> ParseError {
        error_at(self.src, self.toks[self.pos].1, msg.to_string())
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Op('-') => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Op('/') => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // `-x^2` is `-(x^2)`; `^` is right associative
    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let here = self.pos;
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::lookup(&name) {
                    if *self.peek() != Tok::Op('(') {
                        return Err(self.error(&format!("expected '(' after {name}")));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if let Some(k) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(k));
                }
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                self.pos = here;
                Err(self.error(&format!("unknown name '{name}' (coordinates: {})", self.vars.join(", "))))
            }
            Tok::End => Err(self.error("unexpected end of expression")),
            Tok::Op(c) => {
                self.pos = here;
                Err(self.error(&format!("unexpected '{c}'")))
            }
        }
    }
}

/// A parsed expression as a scalar field over the named coordinates.
pub struct ExprField {
    dim: usize,
    expr: Expr,
}

impl ScalarField for ExprField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn taylor(&self, point: &[f64], order: usize) -> Result<Taylor, JetError> {
        if point.len() != self.dim {
            return Err(JetError::DimensionMismatch { expected: self.dim, got: point.len() });
        }
        let t = self.expr.eval(&Taylor::seed(point, order))?;
        if !t.is_finite() {
            return Err(JetError::NonFinite { point: point.to_vec() });
        }
        Ok(t)
    }
}

pub fn parse_field(src: &str, vars: &[&str]) -> Result<Field, ParseError> {
    let expr = Expr::parse(src, vars)?;
    Ok(Arc::new(ExprField { dim: vars.len(), expr }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetcalc::fd_hessian;
    use approx::assert_abs_diff_eq;

    const XY: [&str; 2] = ["x", "y"];

    fn eval(src: &str, p: &[f64]) -> f64 {
        parse_field(src, &XY).unwrap().value(p).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("1 + 2 * 3", &[0.0, 0.0]), 7.0);
        assert_eq!(eval("-2^2", &[0.0, 0.0]), -4.0);
        assert_eq!(eval("2^3^2", &[0.0, 0.0]), 512.0);
        assert_eq!(eval("(1 + 2) * 3", &[0.0, 0.0]), 9.0);
        assert_eq!(eval("8 / 4 / 2", &[0.0, 0.0]), 1.0);
        assert_eq!(eval("x - y - 1", &[5.0, 2.0]), 2.0);
        assert_eq!(eval("1.5e2 + 2E-1", &[0.0, 0.0]), 150.2);
        assert_abs_diff_eq!(eval("sech(0) + cos(pi)", &[0.0, 0.0]), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn derivatives_are_exact() {
        let f = parse_field("exp(x) * sin(y) + x^2.5 / sqrt(y) + log(x*y) + x^y", &XY).unwrap();
        let p = [1.3, 0.7];
        let t = f.taylor(&p, 2).unwrap();
        let fd = fd_hessian(&|q: &[f64]| f.value(q).unwrap(), &p, 1e-4);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(t.hessian()[i][j], fd[i][j], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn diagnostics() {
        let e = Expr::parse("sin(", &XY).unwrap_err();
        assert_eq!((e.line, e.column), (1, 5));
        let e = Expr::parse("x +\n  2 * z", &XY).unwrap_err();
        assert_eq!((e.line, e.column), (2, 7));
        assert!(e.message.contains("'z'"));
        let e = Expr::parse("x $ y", &XY).unwrap_err();
        assert_eq!(e.column, 3);
        assert!(Expr::parse("x y", &XY).is_err());
        assert!(Expr::parse("sin x", &XY).is_err());
        assert!(Expr::parse("(x", &XY).is_err());
        assert!(Expr::parse("", &XY).is_err());
    }

    #[test]
    fn domain_errors() {
        let f = parse_field("log(x)", &XY).unwrap();
        assert!(matches!(f.value(&[-1.0, 0.0]), Err(JetError::Domain(_))));
        let f = parse_field("1 / (x - y)", &XY).unwrap();
        assert!(f.value(&[1.0, 1.0]).is_err());
    }
}
