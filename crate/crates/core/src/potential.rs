//! Potentials `V(x)` and their non-Gaussian parts.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest polynomial degree accepted.
pub const MAX_DEGREE: usize = 8;

/// The part of a single-site Hamiltonian left after removing the
/// oscillator term, applied as `exp(-i H₁(x) δt)`.
pub trait NonGaussian: Send + Sync {
    fn h1(&self, x: f64) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `V(x) = Σ_k c_k x^k`.
    Polynomial { coefficients: Vec<f64> },
    /// `V(x) = cosh(x − x0) − 1`.
    CoshShifted { x0: f64 },
    /// Expression in `x`.
    Custom { expression: Expression },
}

impl PotentialSpec {
    /// Asymmetric double well `x²/2 − (1+ε/4)x³/2 + x⁴/8`, whose false
    /// vacuum sits at the origin and true vacuum has depth ≈ ε.
    pub fn double_well(eps: f64) -> Self {
        PotentialSpec::Polynomial {
            coefficients: vec![0.0, 0.0, 0.5, -(1.0 + eps / 4.0) / 2.0, 0.125],
        }
    }

    pub fn cosh_shifted(x0: f64) -> Self {
        PotentialSpec::CoshShifted { x0 }
    }

    /// `V(x) = x²/2`, for which `H₁ ≡ 0`.
    pub fn harmonic() -> Self {
        PotentialSpec::Polynomial {
            coefficients: vec![0.0, 0.0, 0.5],
        }
    }

    /// `V ≡ 0`.
    pub fn zero() -> Self {
        PotentialSpec::Polynomial {
            coefficients: vec![],
        }
    }

    pub fn custom(expression: &str) -> Result<Self> {
        let spec = PotentialSpec::Custom {
            expression: expression.parse()?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::Polynomial { coefficients } => {
                if coefficients.len() > MAX_DEGREE + 1 {
                    return Err(Error::Config(format!(
                        "polynomial degree {} exceeds the cap of {MAX_DEGREE}",
                        coefficients.len() - 1
                    )));
                }
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config(
                        "polynomial coefficients must be finite".into(),
                    ));
                }
            }
            PotentialSpec::CoshShifted { x0 } => {
                if !x0.is_finite() {
                    return Err(Error::Config("cosh shift must be finite".into()));
                }
            }
            PotentialSpec::Custom { expression } => {
                for i in 0..=160 {
                    let x = -8.0 + 0.1 * i as f64;
                    if !expression.eval(x).is_finite() {
                        return Err(Error::Config(format!(
                            "custom potential `{expression}` is not finite at x = {x}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            PotentialSpec::CoshShifted { x0 } => (x - x0).cosh() - 1.0,
            PotentialSpec::Custom { expression } => expression.eval(x),
        }
    }
}

impl NonGaussian for PotentialSpec {
    /// `V(x) − x²/2`.
    fn h1(&self, x: f64) -> f64 {
        self.value(x) - 0.5 * x * x
    }
}

/// `H₁ ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Harmonic;

impl NonGaussian for Harmonic {
    fn h1(&self, _: f64) -> f64 {
        0.0
    }
}

/// Parsed arithmetic expression in one variable `x`.
///
/// Supports `+ - * / ^` (also `**`), unary signs, parentheses, numeric
/// literals, the constants `pi` and `e`, and the functions `sin cos tan
/// exp ln log sqrt abs sinh cosh tanh`.
#[derive(Clone, PartialEq)]
pub struct Expression {
    source: String,
    root: Arc<Node>,
}

impl Expression {
    pub fn eval(&self, x: f64) -> f64 {
        self.root.eval(x)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", self.source)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tokens = tokenize(s)?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Parse(format!(
                "unexpected {:?} in `{s}`",
                parser.tokens[parser.pos]
            )));
        }
        Ok(Self {
            source: s.trim().to_string(),
            root: Arc::new(root),
        })
    }
}

impl Serialize for Expression {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expression {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Tanh => v.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::X => x,
            Node::Neg(a) => -a.eval(x),
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Pow(a, b) => {
                let base = a.eval(x);
                let exp = b.eval(x);
                if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
                    base.powi(exp as i32)
                } else {
                    base.powf(exp)
                }
            }
            Node::Call(f, a) => f.apply(a.eval(x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    Open,
    Close,
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // Exponent suffix: 1e-3, 2.5E+4.
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number `{text}`")))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            '*' if chars.get(i + 1) == Some(&'*') => {
                out.push(Token::Op('^'));
                i += 2;
            }
            '+' | '-' | '*' | '/' | '^' => {
                out.push(Token::Op(c));
                i += 1;
            }
            '(' => {
                out.push(Token::Open);
                i += 1;
            }
            ')' => {
                out.push(Token::Close);
                i += 1;
            }
            _ => return Err(Error::Parse(format!("unexpected character `{c}`"))),
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("empty expression".into()));
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
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // Right-associative; binds tighter than unary minus on its left.
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Node::Num(v)),
            Some(Token::Open) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token::Close) => Ok(inner),
                    other => Err(Error::Parse(format!("expected `)`, found {other:?}"))),
                }
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "x" => Ok(Node::X),
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                "e" => Ok(Node::Num(std::f64::consts::E)),
                _ => {
                    let f = Func::lookup(&name)
                        .ok_or_else(|| Error::Parse(format!("unknown name `{name}`")))?;
                    match self.next() {
                        Some(Token::Open) => {}
                        other => {
                            return Err(Error::Parse(format!(
                                "expected `(` after `{name}`, found {other:?}"
                            )))
                        }
                    }
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Token::Close) => Ok(Node::Call(f, Box::new(arg))),
                        other => Err(Error::Parse(format!("expected `)`, found {other:?}"))),
                    }
                }
            },
            other => Err(Error::Parse(format!("unexpected {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_well_h1() {
        let v = PotentialSpec::double_well(0.1);
        assert_eq!(v.h1(0.0), 0.0);
        assert!((v.h1(2.0) + 2.1).abs() < 1e-14);
        // Factored form (x² − 2x)²/8 − εx³/8.
        for x in [-1.3f64, 0.4, 2.7] {
            let want = (x * x - 2.0 * x).powi(2) / 8.0 - 0.1 * x * x * x / 8.0;
            assert!((v.value(x) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn cosh_h1() {
        let v = PotentialSpec::cosh_shifted(1.0);
        assert!((v.h1(1.0) + 0.5).abs() < 1e-15);
        assert_eq!(v.value(1.0), 0.0);
    }

    #[test]
    fn harmonic_has_no_non_gaussian_part() {
        for x in [-3.0, 0.0, 5.5] {
            assert_eq!(PotentialSpec::harmonic().h1(x), 0.0);
        }
    }

    #[test]
    fn degree_cap() {
        let p = PotentialSpec::Polynomial {
            coefficients: vec![1.0; 10],
        };
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn expression_matches_builtin() {
        let parsed = PotentialSpec::custom("0.5*x^2 - (1 + 0.1/4)/2 * x**3 + x^4/8").unwrap();
        let cosh = PotentialSpec::custom("cosh(x - 1) - 1").unwrap();
        for x in [-2.0, -0.3, 0.0, 1.7, 4.0] {
            assert!((parsed.value(x) - PotentialSpec::double_well(0.1).value(x)).abs() < 1e-12);
            assert!((cosh.value(x) - PotentialSpec::cosh_shifted(1.0).value(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn expression_precedence() {
        let e: Expression = "-x^2 + 2*3 - 2^3^2 / 64 + 1e-1".parse().unwrap();
        assert!((e.eval(3.0) - (-9.0 + 6.0 - 8.0 + 0.1)).abs() < 1e-12);
        let e: Expression = "exp(ln(2)) * pi / pi + abs(-x)".parse().unwrap();
        assert!((e.eval(-1.5) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn expression_errors() {
        for bad in ["", "x +", "foo(x)", "(x", "sin x", "x $ 2", "1 2"] {
            assert!(bad.parse::<Expression>().is_err(), "{bad}");
        }
        assert!(matches!(
            PotentialSpec::custom("ln(x)"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn serde_round_trip() {
        for p in [
            PotentialSpec::double_well(0.5),
            PotentialSpec::cosh_shifted(1.0),
            PotentialSpec::custom("x^4 - x^2").unwrap(),
        ] {
            let s = serde_json::to_string(&p).unwrap();
            let back: PotentialSpec = serde_json::from_str(&s).unwrap();
            assert_eq!(back, p);
        }
        let s = serde_json::to_string(&PotentialSpec::custom("x^4").unwrap()).unwrap();
        assert_eq!(s, r#"{"form":"custom","expression":"x^4"}"#);
    }
}
