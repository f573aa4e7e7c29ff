//! Polynomial expressions in `x`, `y`, `z` of total degree at most 3.
//!
//! Grammar: `expr = term (('+' | '-') term)*`, `term = power ('*' power)*`,
//! `power = unary ('^' integer)?`, `unary = '-' unary | atom`,
//! `atom = number | x | y | z | '(' expr ')'`.

use std::collections::BTreeMap;
use std::fmt;

pub const MAX_DEGREE: u32 = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("expression error at column {column}: {message}")]
pub struct ExprError {
    pub column: usize,
    pub message: String,
}

/// Expanded polynomial: exponents `(i, j, k)` of `x^i y^j z^k` to coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<[u32; 3], f64>,
}

impl Polynomial {
    fn constant(c: f64) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert([0, 0, 0], c);
        Self { terms }
    }

    fn variable(axis: usize) -> Self {
        let mut e = [0; 3];
        e[axis] = 1;
        let mut terms = BTreeMap::new();
        terms.insert(e, 1.0);
        Self { terms }
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().filter(|(_, &c)| c != 0.0).map(|(e, _)| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn eval(&self, p: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32) * p[2].powi(e[2] as i32))
            .sum()
    }

    fn add(mut self, rhs: &Polynomial, sign: f64) -> Self {
        for (e, c) in &rhs.terms {
            *self.terms.entry(*e).or_insert(0.0) += sign * c;
        }
        self
    }

    fn mul(&self, rhs: &Polynomial) -> Self {
        let mut out = Polynomial::default();
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                *out.terms.entry([a[0] + b[0], a[1] + b[1], a[2] + b[2]]).or_insert(0.0) += ca * cb;
            }
        }
        out
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (e, c) in self.terms.iter().filter(|(_, &c)| c != 0.0) {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (name, k) in ["x", "y", "z"].iter().zip(e) {
                if *k > 0 {
                    write!(f, "*{name}^{k}")?;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError { column: self.pos + 1, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Polynomial, ExprError> {
        let mut acc = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = acc.add(&rhs, if c == b'+' { 1.0 } else { -1.0 });
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, ExprError> {
        let mut acc = self.power()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let rhs = self.power()?;
            acc = acc.mul(&rhs);
            self.check_degree(&acc)?;
        }
        Ok(acc)
    }

    fn power(&mut self) -> Result<Polynomial, ExprError> {
        let base = self.unary()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let Ok(k) = std::str::from_utf8(&self.src[start..self.pos]).unwrap().parse::<u32>() else {
            return self.err("expected a non-negative integer exponent");
        };
        if k > MAX_DEGREE {
            return self.err(format!("exponent {k} exceeds degree {MAX_DEGREE}"));
        }
        let mut acc = Polynomial::constant(1.0);
        for _ in 0..k {
            acc = acc.mul(&base);
            self.check_degree(&acc)?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Polynomial::default().add(&self.unary()?, -1.0));
        }
        if self.peek() == Some(b'+') {
            self.pos += 1;
            return self.unary();
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Polynomial, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c @ (b'x' | b'y' | b'z')) => {
                self.pos += 1;
                Ok(Polynomial::variable((c - b'x') as usize))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
            None => self.err("unexpected end of expression"),
        }
    }

    fn number(&mut self) -> Result<Polynomial, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) => Ok(Polynomial::constant(v)),
            Err(_) => {
                self.pos = start;
                self.err(format!("invalid number '{text}'"))
            }
        }
    }

    fn check_degree(&self, p: &Polynomial) -> Result<(), ExprError> {
        if p.terms.keys().any(|e| e.iter().sum::<u32>() > MAX_DEGREE) {
            return self.err(format!("polynomial degree exceeds {MAX_DEGREE}"));
        }
        Ok(())
    }
}

pub fn parse_polynomial(text: &str) -> Result<Polynomial, ExprError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let poly = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(poly)
}
