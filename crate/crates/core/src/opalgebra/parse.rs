//! Parser for operator polynomials written as text.
//!
//! ```text
//! expression ::= sign? term (('+'|'-') term)*
//! term       ::= factor (('*'|'/') factor)*
//! factor     ::= sign? atom ('^' uint)?
//! atom       ::= 'D' | symbol | decimal | '(' expression ')'
//! ```
//!
//! `D` is the derivative operator. A rational `p/q` is simply a quotient of
//! two decimals. Division is only allowed by expressions free of `D`.

use num::{BigInt, One, Zero};

use super::{OperatorPoly, RatFun, Rational};
use crate::error::{Error, Result};

/// Parse a polynomial in `D` with rational-function coefficients.
pub fn parse_operator(src: &str) -> Result<OperatorPoly> {
    let mut p = Parser { src, pos: 0 };
    p.skip_ws();
    let v = p.expression()?;
    p.skip_ws();
    if p.pos < src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(v)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            column: self.pos + 1,
            message: msg.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek() {
            self.pos += c.len_utf8();
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expression(&mut self) -> Result<OperatorPoly> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = acc.add(&self.term()?);
            } else if self.eat('-') {
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<OperatorPoly> {
        let mut acc = self.factor()?;
        loop {
            if self.eat('*') {
                acc = acc.mul(&self.factor()?);
            } else if self.eat('/') {
                let at = self.pos;
                let rhs = self.factor()?;
                if rhs.is_zero() {
                    self.pos = at;
                    return Err(self.error("division by zero"));
                }
                if !rhs.is_unit() {
                    self.pos = at;
                    return Err(self.error("division by an expression containing D"));
                }
                let inv = rhs.leading().unwrap().recip()?;
                acc = acc.scale(&inv);
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<OperatorPoly> {
        if self.eat('-') {
            return Ok(self.factor()?.neg());
        }
        if self.eat('+') {
            return self.factor();
        }
        let base = self.atom()?;
        if self.eat('^') {
            self.skip_ws();
            let start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
            if start == self.pos {
                return Err(self.error("expected an unsigned integer exponent"));
            }
            let e: u32 = self.src[start..self.pos]
                .parse()
                .map_err(|_| self.error("exponent too large"))?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<OperatorPoly> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.bump();
                let v = self.expression()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                while self
                    .peek()
                    .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    self.bump();
                }
                let name = &self.src[start..self.pos];
                if name == "D" {
                    Ok(OperatorPoly::d())
                } else {
                    Ok(OperatorPoly::constant(RatFun::var(name)))
                }
            }
            Some(c) => Err(self.error(format!("unexpected character `{c}`"))),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<OperatorPoly> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        let int_part = &self.src[start..self.pos];
        let mut frac_part = "";
        if self.peek() == Some('.') {
            self.bump();
            let fs = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
            frac_part = &self.src[fs..self.pos];
        }
        if int_part.is_empty() && frac_part.is_empty() {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        Ok(OperatorPoly::constant(RatFun::from(parse_decimal(
            int_part, frac_part,
        ))))
    }
}

fn parse_decimal(int_part: &str, frac_part: &str) -> Rational {
    let digits = format!("{int_part}{frac_part}");
    let n: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().expect("digits only")
    };
    let mut den = BigInt::one();
    for _ in 0..frac_part.len() {
        den *= 10;
    }
    Rational::new(n, den)
}

/// Parse a decimal string such as `9.81` or `-0.5` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let op = parse_operator(s)?;
    if op.is_zero() {
        return Ok(Rational::zero());
    }
    match (op.is_unit(), op.leading().and_then(|c| c.as_constant())) {
        (true, Some(q)) => Ok(q),
        _ => Err(Error::Parse {
            column: 1,
            message: format!("`{s}` is not a number"),
        }),
    }
}
