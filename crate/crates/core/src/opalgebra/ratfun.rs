//! Rational functions in the ODE parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::{One, Signed, Zero};

use super::poly::{rational_to_f64, MultiPoly};
use super::{Assignment, Rational, Symbol};
use crate::error::{Error, Result};

/// Quotient `num / den` of two polynomials.
///
/// Normal form: a constant denominator is folded into the numerator
/// (`den == 1`); otherwise the common monomial content is cancelled, the
/// denominator is scaled to leading coefficient 1 and an exact division
/// `num / den` is attempted. No multivariate GCD is computed, so two equal
/// functions may have distinct representations; `is_zero` is always exact
/// because the numerator is kept expanded.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RatFun {
    num: MultiPoly,
    den: MultiPoly,
}

impl Default for RatFun {
    fn default() -> Self {
        Self::zero()
    }
}

impl From<Rational> for RatFun {
    fn from(c: Rational) -> Self {
        RatFun::constant(c)
    }
}

impl From<i64> for RatFun {
    fn from(c: i64) -> Self {
        RatFun::constant(Rational::from_integer(c.into()))
    }
}

impl From<MultiPoly> for RatFun {
    fn from(p: MultiPoly) -> Self {
        RatFun {
            num: p,
            den: MultiPoly::one(),
        }
    }
}

impl RatFun {
    pub fn zero() -> Self {
        RatFun {
            num: MultiPoly::zero(),
            den: MultiPoly::one(),
        }
    }

    pub fn one() -> Self {
        Self::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Self {
        RatFun {
            num: MultiPoly::constant(c),
            den: MultiPoly::one(),
        }
    }

    pub fn var(name: &str) -> Self {
        MultiPoly::var(name).into()
    }

    /// Exact conversion of a finite float.
    pub fn from_f64(x: f64) -> Self {
        Self::constant(Rational::from_float(x).expect("finite float"))
    }

    pub fn new(num: MultiPoly, den: MultiPoly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::normalize(num, den))
    }

    fn normalize(num: MultiPoly, den: MultiPoly) -> Self {
        if num.is_zero() {
            return Self::zero();
        }
        if let Some(c) = den.as_constant() {
            let inv = c.recip();
            return RatFun {
                num: num.scale(&inv),
                den: MultiPoly::one(),
            };
        }
        let mono = num.monomial_content().gcd(&den.monomial_content());
        let (num, den) = if mono.is_one() {
            (num, den)
        } else {
            (num.div_monomial(&mono), den.div_monomial(&mono))
        };
        let lc = den.leading().map(|(_, c)| c.clone()).unwrap();
        let inv = lc.recip();
        let (num, den) = (num.scale(&inv), den.scale(&inv));
        if let Some(q) = num.div_exact(&den) {
            return q.into();
        }
        if let Some(c) = den.as_constant() {
            return RatFun {
                num: num.scale(&c.recip()),
                den: MultiPoly::one(),
            };
        }
        RatFun { num, den }
    }

    pub fn numer(&self) -> &MultiPoly {
        &self.num
    }

    pub fn denom(&self) -> &MultiPoly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.as_constant().is_some_and(|c| c.is_one())
    }

    /// The value if the function contains no symbols.
    pub fn as_constant(&self) -> Option<Rational> {
        if self.den.as_constant().is_some_and(|c| c.is_one()) {
            self.num.as_constant()
        } else {
            None
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        let mut s = self.num.symbols();
        s.extend(self.den.symbols());
        s
    }

    pub fn neg(&self) -> Self {
        RatFun {
            num: self.num.neg(),
            den: self.den.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        if self.den == other.den {
            return Self::normalize(self.num.add(&other.num), self.den.clone());
        }
        Self::normalize(
            self.num.mul(&other.den).add(&other.num.mul(&self.den)),
            self.den.mul(&other.den),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        if self.den.as_constant().is_some() && other.den.as_constant().is_some() {
            return RatFun {
                num: self.num.mul(&other.num),
                den: MultiPoly::one(),
            };
        }
        Self::normalize(self.num.mul(&other.num), self.den.mul(&other.den))
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        RatFun {
            num: self.num.scale(c),
            den: self.den.clone(),
        }
    }

    pub fn recip(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::normalize(self.den.clone(), self.num.clone()))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.recip()?))
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::one();
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// Floating-point value at a numeric assignment of every symbol.
    pub fn eval(&self, assignment: &Assignment) -> Result<f64> {
        if let Some(c) = self.as_constant() {
            return Ok(rational_to_f64(&c));
        }
        let d = self.den.eval(assignment)?;
        let n = self.num.eval(assignment)?;
        if d.abs() <= 1e-12 {
            return Err(Error::SingularEvaluation(d));
        }
        Ok(n / d)
    }

    /// Exact substitution of some symbols; errors if the denominator vanishes.
    pub fn substitute(&self, values: &BTreeMap<String, Rational>) -> Result<Self> {
        if values.is_empty() || self.is_constant() {
            return Ok(self.clone());
        }
        let den = self.den.substitute(values);
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(Self::normalize(self.num.substitute(values), den))
    }

    /// Sign of the leading numerator coefficient (for canonical printing).
    pub fn leading_is_negative(&self) -> bool {
        self.num.leading().is_some_and(|(_, c)| c.is_negative())
    }
}

impl fmt::Display for RatFun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let den_one = self.den.as_constant().is_some_and(|c| c.is_one());
        // `x^k` binds tighter than `/`, so a lone power needs no parentheses
        let bare_den = matches!(self.den.terms(), [(m, c)] if c.is_one() && m.factors().len() == 1);
        if den_one {
            write!(f, "{}", self.num)
        } else if self.num.as_constant().is_some() && bare_den {
            write!(f, "{}/{}", self.num, self.den)
        } else if self.num.as_constant().is_some() {
            write!(f, "{}/({})", self.num, self.den)
        } else {
            write!(f, "({})/({})", self.num, self.den)
        }
    }
}
