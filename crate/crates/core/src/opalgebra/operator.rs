//! Univariate polynomials in the differential operator `D` with
//! rational-function coefficients.

use std::collections::BTreeMap;
use std::fmt;

use super::{RatFun, Rational};
use crate::error::{Error, Result};

/// Dense coefficient list, index `i` holds the coefficient of `D^i`.
/// The zero operator is the empty list; otherwise the last entry is nonzero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct OperatorPoly {
    coeffs: Vec<RatFun>,
}

impl OperatorPoly {
    pub fn zero() -> Self {
        OperatorPoly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(RatFun::one())
    }

    pub fn constant(c: RatFun) -> Self {
        Self::from_coeffs(vec![c])
    }

    /// The operator `D`.
    pub fn d() -> Self {
        Self::from_coeffs(vec![RatFun::zero(), RatFun::one()])
    }

    pub fn monomial(c: RatFun, degree: usize) -> Self {
        let mut coeffs = vec![RatFun::zero(); degree + 1];
        coeffs[degree] = c;
        Self::from_coeffs(coeffs)
    }

    pub fn from_coeffs(mut coeffs: Vec<RatFun>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        OperatorPoly { coeffs }
    }

    /// From rational coefficients in ascending order of degree.
    pub fn from_rationals(coeffs: &[Rational]) -> Self {
        Self::from_coeffs(coeffs.iter().cloned().map(RatFun::from).collect())
    }

    pub fn coeffs(&self) -> &[RatFun] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> RatFun {
        self.coeffs.get(i).cloned().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_one()
    }

    /// Degree, `None` for the zero operator.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Option<&RatFun> {
        self.coeffs.last()
    }

    /// A nonzero element of the coefficient field (a unit of the ring).
    pub fn is_unit(&self) -> bool {
        self.coeffs.len() == 1
    }

    /// True if every coefficient is a pure number.
    pub fn is_numeric(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_constant())
    }

    pub fn neg(&self) -> Self {
        OperatorPoly {
            coeffs: self.coeffs.iter().map(|c| c.neg()).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::from_coeffs((0..n).map(|i| self.coeff(i).add(&other.coeff(i))).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![RatFun::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if b.is_zero() {
                    continue;
                }
                out[i + j] = out[i + j].add(&a.mul(b));
            }
        }
        Self::from_coeffs(out)
    }

    pub fn scale(&self, c: &RatFun) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        OperatorPoly {
            coeffs: self.coeffs.iter().map(|x| x.mul(c)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::one();
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// Euclidean division: `self = q * divisor + r` with `deg r < deg divisor`.
    pub fn divmod(&self, divisor: &Self) -> Result<(Self, Self)> {
        let db = divisor.degree().ok_or(Error::DivisionByZero)?;
        let inv_lc = divisor.leading().unwrap().recip()?;
        let mut rem = self.coeffs.clone();
        let mut quot = vec![RatFun::zero(); self.coeffs.len().saturating_sub(db).max(1)];
        while rem.len() > db && !rem.is_empty() {
            let k = rem.len() - 1;
            let lead = rem[k].clone();
            if lead.is_zero() {
                rem.pop();
                continue;
            }
            let c = lead.mul(&inv_lc);
            let shift = k - db;
            for (j, b) in divisor.coeffs.iter().enumerate() {
                if !b.is_zero() {
                    rem[shift + j] = rem[shift + j].sub(&c.mul(b));
                }
            }
            debug_assert!(rem[k].is_zero());
            rem.pop();
            quot[shift] = c;
        }
        Ok((Self::from_coeffs(quot), Self::from_coeffs(rem)))
    }

    /// Scale to leading coefficient one.
    pub fn monic(&self) -> Result<Self> {
        match self.leading() {
            None => Ok(Self::zero()),
            Some(lc) => Ok(self.scale(&lc.recip()?)),
        }
    }

    /// Formal derivative with respect to `D`.
    pub fn derivative(&self) -> Self {
        Self::from_coeffs(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c.scale(&Rational::from_integer((i as i64).into())))
                .collect(),
        )
    }

    /// Monic greatest common divisor.
    pub fn gcd(&self, other: &Self) -> Result<Self> {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let (_, r) = a.divmod(&b)?;
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn substitute(&self, values: &BTreeMap<String, Rational>) -> Result<Self> {
        Ok(Self::from_coeffs(
            self.coeffs
                .iter()
                .map(|c| c.substitute(values))
                .collect::<Result<_>>()?,
        ))
    }

    /// Coefficients as floats; fails if any coefficient is symbolic.
    pub fn numeric_coeffs(&self) -> Option<Vec<f64>> {
        self.coeffs
            .iter()
            .map(|c| c.as_constant().map(|q| super::poly::rational_to_f64(&q)))
            .collect()
    }
}

impl fmt::Display for OperatorPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let dpow = match i {
                0 => String::new(),
                1 => "D".to_string(),
                _ => format!("D^{i}"),
            };
            // `c/(den)*D` reads left to right, so a constant numerator needs no parentheses
            let compound = c.numer().terms().len() > 1 || (!c.denom().is_constant() && !c.numer().is_constant());
            let alone = dpow.is_empty() && first && self.coeffs[1..].iter().all(RatFun::is_zero);
            let (neg, body) = if compound && !alone {
                (false, format!("({c})"))
            } else {
                let s = c.to_string();
                match s.strip_prefix('-') {
                    Some(rest) => (true, rest.to_string()),
                    None => (false, s),
                }
            };
            let term = if dpow.is_empty() {
                body
            } else if c.is_one() || (neg && c.neg().is_one()) {
                dpow
            } else {
                format!("{body}*{dpow}")
            };
            if first {
                write!(f, "{}{}", if neg { "-" } else { "" }, term)?;
            } else {
                write!(f, " {} {}", if neg { '-' } else { '+' }, term)?;
            }
            first = false;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::Zero;

    fn int(c: &[i64]) -> OperatorPoly {
        OperatorPoly::from_rationals(
            &c.iter().map(|&x| Rational::from_integer(x.into())).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn divmod_factorization() {
        let (q, r) = int(&[-1, 0, 1]).divmod(&int(&[-1, 1])).unwrap();
        assert_eq!(q, int(&[1, 1]));
        assert!(r.is_zero());
    }

    #[test]
    fn divmod_symbolic_remainder() {
        let g = RatFun::var("g");
        let a = OperatorPoly::from_coeffs(vec![g.clone(), RatFun::zero(), RatFun::one()]);
        let (q, r) = a.divmod(&OperatorPoly::d()).unwrap();
        assert_eq!(q, OperatorPoly::d());
        assert_eq!(r, OperatorPoly::constant(g));
    }

    #[test]
    fn divmod_by_zero() {
        assert_eq!(int(&[1]).divmod(&OperatorPoly::zero()), Err(Error::DivisionByZero));
    }

    #[test]
    fn gcd_and_derivative() {
        // (D-1)^2 (D+2)
        let p = int(&[-1, 1]).pow(2).mul(&int(&[2, 1]));
        let g = p.gcd(&p.derivative()).unwrap();
        assert_eq!(g, int(&[-1, 1]));
    }

    #[test]
    fn display() {
        let p = int(&[3, -1, 1]);
        assert_eq!(p.to_string(), "D^2 - D + 3");
        let q = OperatorPoly::from_coeffs(vec![
            RatFun::zero(),
            RatFun::var("a").add(&RatFun::var("b")),
            RatFun::from(-1),
        ]);
        assert_eq!(q.to_string(), "-D^2 + (a + b)*D");
        assert_eq!(OperatorPoly::zero().to_string(), "0");
        let half = OperatorPoly::constant(RatFun::from(Rational::new(1.into(), 2.into())));
        assert_eq!(half.to_string(), "1/2");
        assert!(!Rational::new(1.into(), 2.into()).is_zero());
    }
}
