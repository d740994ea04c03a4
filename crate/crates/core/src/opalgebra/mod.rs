//! Exact arithmetic over `K[D]` with `K` the field of rational functions in
//! the ODE parameters.

use std::collections::BTreeMap;
use std::sync::Arc;

pub mod matrix;
pub mod operator;
pub mod parse;
pub mod poly;
pub mod ratfun;

pub use matrix::OperatorMatrix;
pub use operator::OperatorPoly;
pub use parse::{parse_operator, parse_rational};
pub use poly::{Monomial, MultiPoly};
pub use ratfun::RatFun;

pub type Rational = num::BigRational;
pub type Symbol = Arc<str>;
/// Numeric values for parameter symbols.
pub type Assignment = BTreeMap<String, f64>;

/// Float view of an exact rational.
pub fn to_f64(q: &Rational) -> f64 {
    poly::rational_to_f64(q)
}

/// Exact rational equal to a finite float.
pub fn from_f64(x: f64) -> Rational {
    Rational::from_float(x).expect("finite float")
}
