//! Kernel expressions closed under differentiation in either argument.
//!
//! A term is
//! `coef * σ² * t1^p * t2^q * r^s * exp(α t1 + β t2) * trig(γ r) * SE(r; ℓ) * ℓ^-k`
//! with `r = t1 - t2`. Keeping `r` as its own factor avoids the cancellation
//! that expanding `(t1 - t2)^s` into monomials suffers at large `t`.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::opalgebra::{from_f64, Assignment, OperatorPoly, RatFun, Rational};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Trig {
    None,
    Cos(f64),
    Sin(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arg {
    First,
    Second,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelTerm {
    /// Rational function of the ODE parameters.
    pub coef: RatFun,
    /// Variance slot multiplying the term.
    pub scale: usize,
    /// Lengthscale slot of the SE factor, if any.
    pub se: Option<usize>,
    /// Power of `1/ℓ` for the SE slot.
    pub inv_len: u32,
    pub p: u32,
    pub q: u32,
    pub s: u32,
    pub alpha: f64,
    pub beta: f64,
    pub trig: Trig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct TermKey {
    scale: usize,
    se: Option<usize>,
    inv_len: u32,
    p: u32,
    q: u32,
    s: u32,
    alpha: u64,
    beta: u64,
    trig: (u8, u64),
}

fn int(x: i64) -> Rational {
    Rational::from_integer(x.into())
}

fn bits(x: f64) -> u64 {
    // -0.0 and 0.0 are one key
    (x + 0.0).to_bits()
}

impl KernelTerm {
    /// `σ²` times the unit-variance factor described by the remaining fields.
    pub fn new(scale: usize) -> Self {
        KernelTerm {
            coef: RatFun::one(),
            scale,
            se: None,
            inv_len: 0,
            p: 0,
            q: 0,
            s: 0,
            alpha: 0.0,
            beta: 0.0,
            trig: Trig::None,
        }
    }

    fn key(&self) -> TermKey {
        TermKey {
            scale: self.scale,
            se: self.se,
            inv_len: self.inv_len,
            p: self.p,
            q: self.q,
            s: self.s,
            alpha: bits(self.alpha),
            beta: bits(self.beta),
            trig: match self.trig {
                Trig::None => (0, 0),
                Trig::Cos(g) => (1, bits(g)),
                Trig::Sin(g) => (2, bits(g)),
            },
        }
    }

    fn with_coef(&self, coef: RatFun) -> Self {
        KernelTerm {
            coef,
            ..self.clone()
        }
    }

    /// Value of the term without its coefficient and variance.
    pub fn shape(&self, t1: f64, t2: f64, hypers: &[f64]) -> f64 {
        let r = t1 - t2;
        let mut v = t1.powi(self.p as i32) * t2.powi(self.q as i32) * r.powi(self.s as i32);
        if self.alpha != 0.0 || self.beta != 0.0 {
            v *= (self.alpha * t1 + self.beta * t2).exp();
        }
        match self.trig {
            Trig::None => {}
            Trig::Cos(g) => v *= (g * r).cos(),
            Trig::Sin(g) => v *= (g * r).sin(),
        }
        if let Some(l) = self.se {
            let ell = hypers[l];
            v *= (-r * r / (2.0 * ell * ell)).exp() * ell.powi(-(self.inv_len as i32));
        }
        v
    }

    /// Partial derivative, as a list of terms.
    fn diff(&self, arg: Arg) -> Vec<KernelTerm> {
        let sign = match arg {
            Arg::First => 1.0,
            Arg::Second => -1.0,
        };
        let mut out = Vec::new();
        let own = match arg {
            Arg::First => self.p,
            Arg::Second => self.q,
        };
        if own > 0 {
            let mut t = self.with_coef(self.coef.scale(&int(own as i64)));
            match arg {
                Arg::First => t.p -= 1,
                Arg::Second => t.q -= 1,
            }
            out.push(t);
        }
        if self.s > 0 {
            let mut t = self.with_coef(self.coef.scale(&int(sign as i64 * self.s as i64)));
            t.s -= 1;
            out.push(t);
        }
        let rate = match arg {
            Arg::First => self.alpha,
            Arg::Second => self.beta,
        };
        if rate != 0.0 {
            out.push(self.with_coef(self.coef.scale(&from_f64(rate))));
        }
        match self.trig {
            Trig::None => {}
            Trig::Cos(g) => {
                let mut t = self.with_coef(self.coef.scale(&from_f64(-sign * g)));
                t.trig = Trig::Sin(g);
                out.push(t);
            }
            Trig::Sin(g) => {
                let mut t = self.with_coef(self.coef.scale(&from_f64(sign * g)));
                t.trig = Trig::Cos(g);
                out.push(t);
            }
        }
        if self.se.is_some() {
            let mut t = self.with_coef(self.coef.scale(&int(-sign as i64)));
            t.s += 1;
            t.inv_len += 2;
            out.push(t);
        }
        out
    }
}

/// Canonical sum of kernel terms: like terms merged, zero terms dropped,
/// sorted by structure.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KernelExpr {
    terms: Vec<KernelTerm>,
}

impl KernelExpr {
    pub fn zero() -> Self {
        KernelExpr { terms: Vec::new() }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = KernelTerm>) -> Self {
        let mut map: BTreeMap<TermKey, KernelTerm> = BTreeMap::new();
        for t in terms {
            if t.coef.is_zero() {
                continue;
            }
            match map.entry(t.key()) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(t);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    let c = e.get().coef.add(&t.coef);
                    e.get_mut().coef = c;
                }
            }
        }
        KernelExpr {
            terms: map.into_values().filter(|t| !t.coef.is_zero()).collect(),
        }
    }

    pub fn terms(&self) -> &[KernelTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms.iter().chain(&other.terms).cloned())
    }

    pub fn scale(&self, c: &RatFun) -> Self {
        Self::from_terms(self.terms.iter().map(|t| t.with_coef(t.coef.mul(c))))
    }

    pub fn diff(&self, arg: Arg) -> Self {
        Self::from_terms(self.terms.iter().flat_map(|t| t.diff(arg)))
    }

    /// Swap the roles of `t1` and `t2`.
    pub fn transpose(&self) -> Self {
        Self::from_terms(self.terms.iter().map(|t| {
            let mut u = t.clone();
            std::mem::swap(&mut u.p, &mut u.q);
            std::mem::swap(&mut u.alpha, &mut u.beta);
            if u.s % 2 == 1 {
                u.coef = u.coef.neg();
            }
            if let Trig::Sin(_) = u.trig {
                u.coef = u.coef.neg();
            }
            u
        }))
    }

    /// Slot indices referenced by any term.
    pub fn slots(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .terms
            .iter()
            .flat_map(|t| std::iter::once(t.scale).chain(t.se))
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Renumber slot indices.
    pub fn remap_slots(&self, map: impl Fn(usize) -> usize) -> Self {
        Self::from_terms(self.terms.iter().map(|t| {
            let mut u = t.clone();
            u.scale = map(u.scale);
            u.se = u.se.map(&map);
            u
        }))
    }

    /// Numeric value; `hypers` holds transformed slot values.
    pub fn eval(&self, t1: f64, t2: f64, ode: &Assignment, hypers: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.coef.eval(ode)? * hypers[t.scale] * t.shape(t1, t2, hypers);
        }
        Ok(acc)
    }

    /// Human-readable rendering with slot names.
    pub fn render(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        let mut out = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            let mut factors = Vec::new();
            let c = t.coef.to_string();
            let compound = t.coef.numer().terms().len() > 1 || !t.coef.denom().is_constant();
            let (neg, body) = match c.strip_prefix('-') {
                Some(rest) if !compound => (true, rest.to_string()),
                _ if compound => (false, format!("({c})")),
                _ => (false, c),
            };
            if body != "1" {
                factors.push(body);
            }
            factors.push(names[t.scale].clone());
            let pw = |name: &str, e: u32| match e {
                1 => name.to_string(),
                _ => format!("{name}^{e}"),
            };
            if t.p > 0 {
                factors.push(pw("t1", t.p));
            }
            if t.q > 0 {
                factors.push(pw("t2", t.q));
            }
            if t.s > 0 {
                factors.push(pw("(t1-t2)", t.s));
            }
            if t.alpha != 0.0 || t.beta != 0.0 {
                factors.push(format!("exp({}*t1+{}*t2)", t.alpha, t.beta));
            }
            match t.trig {
                Trig::None => {}
                Trig::Cos(g) => factors.push(format!("cos({g}*(t1-t2))")),
                Trig::Sin(g) => factors.push(format!("sin({g}*(t1-t2))")),
            }
            if let Some(l) = t.se {
                factors.push(format!("SE({})", names[l]));
                if t.inv_len > 0 {
                    factors.push(format!("{}^-{}", names[l], t.inv_len));
                }
            }
            let sep = match (i, neg) {
                (0, true) => "-",
                (0, false) => "",
                (_, true) => " - ",
                (_, false) => " + ",
            };
            out.push_str(sep);
            out.push_str(&factors.join(" * "));
        }
        out
    }
}

/// `Σ_i p_i * ∂^i k` in the chosen argument.
pub fn apply_operator(p: &OperatorPoly, k: &KernelExpr, arg: Arg) -> KernelExpr {
    let mut acc = KernelExpr::zero();
    let mut dk = k.clone();
    for (i, c) in p.coeffs().iter().enumerate() {
        if i > 0 {
            dk = dk.diff(arg);
        }
        if !c.is_zero() {
            acc = acc.add(&dk.scale(c));
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalgebra::parse_operator;

    fn se() -> KernelExpr {
        let mut t = KernelTerm::new(0);
        t.se = Some(1);
        KernelExpr::from_terms([t])
    }

    fn expo(a: f64) -> KernelExpr {
        let mut t = KernelTerm::new(0);
        t.alpha = a;
        t.beta = a;
        KernelExpr::from_terms([t])
    }

    const H: [f64; 2] = [1.0, 1.0];

    #[test]
    fn exp_is_its_own_derivative() {
        assert_eq!(expo(1.0).diff(Arg::First), expo(1.0));
    }

    #[test]
    fn se_first_derivative() {
        let d = se().diff(Arg::First);
        let env = Assignment::new();
        for (t1, t2) in [(0.3, -1.2), (2.0, 2.5), (0.0, 0.0)] {
            let r: f64 = t1 - t2;
            let want = -r * (-r * r / 2.0).exp();
            assert!((d.eval(t1, t2, &env, &H).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn mixed_derivative_of_polynomial_exponential() {
        let a = 0.7;
        let mut t = KernelTerm::new(0);
        t.p = 1;
        t.q = 1;
        t.alpha = a;
        t.beta = a;
        let k = KernelExpr::from_terms([t]);
        let d = k.diff(Arg::First).diff(Arg::Second);
        let env = Assignment::new();
        for (t1, t2) in [(0.3f64, -1.2f64), (2.0, 2.5)] {
            let want = (1.0 + a * t1 + a * t2 + a * a * t1 * t2) * (a * (t1 + t2)).exp();
            let got = d.eval(t1, t2, &env, &H).unwrap();
            assert!((got - want).abs() < 1e-13 * want.abs().max(1.0));
        }
    }

    #[test]
    fn eighth_mixed_derivative_matches_stencil() {
        let k = se();
        let mut d = k.clone();
        for _ in 0..4 {
            d = d.diff(Arg::First).diff(Arg::Second);
        }
        let env = Assignment::new();
        let t = 0.4;
        let exact = d.eval(t, t, &env, &H).unwrap();
        assert!((exact - 105.0).abs() < 1e-12);
        // fourth-derivative stencil of order h^4, applied in both arguments
        let w = [-1.0 / 6.0, 2.0, -6.5, 28.0 / 3.0, -6.5, 2.0, -1.0 / 6.0];
        let h: f64 = 0.05;
        let mut acc = 0.0;
        for (i, wi) in w.iter().enumerate() {
            for (j, wj) in w.iter().enumerate() {
                let t1 = t + (i as f64 - 3.0) * h;
                let t2 = t + (j as f64 - 3.0) * h;
                acc += wi * wj * k.eval(t1, t2, &env, &H).unwrap();
            }
        }
        let fd = acc / h.powi(8);
        assert!((fd - exact).abs() / exact.abs() < 1e-4, "{fd} vs {exact}");
    }

    #[test]
    fn oscillator_kernel_is_annihilated() {
        let g = 9.81f64;
        let mut t = KernelTerm::new(0);
        t.trig = Trig::Cos(g.sqrt());
        let k = KernelExpr::from_terms([t]);
        let p = parse_operator("D^2 + 9.81").unwrap();
        let out = apply_operator(&p, &apply_operator(&p, &k, Arg::Second), Arg::First);
        let env = Assignment::new();
        for i in 0..20 {
            let (t1, t2) = (0.37 * i as f64 - 3.0, 1.1 - 0.29 * i as f64);
            assert!(out.eval(t1, t2, &env, &[2.0]).unwrap().abs() < 1e-9 * 2.0);
        }
    }

    #[test]
    fn transpose_swaps_arguments() {
        let k = apply_operator(
            &parse_operator("D^2 + 3*D").unwrap(),
            &apply_operator(&parse_operator("D - 1").unwrap(), &se(), Arg::Second),
            Arg::First,
        );
        let kt = k.transpose();
        let env = Assignment::new();
        for (t1, t2) in [(0.3, -1.2), (2.0, 2.5), (1.0, 5.0)] {
            let x = k.eval(t1, t2, &env, &H).unwrap();
            let y = kt.eval(t2, t1, &env, &H).unwrap();
            assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn render_omits_unit_factors() {
        let names = vec!["sigma2_0".to_string(), "ell_0".to_string()];
        assert_eq!(se().render(&names), "sigma2_0 * SE(ell_0)");
        assert_eq!(
            se().diff(Arg::First).render(&names),
            "-sigma2_0 * (t1-t2) * SE(ell_0) * ell_0^-2"
        );
        assert_eq!(KernelExpr::zero().render(&names), "0");
    }
}
