//! Primary factorization of numeric scalar operators.

use nalgebra::DMatrix;
use num::complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalgebra::OperatorPoly;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FactorKind {
    /// `d = 0`
    ZeroOp,
    /// `d` is a nonzero constant
    Unit,
    /// `(D - a)^j`
    Real { a: f64 },
    /// `((D - a)^2 + b^2)^j` with `b > 0`
    ComplexPair { a: f64, b: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimaryFactor {
    #[serde(flatten)]
    pub kind: FactorKind,
    pub multiplicity: u32,
}

impl PrimaryFactor {
    /// Degree of the irreducible part.
    pub fn base_degree(&self) -> usize {
        match self.kind {
            FactorKind::Real { .. } => 1,
            FactorKind::ComplexPair { .. } => 2,
            _ => 0,
        }
    }
}

/// Split `d` into powers of real irreducibles.
///
/// The square-free decomposition is exact; roots of each square-free part
/// are numeric and merged when closer than `1e-8 * (1 + max|coeff|)`.
pub fn factor_primary(d: &OperatorPoly) -> Result<Vec<PrimaryFactor>> {
    let Some(deg) = d.degree() else {
        return Ok(vec![PrimaryFactor {
            kind: FactorKind::ZeroOp,
            multiplicity: 1,
        }]);
    };
    if d.numeric_coeffs().is_none() {
        return Err(Error::SymbolicRootsUnsupported(d.to_string()));
    }
    if deg == 0 {
        return Ok(vec![PrimaryFactor {
            kind: FactorKind::Unit,
            multiplicity: 1,
        }]);
    }
    let monic = d.monic()?;
    let scale = monic
        .numeric_coeffs()
        .unwrap()
        .iter()
        .fold(0.0f64, |m, c| m.max(c.abs()));
    let tau = 1e-8 * (1.0 + scale);

    let mut roots: Vec<(Complex64, u32)> = Vec::new();
    for (part, mult) in square_free_parts(&monic)? {
        let coeffs = part.numeric_coeffs().unwrap();
        for z in numeric_roots(&coeffs) {
            match roots.iter_mut().find(|(r, _)| (*r - z).norm() <= tau) {
                Some((_, m)) => *m += mult,
                None => roots.push((z, mult)),
            }
        }
    }

    let mut out = Vec::new();
    for (z, j) in roots {
        let a = if z.re.abs() <= tau { 0.0 } else { z.re };
        if z.im.abs() <= tau {
            out.push(PrimaryFactor {
                kind: FactorKind::Real { a },
                multiplicity: j,
            });
        } else if z.im > 0.0 {
            out.push(PrimaryFactor {
                kind: FactorKind::ComplexPair { a, b: z.im },
                multiplicity: j,
            });
        }
    }
    out.sort_by(|x, y| sort_key(x).partial_cmp(&sort_key(y)).unwrap());
    let total: usize = out
        .iter()
        .map(|f| f.base_degree() * f.multiplicity as usize)
        .sum();
    if total != deg {
        return Err(Error::InvalidInput(format!(
            "root clustering of {d} lost multiplicity ({total} of {deg})"
        )));
    }
    Ok(out)
}

fn sort_key(f: &PrimaryFactor) -> (f64, f64, u32) {
    match f.kind {
        FactorKind::Real { a } => (a, 0.0, f.multiplicity),
        FactorKind::ComplexPair { a, b } => (a, b, f.multiplicity),
        _ => (0.0, 0.0, 0),
    }
}

/// Yun's square-free decomposition of a monic polynomial.
fn square_free_parts(f: &OperatorPoly) -> Result<Vec<(OperatorPoly, u32)>> {
    let fp = f.derivative();
    let a0 = f.gcd(&fp)?;
    let mut b = f.divmod(&a0)?.0;
    let c = fp.divmod(&a0)?.0;
    let mut dd = c.sub(&b.derivative());
    let mut out = Vec::new();
    let mut i = 1;
    while b.degree().unwrap_or(0) > 0 {
        let a = b.gcd(&dd)?;
        let nb = b.divmod(&a)?.0;
        let nc = dd.divmod(&a)?.0;
        dd = nc.sub(&nb.derivative());
        if a.degree().unwrap_or(0) > 0 {
            out.push((a, i));
        }
        b = nb;
        i += 1;
    }
    Ok(out)
}

/// Roots of the polynomial with ascending coefficients `c` (leading nonzero).
pub fn numeric_roots(c: &[f64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let lc = c[n];
    let c: Vec<f64> = c.iter().map(|x| x / lc).collect();
    match n {
        0 => Vec::new(),
        1 => vec![Complex64::new(-c[0], 0.0)],
        2 => {
            let (p, q) = (c[1], c[0]);
            let disc = p * p / 4.0 - q;
            if disc < 0.0 {
                let b = (-disc).sqrt();
                vec![Complex64::new(-p / 2.0, b), Complex64::new(-p / 2.0, -b)]
            } else {
                let r1 = -p / 2.0 - p.signum() * disc.sqrt();
                let r1 = if r1 == 0.0 { disc.sqrt() } else { r1 };
                let r2 = if r1 == 0.0 { 0.0 } else { q / r1 };
                vec![Complex64::new(r1, 0.0), Complex64::new(r2, 0.0)]
            }
        }
        _ => {
            let mut comp = DMatrix::<f64>::zeros(n, n);
            for i in 1..n {
                comp[(i, i - 1)] = 1.0;
            }
            for i in 0..n {
                comp[(i, n - 1)] = -c[i];
            }
            comp.complex_eigenvalues()
                .iter()
                .map(|&z| polish(&c, z))
                .collect()
        }
    }
}

fn polish(c: &[f64], mut z: Complex64) -> Complex64 {
    for _ in 0..8 {
        let (mut p, mut dp) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for &k in c.iter().rev() {
            dp = dp * z + p;
            p = p * z + k;
        }
        if dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        z -= step;
        if step.norm() <= 1e-16 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}
