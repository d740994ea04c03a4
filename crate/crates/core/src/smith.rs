//! Smith normal form over `K[D]` and the controllability test.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::opalgebra::{OperatorMatrix, OperatorPoly, RatFun};

/// `U * A * V = D` with `U`, `V` unimodular and `D` diagonal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmithDecomposition {
    pub u: OperatorMatrix,
    pub d: OperatorMatrix,
    pub v: OperatorMatrix,
    pub det_u: RatFun,
    pub det_v: RatFun,
}

impl SmithDecomposition {
    /// Nonzero diagonal entries come first; this is their count.
    pub fn rank(&self) -> usize {
        self.d.diagonal().iter().take_while(|e| !e.is_zero()).count()
    }
}

/// Printable form used by the CLI.
#[derive(Clone, Debug, Serialize)]
pub struct SmithRendering {
    pub u: Vec<Vec<String>>,
    pub d: Vec<Vec<String>>,
    pub v: Vec<Vec<String>>,
    pub det_u: String,
    pub det_v: String,
    pub controllable: bool,
}

impl From<&SmithDecomposition> for SmithRendering {
    fn from(s: &SmithDecomposition) -> Self {
        let grid = |m: &OperatorMatrix| {
            m.to_rows()
                .iter()
                .map(|r| r.iter().map(|e| e.to_string()).collect())
                .collect()
        };
        SmithRendering {
            u: grid(&s.u),
            d: grid(&s.d),
            v: grid(&s.v),
            det_u: s.det_u.to_string(),
            det_v: s.det_v.to_string(),
            controllable: is_controllable(&s.d).unwrap_or(false),
        }
    }
}

/// Position of the nonzero entry of minimal degree in the trailing block
/// starting at `(k, k)`; ties go to the smallest `(row, col)`.
fn find_pivot(d: &OperatorMatrix, k: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, usize)> = None;
    for i in k..d.rows() {
        for j in k..d.cols() {
            if let Some(deg) = d[(i, j)].degree() {
                if best.is_none_or(|(b, _, _)| deg < b) {
                    best = Some((deg, i, j));
                }
            }
        }
    }
    best.map(|(_, i, j)| (i, j))
}

/// Deterministic Smith normal form.
///
/// Nonzero diagonal entries are monic and each divides the next. Columns of
/// `V` that span the kernel of `A` are scaled so that their entry of
/// highest degree (first row on ties) is monic.
pub fn smith_normal_form(a: &OperatorMatrix) -> Result<SmithDecomposition> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Err(Error::ShapeMismatch("empty operator matrix".into()));
    }
    let mut d = a.clone();
    let mut u = OperatorMatrix::identity(m);
    let mut v = OperatorMatrix::identity(n);

    for k in 0..m.min(n) {
        let mut last_deg = usize::MAX;
        loop {
            let Some((pi, pj)) = find_pivot(&d, k) else {
                break;
            };
            d.swap_rows(k, pi);
            u.swap_rows(k, pi);
            d.swap_cols(k, pj);
            v.swap_cols(k, pj);
            let pivot = d[(k, k)].clone();
            let deg = pivot.degree().expect("pivot is nonzero");
            assert!(deg < last_deg || last_deg == usize::MAX, "pivot degree must descend");
            last_deg = deg;

            let mut clean = true;
            for i in k + 1..m {
                if d[(i, k)].is_zero() {
                    continue;
                }
                let (q, r) = d[(i, k)].divmod(&pivot)?;
                let f = q.neg();
                d.add_row_multiple(i, k, &f);
                u.add_row_multiple(i, k, &f);
                clean &= r.is_zero();
            }
            for j in k + 1..n {
                if d[(k, j)].is_zero() {
                    continue;
                }
                let (q, r) = d[(k, j)].divmod(&pivot)?;
                let f = q.neg();
                d.add_col_multiple(j, k, &f);
                v.add_col_multiple(j, k, &f);
                clean &= r.is_zero();
            }
            if !clean {
                continue;
            }

            // The pivot must divide the whole trailing block.
            let mut offender = None;
            'scan: for i in k + 1..m {
                for j in k + 1..n {
                    if d[(i, j)].is_zero() {
                        continue;
                    }
                    if !d[(i, j)].divmod(&pivot)?.1.is_zero() {
                        offender = Some(i);
                        break 'scan;
                    }
                }
            }
            match offender {
                Some(i) => {
                    d.add_row_multiple(k, i, &OperatorPoly::one());
                    u.add_row_multiple(k, i, &OperatorPoly::one());
                    // the next round strictly lowers the pivot degree
                    last_deg = deg + 1;
                }
                None => break,
            }
        }
        if let Some(lc) = d[(k, k)].leading().cloned() {
            if !lc.is_one() {
                let inv = lc.recip()?;
                d.scale_row(k, &inv);
                u.scale_row(k, &inv);
            }
        }
    }

    let rank = d.diagonal().iter().take_while(|e| !e.is_zero()).count();
    for j in rank..n {
        normalize_free_column(&mut v, j)?;
    }

    let det_u = unit_det(&u)?;
    let det_v = unit_det(&v)?;
    Ok(SmithDecomposition {
        u,
        d,
        v,
        det_u,
        det_v,
    })
}

fn normalize_free_column(v: &mut OperatorMatrix, j: usize) -> Result<()> {
    let mut best: Option<(usize, usize)> = None;
    for i in 0..v.rows() {
        if let Some(deg) = v[(i, j)].degree() {
            if best.is_none_or(|(b, _)| deg > b) {
                best = Some((deg, i));
            }
        }
    }
    if let Some((_, i)) = best {
        let lc = v[(i, j)].leading().cloned().expect("nonzero");
        if !lc.is_one() {
            v.scale_col(j, &lc.recip()?);
        }
    }
    Ok(())
}

fn unit_det(m: &OperatorMatrix) -> Result<RatFun> {
    let det = m.det()?;
    match det.degree() {
        Some(0) => Ok(det.coeff(0)),
        _ => Err(Error::InvalidInput(format!(
            "base change is not unimodular (det = {det})"
        ))),
    }
}

fn exactly_equal(x: &OperatorMatrix, y: &OperatorMatrix) -> bool {
    x.rows() == y.rows()
        && x.cols() == y.cols()
        && x
            .entries()
            .iter()
            .zip(y.entries())
            .all(|(p, q)| p.sub(q).is_zero())
}

/// Exact re-check of `U * A * V = D` with unimodular `U`, `V` and diagonal `D`.
pub fn verify_snf(a: &OperatorMatrix, s: &SmithDecomposition) -> bool {
    let Ok(ua) = s.u.mul(a) else { return false };
    let Ok(uav) = ua.mul(&s.v) else { return false };
    if !s.d.is_diagonal() || !exactly_equal(&uav, &s.d) {
        return false;
    }
    let unit = |m: &OperatorMatrix| m.det().is_ok_and(|d| d.is_unit());
    unit(&s.u) && unit(&s.v)
}

/// A system is controllable iff every diagonal entry of `D` is zero or one.
pub fn is_controllable(d: &OperatorMatrix) -> Result<bool> {
    if !d.is_diagonal() {
        return Err(Error::NotDiagonal);
    }
    Ok(d.diagonal().iter().all(|e| e.is_zero() || e.is_one()))
}
