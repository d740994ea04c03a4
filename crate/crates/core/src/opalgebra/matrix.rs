use std::collections::BTreeMap;
use std::fmt;

use super::{OperatorPoly, RatFun, Rational};
use crate::error::{Error, Result};

/// Row-major matrix of operator polynomials.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OperatorMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<OperatorPoly>,
}

impl OperatorMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        OperatorMatrix {
            rows,
            cols,
            entries: vec![OperatorPoly::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = OperatorPoly::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<OperatorPoly>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch("rows of unequal length".into()));
        }
        Ok(OperatorMatrix {
            rows: r,
            cols: c,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[OperatorPoly] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<OperatorPoly> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<OperatorPoly>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = OperatorPoly::zero();
                for k in 0..self.cols {
                    let (a, b) = (&self[(i, k)], &other[(k, j)]);
                    if !a.is_zero() && !b.is_zero() {
                        acc = acc.add(&a.mul(b));
                    }
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].clone();
            }
        }
        out
    }

    /// Fraction-free (Bareiss) determinant over the operator ring.
    pub fn det(&self) -> Result<OperatorPoly> {
        if self.rows != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "determinant of non-square {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        if n == 0 {
            return Ok(OperatorPoly::one());
        }
        let mut m = self.to_rows();
        let mut sign = false;
        let mut prev = OperatorPoly::one();
        for k in 0..n - 1 {
            if m[k][k].is_zero() {
                match (k + 1..n).find(|&i| !m[i][k].is_zero()) {
                    Some(i) => {
                        m.swap(k, i);
                        sign = !sign;
                    }
                    None => return Ok(OperatorPoly::zero()),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let num = m[i][j].mul(&m[k][k]).sub(&m[i][k].mul(&m[k][j]));
                    let (q, r) = num.divmod(&prev)?;
                    debug_assert!(r.is_zero(), "Bareiss division is exact");
                    m[i][j] = q;
                }
                m[i][k] = OperatorPoly::zero();
            }
            prev = m[k][k].clone();
        }
        let d = m[n - 1][n - 1].clone();
        Ok(if sign { d.neg() } else { d })
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.entries.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.entries.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// `row[target] += factor * row[source]`
    pub fn add_row_multiple(&mut self, target: usize, source: usize, factor: &OperatorPoly) {
        for j in 0..self.cols {
            let s = &self[(source, j)];
            if s.is_zero() {
                continue;
            }
            let v = self[(target, j)].add(&factor.mul(s));
            self[(target, j)] = v;
        }
    }

    /// `col[target] += col[source] * factor`
    pub fn add_col_multiple(&mut self, target: usize, source: usize, factor: &OperatorPoly) {
        for i in 0..self.rows {
            let s = &self[(i, source)];
            if s.is_zero() {
                continue;
            }
            let v = self[(i, target)].add(&s.mul(factor));
            self[(i, target)] = v;
        }
    }

    pub fn scale_row(&mut self, i: usize, c: &RatFun) {
        for j in 0..self.cols {
            let v = self[(i, j)].scale(c);
            self[(i, j)] = v;
        }
    }

    pub fn scale_col(&mut self, j: usize, c: &RatFun) {
        for i in 0..self.rows {
            let v = self[(i, j)].scale(c);
            self[(i, j)] = v;
        }
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)].is_zero()))
    }

    /// Diagonal entries `(0,0) .. (min-1, min-1)`.
    pub fn diagonal(&self) -> Vec<OperatorPoly> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)].clone()).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.entries.iter().filter_map(|e| e.degree()).max().unwrap_or(0)
    }

    pub fn substitute(&self, values: &BTreeMap<String, Rational>) -> Result<Self> {
        Ok(OperatorMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .map(|e| e.substitute(values))
                .collect::<Result<_>>()?,
        })
    }

    pub fn entries(&self) -> &[OperatorPoly] {
        &self.entries
    }
}

impl std::ops::Index<(usize, usize)> for OperatorMatrix {
    type Output = OperatorPoly;
    fn index(&self, (i, j): (usize, usize)) -> &OperatorPoly {
        &self.entries[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for OperatorMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut OperatorPoly {
        &mut self.entries[i * self.cols + j]
    }
}

impl fmt::Display for OperatorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells: Vec<Vec<String>> = (0..self.rows)
            .map(|i| self.row(i).iter().map(|e| e.to_string()).collect())
            .collect();
        let widths: Vec<usize> = (0..self.cols)
            .map(|j| cells.iter().map(|r| r[j].len()).max().unwrap_or(1))
            .collect();
        for row in &cells {
            write!(f, "[")?;
            for (j, c) in row.iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{:>w$}", c, w = widths[j])?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}
