//! Kernel matrix with every coefficient and hyperparameter folded into
//! floats, for repeated evaluation on time grids.

use std::collections::BTreeMap;

use super::{KernelMatrix, Trig};
use crate::error::Result;
use crate::opalgebra::Assignment;

#[derive(Clone, Copy, Debug)]
struct Shape {
    alpha: f64,
    beta: f64,
    trig: Trig,
    /// `1 / (2 ℓ²)` of the SE factor
    se: Option<f64>,
}

#[derive(Clone, Debug)]
struct Monomial {
    weight: f64,
    p: usize,
    q: usize,
    s: usize,
}

/// Terms of one entry, grouped by their transcendental shape.
type Entry = Vec<(usize, Vec<Monomial>)>;

#[derive(Clone, Debug)]
pub struct PreparedKernel {
    dim: usize,
    shapes: Vec<Shape>,
    entries: Vec<Entry>,
    max_pow: usize,
}

fn shape_key(s: &Shape) -> (u64, u64, u8, u64, u64) {
    let (tag, g) = match s.trig {
        Trig::None => (0, 0.0),
        Trig::Cos(g) => (1, g),
        Trig::Sin(g) => (2, g),
    };
    (
        s.alpha.to_bits(),
        s.beta.to_bits(),
        tag,
        g.to_bits(),
        s.se.map_or(u64::MAX, f64::to_bits),
    )
}

impl PreparedKernel {
    /// `hypers` holds transformed slot values (variances and lengthscales).
    pub fn new(k: &KernelMatrix, ode: &Assignment, hypers: &[f64]) -> Result<Self> {
        let dim = k.dim();
        let mut shapes = Vec::new();
        let mut index: BTreeMap<(u64, u64, u8, u64, u64), usize> = BTreeMap::new();
        let mut entries = Vec::with_capacity(dim * dim);
        let mut max_pow = 0;
        for i in 0..dim {
            for j in 0..dim {
                let mut groups: BTreeMap<usize, Vec<Monomial>> = BTreeMap::new();
                for t in k.entry(i, j).terms() {
                    let mut weight = t.coef.eval(ode)? * hypers[t.scale];
                    let se = t.se.map(|l| {
                        let ell = hypers[l];
                        weight *= ell.powi(-(t.inv_len as i32));
                        1.0 / (2.0 * ell * ell)
                    });
                    let shape = Shape {
                        alpha: t.alpha + 0.0,
                        beta: t.beta + 0.0,
                        trig: t.trig,
                        se,
                    };
                    let key = shape_key(&shape);
                    let id = *index.entry(key).or_insert_with(|| {
                        shapes.push(shape);
                        shapes.len() - 1
                    });
                    max_pow = max_pow.max(t.p as usize).max(t.q as usize).max(t.s as usize);
                    groups.entry(id).or_default().push(Monomial {
                        weight,
                        p: t.p as usize,
                        q: t.q as usize,
                        s: t.s as usize,
                    });
                }
                entries.push(groups.into_iter().collect());
            }
        }
        Ok(PreparedKernel {
            dim,
            shapes,
            entries,
            max_pow,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Fill `out` (row-major `dim x dim`) with `K(t1, t2)`.
    pub fn block(&self, t1: f64, t2: f64, out: &mut [f64], scratch: &mut Scratch) {
        let r = t1 - t2;
        scratch.fill(self, t1, t2, r);
        for (slot, entry) in out.iter_mut().zip(&self.entries) {
            let mut acc = 0.0;
            for (id, monos) in entry {
                let mut poly = 0.0;
                for m in monos {
                    poly += m.weight * scratch.p1[m.p] * scratch.p2[m.q] * scratch.pr[m.s];
                }
                acc += poly * scratch.shape[*id];
            }
            *slot = acc;
        }
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            p1: vec![1.0; self.max_pow + 1],
            p2: vec![1.0; self.max_pow + 1],
            pr: vec![1.0; self.max_pow + 1],
            shape: vec![0.0; self.shapes.len()],
        }
    }
}

/// Reusable buffers for [`PreparedKernel::block`].
#[derive(Clone, Debug)]
pub struct Scratch {
    p1: Vec<f64>,
    p2: Vec<f64>,
    pr: Vec<f64>,
    shape: Vec<f64>,
}

impl Scratch {
    fn fill(&mut self, k: &PreparedKernel, t1: f64, t2: f64, r: f64) {
        for i in 1..self.p1.len() {
            self.p1[i] = self.p1[i - 1] * t1;
            self.p2[i] = self.p2[i - 1] * t2;
            self.pr[i] = self.pr[i - 1] * r;
        }
        for (v, s) in self.shape.iter_mut().zip(&k.shapes) {
            let mut x = 0.0;
            if s.alpha != 0.0 || s.beta != 0.0 {
                x += s.alpha * t1 + s.beta * t2;
            }
            if let Some(c) = s.se {
                x -= r * r * c;
            }
            let mut val = x.exp();
            match s.trig {
                Trig::None => {}
                Trig::Cos(g) => val *= (g * r).cos(),
                Trig::Sin(g) => val *= (g * r).sin(),
            }
            *v = val;
        }
    }
}
