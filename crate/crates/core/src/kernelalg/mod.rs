//! Covariance construction: base kernels for the decoupled latent
//! functions and their pushforward through the base change `V`.

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalgebra::{from_f64, Assignment, OperatorMatrix, OperatorPoly, Rational};
use crate::smith::{smith_normal_form, SmithDecomposition};
use crate::systems::SystemSpec;

pub mod expr;
pub mod factor;
pub mod prepared;

pub use expr::{apply_operator, Arg, KernelExpr, KernelTerm, Trig};
pub use factor::{factor_primary, FactorKind, PrimaryFactor};
pub use prepared::PreparedKernel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Variance,
    Lengthscale,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HyperSlot {
    pub name: String,
    pub kind: SlotKind,
}

fn push_slot(slots: &mut Vec<HyperSlot>, name: String, kind: SlotKind) -> usize {
    slots.push(HyperSlot { name, kind });
    slots.len() - 1
}

/// Unit-variance SE kernel scaled by slot `scale`.
pub fn se_kernel(scale: usize, lengthscale: usize) -> KernelExpr {
    let mut t = KernelTerm::new(scale);
    t.se = Some(lengthscale);
    KernelExpr::from_terms([t])
}

fn factor_kernel(f: &PrimaryFactor, scale: usize) -> KernelExpr {
    let (a, trig) = match f.kind {
        FactorKind::Real { a } => (a, Trig::None),
        FactorKind::ComplexPair { a, b } => (a, Trig::Cos(b)),
        _ => unreachable!("only root factors carry a kernel"),
    };
    KernelExpr::from_terms((0..f.multiplicity).map(|i| {
        let mut t = KernelTerm::new(scale);
        t.p = i;
        t.q = i;
        t.alpha = a;
        t.beta = a;
        t.trig = trig;
        t
    }))
}

/// Covariance whose realizations solve `d p = 0`.
///
/// Every primary factor gets its own variance slot named after `tag`;
/// with `shared` all factors use a single slot `sigma2_<tag>`.
pub fn base_kernel(
    d: &OperatorPoly,
    slots: &mut Vec<HyperSlot>,
    tag: &str,
    shared: bool,
) -> Result<KernelExpr> {
    let factors = factor_primary(d)?;
    match factors[0].kind {
        FactorKind::Unit => return Ok(KernelExpr::zero()),
        FactorKind::ZeroOp => {
            let s = push_slot(slots, format!("sigma2_{tag}"), SlotKind::Variance);
            let l = push_slot(slots, format!("ell_{tag}"), SlotKind::Lengthscale);
            return Ok(se_kernel(s, l));
        }
        _ => {}
    }
    let mut acc = KernelExpr::zero();
    let mut common = None;
    for (i, f) in factors.iter().enumerate() {
        let scale = match (shared, common) {
            (true, Some(s)) => s,
            _ => {
                let name = if shared || factors.len() == 1 {
                    format!("sigma2_{tag}")
                } else {
                    format!("sigma2_{tag}_{i}")
                };
                let s = push_slot(slots, name, SlotKind::Variance);
                common = Some(s);
                s
            }
        };
        acc = acc.add(&factor_kernel(f, scale));
    }
    Ok(acc)
}

/// Prior of the decoupled latent functions, one entry per column of `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDiagonal {
    pub entries: Vec<KernelExpr>,
    pub slots: Vec<HyperSlot>,
}

impl LatentDiagonal {
    /// Columns beyond the diagonal of `D` are unconstrained.
    pub fn from_diagonal(d: &OperatorMatrix, shared: bool) -> Result<Self> {
        let mut slots = Vec::new();
        let diag = d.diagonal();
        let entries = (0..d.cols())
            .map(|c| {
                let dc = diag.get(c).cloned().unwrap_or_else(OperatorPoly::zero);
                base_kernel(&dc, &mut slots, &c.to_string(), shared)
            })
            .collect::<Result<_>>()?;
        Ok(LatentDiagonal { entries, slots })
    }
}

/// Square matrix of kernel expressions over a set of hyperparameter slots.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    dim: usize,
    entries: Vec<KernelExpr>,
    pub slots: Vec<HyperSlot>,
}

impl KernelMatrix {
    pub fn new(dim: usize, entries: Vec<KernelExpr>, slots: Vec<HyperSlot>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} kernel entries for dimension {dim}",
                entries.len()
            )));
        }
        Ok(KernelMatrix {
            dim,
            entries,
            slots,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> &KernelExpr {
        &self.entries[i * self.dim + j]
    }

    pub fn slot_names(&self) -> Vec<String> {
        self.slots.iter().map(|s| s.name.clone()).collect()
    }

    /// Sub-block on the given channels, in the given order.
    pub fn submatrix(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::EmptySelection);
        }
        if let Some(&bad) = keep.iter().find(|&&c| c >= self.dim) {
            return Err(Error::ShapeMismatch(format!("channel {bad} out of range")));
        }
        let entries = keep
            .iter()
            .flat_map(|&i| keep.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.entry(i, j).clone())
            .collect();
        Ok(KernelMatrix {
            dim: keep.len(),
            entries,
            slots: self.slots.clone(),
        })
    }

    /// Value of entry `(i, j)` at `(t1, t2)`.
    pub fn eval(
        &self,
        i: usize,
        j: usize,
        t1: f64,
        t2: f64,
        ode: &Assignment,
        hypers: &[f64],
    ) -> Result<f64> {
        self.entry(i, j).eval(t1, t2, ode, hypers)
    }

    /// Apply operator row `a` in the first argument to column `j`.
    pub fn apply_row(&self, a: &[OperatorPoly], j: usize) -> Result<KernelExpr> {
        if a.len() != self.dim {
            return Err(Error::ShapeMismatch("operator row length".into()));
        }
        Ok(a.iter().enumerate().fold(KernelExpr::zero(), |acc, (c, p)| {
            acc.add(&apply_operator(p, self.entry(c, j), Arg::First))
        }))
    }

    pub fn render(&self) -> Vec<Vec<String>> {
        let names = self.slot_names();
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.entry(i, j).render(&names)).collect())
            .collect()
    }
}

/// `D1^a D2^b k` for all `a <= na`, `b <= nb`.
fn derivative_table(k: &KernelExpr, na: usize, nb: usize) -> Vec<Vec<KernelExpr>> {
    let mut first_row = vec![k.clone()];
    for b in 1..=nb {
        first_row.push(first_row[b - 1].diff(Arg::Second));
    }
    let mut table = vec![first_row];
    for a in 1..=na {
        let row = table[a - 1].iter().map(|e| e.diff(Arg::First)).collect();
        table.push(row);
    }
    table
}

/// `V * k * V'` with `V'` acting on the second argument.
pub fn pushforward(v: &OperatorMatrix, latent: &LatentDiagonal) -> Result<KernelMatrix> {
    if v.cols() != latent.entries.len() {
        return Err(Error::ShapeMismatch(format!(
            "base change has {} columns, latent prior {} entries",
            v.cols(),
            latent.entries.len()
        )));
    }
    let n = v.rows();
    let mut entries = vec![KernelExpr::zero(); n * n];
    for (c, kc) in latent.entries.iter().enumerate() {
        if kc.is_zero() {
            continue;
        }
        let column = v.column(c);
        let deg = column.iter().filter_map(|p| p.degree()).max().unwrap_or(0);
        let table = derivative_table(kc, deg, deg);
        for i in 0..n {
            for j in i..n {
                let (vi, vj) = (&column[i], &column[j]);
                if vi.is_zero() || vj.is_zero() {
                    continue;
                }
                let mut acc = entries[i * n + j].clone();
                for (a, ca) in vi.coeffs().iter().enumerate() {
                    for (b, cb) in vj.coeffs().iter().enumerate() {
                        if ca.is_zero() || cb.is_zero() {
                            continue;
                        }
                        acc = acc.add(&table[a][b].scale(&ca.mul(cb)));
                    }
                }
                entries[i * n + j] = acc;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            entries[i * n + j] = entries[j * n + i].transpose();
        }
    }
    KernelMatrix::new(n, entries, latent.slots.clone())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompileMode {
    /// Factor `D` once; parameters stay symbolic in `V`.
    #[default]
    Symbolic,
    /// Substitute numeric parameters into `D` and factor on every change.
    Refactorize,
}

/// A system's covariance, ready for evaluation at bound parameters.
#[derive(Clone, Debug)]
pub struct CompiledKernel {
    pub mode: CompileMode,
    pub snf: SmithDecomposition,
    pub channels: Vec<String>,
    pub ode_params: Vec<String>,
    pub slots: Vec<HyperSlot>,
    symbolic: Option<KernelMatrix>,
}

impl CompiledKernel {
    /// Kernel matrix at the given ODE parameters.
    pub fn matrix(&self, ode: &Assignment) -> Result<Cow<'_, KernelMatrix>> {
        if let Some(m) = &self.symbolic {
            return Ok(Cow::Borrowed(m));
        }
        let exact: BTreeMap<String, Rational> = self
            .ode_params
            .iter()
            .map(|p| {
                ode.get(p)
                    .map(|v| (p.clone(), from_f64(*v)))
                    .ok_or_else(|| Error::UnboundSymbol(p.clone()))
            })
            .collect::<Result<_>>()?;
        let d = self.snf.d.substitute(&exact)?;
        let latent = LatentDiagonal::from_diagonal(&d, true)?;
        // slots are keyed by name so the layout stays that of compile time
        let index: BTreeMap<&str, usize> = self
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.as_str(), i))
            .collect();
        let remap: Vec<usize> = latent
            .slots
            .iter()
            .map(|s| {
                index.get(s.name.as_str()).copied().ok_or_else(|| {
                    Error::InvalidInput(format!("latent structure changed: new slot {}", s.name))
                })
            })
            .collect::<Result<_>>()?;
        let latent = LatentDiagonal {
            entries: latent
                .entries
                .iter()
                .map(|e| e.remap_slots(|i| remap[i]))
                .collect(),
            slots: self.slots.clone(),
        };
        Ok(Cow::Owned(pushforward(&self.snf.v, &latent)?))
    }

    pub fn controllable(&self) -> bool {
        crate::smith::is_controllable(&self.snf.d).unwrap_or(false)
    }
}

fn has_symbolic_constraint(d: &OperatorMatrix) -> Option<String> {
    d.diagonal()
        .into_iter()
        .find(|e| !e.is_zero() && !e.is_unit() && !e.is_numeric())
        .map(|e| e.to_string())
}

/// Smith form, latent prior and pushforward for a system.
pub fn compile_lodegp(spec: &SystemSpec, mode: CompileMode) -> Result<CompiledKernel> {
    let snf = smith_normal_form(&spec.matrix)?;
    let (symbolic, slots) = match mode {
        CompileMode::Symbolic => {
            if let Some(e) = has_symbolic_constraint(&snf.d) {
                return Err(Error::NeedsRefactorizeMode(e));
            }
            let latent = LatentDiagonal::from_diagonal(&snf.d, false)?;
            let k = pushforward(&snf.v, &latent)?;
            let slots = k.slots.clone();
            (Some(k), slots)
        }
        CompileMode::Refactorize => {
            let init = spec.initial_params();
            let exact: BTreeMap<String, Rational> =
                init.iter().map(|(k, v)| (k.clone(), from_f64(*v))).collect();
            let d = snf.d.substitute(&exact)?;
            (None, LatentDiagonal::from_diagonal(&d, true)?.slots)
        }
    };
    Ok(CompiledKernel {
        mode,
        snf,
        channels: spec.channels.clone(),
        ode_params: spec.params.clone(),
        slots,
        symbolic,
    })
}

/// Independent SE per channel with per-channel variance and one shared
/// lengthscale.
pub fn baseline_kernel(channels: usize) -> KernelMatrix {
    let mut slots: Vec<HyperSlot> = (0..channels)
        .map(|c| HyperSlot {
            name: format!("sigma2_{c}"),
            kind: SlotKind::Variance,
        })
        .collect();
    let l = push_slot(&mut slots, "ell".into(), SlotKind::Lengthscale);
    let entries = (0..channels)
        .flat_map(|i| (0..channels).map(move |j| (i, j)))
        .map(|(i, j)| {
            if i == j {
                se_kernel(i, l)
            } else {
                KernelExpr::zero()
            }
        })
        .collect();
    KernelMatrix::new(channels, entries, slots).expect("square")
}

/// Compiled baseline, for uniform handling alongside LODE-GP kernels.
pub fn compile_baseline(spec: &SystemSpec) -> CompiledKernel {
    let k = baseline_kernel(spec.channels.len());
    let n = spec.channels.len();
    CompiledKernel {
        mode: CompileMode::Symbolic,
        snf: SmithDecomposition {
            u: OperatorMatrix::identity(n),
            d: OperatorMatrix::zeros(n, n),
            v: OperatorMatrix::identity(n),
            det_u: crate::opalgebra::RatFun::one(),
            det_v: crate::opalgebra::RatFun::one(),
        },
        channels: spec.channels.clone(),
        ode_params: Vec::new(),
        slots: k.slots.clone(),
        symbolic: Some(k),
    }
}

impl CompiledKernel {
    /// Kernel restricted to the given channels.
    pub fn marginalize(&self, keep: &[usize]) -> Result<CompiledKernel> {
        if keep.is_empty() {
            return Err(Error::EmptySelection);
        }
        let mut out = self.clone();
        out.channels = keep.iter().map(|&c| self.channels[c].clone()).collect();
        match &self.symbolic {
            Some(k) => out.symbolic = Some(k.submatrix(keep)?),
            None => {
                return Err(Error::InvalidInput(
                    "marginalizing a refactorize-mode kernel".into(),
                ))
            }
        }
        Ok(out)
    }
}
