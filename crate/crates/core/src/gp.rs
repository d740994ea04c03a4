//! Multi-output GP regression on a compiled kernel.
//!
//! Vectors and matrices over (time, channel) pairs use the time-major
//! layout: index `i * n + c` for time `i` and channel `c`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernelalg::{CompiledKernel, PreparedKernel, SlotKind};
use crate::opalgebra::Assignment;
use crate::train::{transform, ParamKind};

/// Observations of every channel at a set of times.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub times: Vec<f64>,
    /// One row per time, one column per channel.
    pub values: Vec<Vec<f64>>,
    pub channels: Vec<String>,
}

impl Dataset {
    /// Rows are sorted by time; repeated times are rejected.
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>, channels: Vec<String>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Data(format!(
                "{} times but {} rows",
                times.len(),
                values.len()
            )));
        }
        if let Some(row) = values.iter().find(|r| r.len() != channels.len()) {
            return Err(Error::Data(format!(
                "row of length {} for {} channels",
                row.len(),
                channels.len()
            )));
        }
        if times.iter().chain(values.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::Data("non-finite value".into()));
        }
        let mut rows: Vec<(f64, Vec<f64>)> = times.into_iter().zip(values).collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Data("repeated time".into()));
        }
        let (times, values) = rows.into_iter().unzip();
        Ok(Dataset {
            times,
            values,
            channels,
        })
    }

    pub fn empty(channels: Vec<String>) -> Self {
        Dataset {
            times: Vec::new(),
            values: Vec::new(),
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Observations flattened time-major.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.times.len() * self.channels.len(),
            self.values.iter().flatten().copied(),
        )
    }

    /// Keep only the given channels.
    pub fn select(&self, keep: &[usize]) -> Dataset {
        Dataset {
            times: self.times.clone(),
            values: self
                .values
                .iter()
                .map(|r| keep.iter().map(|&c| r[c]).collect())
                .collect(),
            channels: keep.iter().map(|&c| self.channels[c].clone()).collect(),
        }
    }
}

/// Compiled kernel plus raw (untransformed) parameter values.
#[derive(Clone, Debug)]
pub struct LodeGPModel {
    pub kernel: Arc<CompiledKernel>,
    pub raw_hypers: BTreeMap<String, f64>,
    pub ode_params: Assignment,
    pub noise_raw: f64,
}

fn slot_kind(kind: SlotKind) -> ParamKind {
    match kind {
        SlotKind::Variance => ParamKind::Variance,
        SlotKind::Lengthscale => ParamKind::Lengthscale,
    }
}

impl LodeGPModel {
    /// Every slot starts at raw 0 (unit variance and lengthscale).
    pub fn new(kernel: Arc<CompiledKernel>, ode_params: Assignment) -> Self {
        let raw_hypers = kernel.slots.iter().map(|s| (s.name.clone(), 0.0)).collect();
        LodeGPModel {
            kernel,
            raw_hypers,
            ode_params,
            noise_raw: 0.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.kernel.channels.len()
    }

    /// Transformed slot values in slot order.
    pub fn hypers(&self) -> Result<Vec<f64>> {
        self.kernel
            .slots
            .iter()
            .map(|s| {
                self.raw_hypers
                    .get(&s.name)
                    .map(|&r| transform(r, slot_kind(s.kind)))
                    .ok_or_else(|| Error::UnboundSymbol(s.name.clone()))
            })
            .collect()
    }

    pub fn noise(&self) -> f64 {
        transform(self.noise_raw, ParamKind::Noise)
    }

    pub fn prepared(&self) -> Result<PreparedKernel> {
        let k = self.kernel.matrix(&self.ode_params)?;
        PreparedKernel::new(&k, &self.ode_params, &self.hypers()?)
    }
}

fn cross(k: &PreparedKernel, ta: &[f64], tb: &[f64]) -> DMatrix<f64> {
    let n = k.dim();
    let mut out = DMatrix::zeros(ta.len() * n, tb.len() * n);
    let mut block = vec![0.0; n * n];
    let mut scratch = k.scratch();
    for (a, &t1) in ta.iter().enumerate() {
        for (b, &t2) in tb.iter().enumerate() {
            k.block(t1, t2, &mut block, &mut scratch);
            for i in 0..n {
                for j in 0..n {
                    out[(a * n + i, b * n + j)] = block[i * n + j];
                }
            }
        }
    }
    out
}

fn symmetric(k: &PreparedKernel, times: &[f64]) -> DMatrix<f64> {
    let n = k.dim();
    let m = times.len() * n;
    let mut out = DMatrix::zeros(m, m);
    let mut block = vec![0.0; n * n];
    let mut scratch = k.scratch();
    for a in 0..times.len() {
        for b in a..times.len() {
            k.block(times[a], times[b], &mut block, &mut scratch);
            for i in 0..n {
                for j in 0..n {
                    let v = block[i * n + j];
                    out[(a * n + i, b * n + j)] = v;
                    out[(b * n + j, a * n + i)] = v;
                }
            }
        }
    }
    out
}

/// Prior covariance over `times`, time-major.
pub fn gram(model: &LodeGPModel, times: &[f64]) -> Result<DMatrix<f64>> {
    Ok(symmetric(&model.prepared()?, times))
}

/// Cholesky factor, adding `1e-10 * trace` jitter (then x10, three times)
/// if the plain factorization fails.
pub fn robust_cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    robust_cholesky_from(m, None)
}

fn robust_cholesky_from(m: DMatrix<f64>, start: Option<f64>) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let trace = m.trace().abs().max(f64::MIN_POSITIVE);
    let mut jitter = start.unwrap_or(0.0);
    let first = jitter == 0.0;
    if first {
        if let Some(c) = Cholesky::new(m.clone()) {
            return Ok(c);
        }
        jitter = 1e-10 * trace;
    }
    for _ in 0..if first { 3 } else { 4 } {
        let mut j = m.clone();
        for i in 0..j.nrows() {
            j[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(j) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite)
}

fn noisy_gram(k: &PreparedKernel, data: &Dataset, noise: f64) -> DMatrix<f64> {
    let mut g = symmetric(k, &data.times);
    for i in 0..g.nrows() {
        g[(i, i)] += noise;
    }
    g
}

/// Negative log marginal likelihood per scalar observation (`N·n` of them).
pub fn neg_mll(model: &LodeGPModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("no training data".into()));
    }
    if data.channels.len() != model.channels() {
        return Err(Error::Data("channel count differs from the model".into()));
    }
    let k = model.prepared()?;
    let chol = robust_cholesky(noisy_gram(&k, data, model.noise()))?;
    let y = data.stacked();
    let alpha = chol.solve(&y);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let n_obs = y.len() as f64;
    let total = 0.5 * y.dot(&alpha) + logdet + 0.5 * n_obs * (2.0 * std::f64::consts::PI).ln();
    Ok(total / n_obs)
}

/// Conditional Gaussian over query times.
#[derive(Clone, Debug)]
pub struct Posterior {
    pub query_times: Vec<f64>,
    /// One row per query time.
    pub mean: Vec<Vec<f64>>,
    pub covariance: DMatrix<f64>,
}

impl Posterior {
    /// Marginal variances, shaped like `mean`.
    pub fn variances(&self) -> Vec<Vec<f64>> {
        let n = self.mean.first().map_or(0, Vec::len);
        (0..self.query_times.len())
            .map(|i| (0..n).map(|c| self.covariance[(i * n + c, i * n + c)]).collect())
            .collect()
    }
}

fn unstack(v: &DVector<f64>, n: usize) -> Vec<Vec<f64>> {
    v.as_slice().chunks(n).map(<[f64]>::to_vec).collect()
}

struct Conditioner {
    k: PreparedKernel,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
}

impl Conditioner {
    fn new(model: &LodeGPModel, data: &Dataset) -> Result<Self> {
        let k = model.prepared()?;
        if data.is_empty() {
            return Ok(Conditioner {
                k,
                chol: None,
                alpha: DVector::zeros(0),
            });
        }
        if data.channels.len() != model.channels() {
            return Err(Error::Data("channel count differs from the model".into()));
        }
        let chol = robust_cholesky(noisy_gram(&k, data, model.noise()))?;
        let alpha = chol.solve(&data.stacked());
        Ok(Conditioner {
            k,
            chol: Some(chol),
            alpha,
        })
    }
}

/// Full posterior mean and covariance.
pub fn posterior(model: &LodeGPModel, data: &Dataset, query: &[f64]) -> Result<Posterior> {
    let c = Conditioner::new(model, data)?;
    let n = c.k.dim();
    let prior = symmetric(&c.k, query);
    let (mean, covariance) = match &c.chol {
        None => (DVector::zeros(query.len() * n), prior),
        Some(chol) => {
            let ks = cross(&c.k, query, &data.times);
            let mean = &ks * &c.alpha;
            let v = chol.l().solve_lower_triangular(&ks.transpose()).expect("triangular");
            (mean, prior - v.transpose() * v)
        }
    };
    Ok(Posterior {
        query_times: query.to_vec(),
        mean: unstack(&mean, n),
        covariance,
    })
}

/// Posterior mean and marginal variances without the full covariance.
pub fn predict(
    model: &LodeGPModel,
    data: &Dataset,
    query: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let c = Conditioner::new(model, data)?;
    let n = c.k.dim();
    let mut block = vec![0.0; n * n];
    let mut scratch = c.k.scratch();
    let prior_var: Vec<f64> = query
        .iter()
        .flat_map(|&t| {
            c.k.block(t, t, &mut block, &mut scratch);
            (0..n).map(|i| block[i * n + i]).collect::<Vec<_>>()
        })
        .collect();
    let (mean, var) = match &c.chol {
        None => (DVector::zeros(query.len() * n), prior_var),
        Some(chol) => {
            let ks = cross(&c.k, query, &data.times);
            let mean = &ks * &c.alpha;
            let v = chol.l().solve_lower_triangular(&ks.transpose()).expect("triangular");
            let var = prior_var
                .iter()
                .enumerate()
                .map(|(i, p)| p - v.column(i).norm_squared())
                .collect();
            (mean, var)
        }
    };
    Ok((unstack(&mean, n), unstack(&DVector::from_vec(var), n)))
}

/// Posterior mean only.
pub fn posterior_mean(model: &LodeGPModel, data: &Dataset, query: &[f64]) -> Result<Vec<Vec<f64>>> {
    let c = Conditioner::new(model, data)?;
    let n = c.k.dim();
    if c.chol.is_none() {
        return Ok(vec![vec![0.0; n]; query.len()]);
    }
    let ks = cross(&c.k, query, &data.times);
    Ok(unstack(&(&ks * &c.alpha), n))
}

/// Joint draws from the prior, or the posterior given `condition`.
/// Each draw has one row per time.
pub fn sample(
    model: &LodeGPModel,
    times: &[f64],
    count: usize,
    seed: u64,
    condition: Option<&Dataset>,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = model.channels();
    let (mean, cov) = match condition {
        Some(d) => {
            let p = posterior(model, d, times)?;
            let m = DVector::from_iterator(times.len() * n, p.mean.into_iter().flatten());
            (m, p.covariance)
        }
        None => (DVector::zeros(times.len() * n), gram(model, times)?),
    };
    let dim = cov.nrows();
    if dim == 0 {
        return Ok(vec![Vec::new(); count]);
    }
    let mean_diag = (cov.trace() / dim as f64).abs().max(f64::MIN_POSITIVE);
    let chol = robust_cholesky_from(cov, Some(1e-8 * mean_diag))?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let z = DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(&mut rng)));
            unstack(&(&mean + &l * z), n)
        })
        .collect())
}

/// Model restricted to the given channels.
pub fn marginalize(model: &LodeGPModel, keep: &[usize]) -> Result<LodeGPModel> {
    Ok(LodeGPModel {
        kernel: Arc::new(model.kernel.marginalize(keep)?),
        ..model.clone()
    })
}

/// Number of prior Gram eigenvalues above `threshold`.
pub fn eig_count(model: &LodeGPModel, times: &[f64], threshold: f64) -> Result<usize> {
    let g = gram(model, times)?;
    Ok(g.symmetric_eigenvalues().iter().filter(|&&l| l > threshold).count())
}
