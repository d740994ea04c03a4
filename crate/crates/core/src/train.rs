//! Adam on the per-time-point negative log marginal likelihood, with
//! central finite-difference gradients in raw parameter space.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{neg_mll, Dataset, LodeGPModel};
use crate::kernelalg::{compile_lodegp, CompileMode, CompiledKernel, SlotKind};
use crate::opalgebra::Assignment;
use crate::systems::SystemSpec;

pub const NOISE_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Lengthscale,
    Variance,
    Noise,
    OdeParam,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Raw to constrained value.
pub fn transform(raw: f64, kind: ParamKind) -> f64 {
    match kind {
        ParamKind::Lengthscale | ParamKind::Variance => raw.exp(),
        ParamKind::Noise => softplus(raw) + NOISE_FLOOR,
        ParamKind::OdeParam => raw,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iters: usize,
    pub lr: f64,
    pub seed: u64,
    pub init_range: (f64, f64),
    pub grad_step: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub mode: CompileMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iters: 300,
            lr: 0.1,
            seed: 0,
            init_range: (-3.0, 3.0),
            grad_step: 1e-6,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            mode: CompileMode::Symbolic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 || !(self.lr > 0.0) || !(self.init_range.0 < self.init_range.1) {
            return Err(Error::InvalidInput(
                "iters must be positive, lr positive and init range increasing".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub model: LodeGPModel,
    pub loss_trace: Vec<f64>,
    /// Parameter name to (raw, transformed).
    pub final_params: BTreeMap<String, (f64, f64)>,
}

/// Ordered trainable parameters of a model: kernel slots, noise, ODE
/// parameters.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    pub names: Vec<String>,
    pub kinds: Vec<ParamKind>,
}

pub const NOISE_NAME: &str = "noise";

impl ParamLayout {
    pub fn of(kernel: &CompiledKernel) -> Self {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        for s in &kernel.slots {
            names.push(s.name.clone());
            kinds.push(match s.kind {
                SlotKind::Variance => ParamKind::Variance,
                SlotKind::Lengthscale => ParamKind::Lengthscale,
            });
        }
        names.push(NOISE_NAME.into());
        kinds.push(ParamKind::Noise);
        for p in &kernel.ode_params {
            names.push(p.clone());
            kinds.push(ParamKind::OdeParam);
        }
        ParamLayout { names, kinds }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn read(&self, model: &LodeGPModel) -> Vec<f64> {
        self.names
            .iter()
            .zip(&self.kinds)
            .map(|(n, k)| match k {
                ParamKind::Noise => model.noise_raw,
                ParamKind::OdeParam => model.ode_params[n],
                _ => model.raw_hypers[n],
            })
            .collect()
    }

    pub fn write(&self, model: &mut LodeGPModel, theta: &[f64]) {
        for ((n, k), &v) in self.names.iter().zip(&self.kinds).zip(theta) {
            match k {
                ParamKind::Noise => model.noise_raw = v,
                ParamKind::OdeParam => {
                    model.ode_params.insert(n.clone(), v);
                }
                _ => {
                    model.raw_hypers.insert(n.clone(), v);
                }
            }
        }
    }

    pub fn summary(&self, theta: &[f64]) -> BTreeMap<String, (f64, f64)> {
        self.names
            .iter()
            .zip(&self.kinds)
            .zip(theta)
            .map(|((n, &k), &v)| (n.clone(), (v, transform(v, k))))
            .collect()
    }
}

fn loss_at(base: &LodeGPModel, layout: &ParamLayout, theta: &[f64], data: &Dataset) -> Result<f64> {
    let mut m = base.clone();
    layout.write(&mut m, theta);
    neg_mll(&m, data)
}

/// Central-difference gradient with step `h`.
pub fn fd_gradient(
    model: &LodeGPModel,
    layout: &ParamLayout,
    theta: &[f64],
    data: &Dataset,
    h: f64,
) -> Result<Vec<f64>> {
    (0..theta.len())
        .into_par_iter()
        .map(|i| {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[i] += h;
            down[i] -= h;
            Ok((loss_at(model, layout, &up, data)? - loss_at(model, layout, &down, data)?)
                / (2.0 * h))
        })
        .collect()
}

/// Adam state for a fixed number of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    betas: (f64, f64),
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Adam {
            lr,
            betas,
            eps,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let (b1, b2) = self.betas;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            theta[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Random kernel hyperparameters from `init_range`, noise raw 0.
pub fn initial_model(
    kernel: Arc<CompiledKernel>,
    ode_init: Assignment,
    config: &TrainConfig,
) -> LodeGPModel {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = LodeGPModel::new(kernel, ode_init);
    let (lo, hi) = config.init_range;
    for s in &model.kernel.slots {
        model.raw_hypers.insert(s.name.clone(), rng.random_range(lo..hi));
    }
    model
}

/// Train every parameter of `model` from its current values.
pub fn optimize(model: LodeGPModel, data: &Dataset, config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    let layout = ParamLayout::of(&model.kernel);
    let mut theta = layout.read(&model);
    let mut adam = Adam::new(theta.len(), config.lr, config.adam_betas, config.adam_eps);
    let mut trace = Vec::with_capacity(config.iters);
    for it in 0..config.iters {
        let loss = loss_at(&model, &layout, &theta, data)?;
        trace.push(loss);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                trace,
            });
        }
        let grad = fd_gradient(&model, &layout, &theta, data, config.grad_step)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                trace,
            });
        }
        adam.step(&mut theta, &grad);
    }
    let mut model = model;
    layout.write(&mut model, &theta);
    Ok(TrainResult {
        final_params: layout.summary(&theta),
        model,
        loss_trace: trace,
    })
}

/// Compile the system and train from a seeded random start.
pub fn fit(spec: &SystemSpec, data: &Dataset, config: &TrainConfig) -> Result<TrainResult> {
    if data.channels != spec.channels {
        return Err(Error::Data(format!(
            "data channels {:?} differ from system channels {:?}",
            data.channels, spec.channels
        )));
    }
    let kernel = Arc::new(compile_lodegp(spec, config.mode)?);
    fit_kernel(kernel, spec.initial_params(), data, config)
}

pub fn fit_kernel(
    kernel: Arc<CompiledKernel>,
    ode_init: Assignment,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<TrainResult> {
    config.validate()?;
    optimize(initial_model(kernel, ode_init, config), data, config)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradStatus {
    Ok,
    Inconsistent,
    AtBound,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradEntry {
    pub name: String,
    /// Central differences at steps 1e-4, 1e-6, 1e-8.
    pub central: [f64; 3],
    /// Richardson-extrapolated estimates at 1e-4 and 1e-6.
    pub richardson: [f64; 2],
    pub status: GradStatus,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradReport {
    pub entries: Vec<GradEntry>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.status != GradStatus::Inconsistent)
    }
}

/// Compare finite-difference gradients across step sizes.
pub fn grad_check(model: &LodeGPModel, data: &Dataset) -> Result<GradReport> {
    let layout = ParamLayout::of(&model.kernel);
    let theta = layout.read(model);
    let steps = [1e-4, 1e-6, 1e-8];
    let at = |h: f64| fd_gradient(model, &layout, &theta, data, h);
    let d: Vec<Vec<f64>> = steps.iter().map(|&h| at(h)).collect::<Result<_>>()?;
    let half: Vec<Vec<f64>> = steps[..2].iter().map(|&h| at(h / 2.0)).collect::<Result<_>>()?;
    let entries = (0..theta.len())
        .map(|i| {
            let r = [
                (4.0 * half[0][i] - d[0][i]) / 3.0,
                (4.0 * half[1][i] - d[1][i]) / 3.0,
            ];
            let scale = r[0].abs().max(r[1].abs());
            let consistent = (r[0] - r[1]).abs() <= (0.01 * scale).max(1e-6);
            let at_bound = layout.kinds[i] == ParamKind::Noise
                && softplus(theta[i]) < NOISE_FLOOR;
            GradEntry {
                name: layout.names[i].clone(),
                central: [d[0][i], d[1][i], d[2][i]],
                richardson: r,
                status: if at_bound {
                    GradStatus::AtBound
                } else if consistent {
                    GradStatus::Ok
                } else {
                    GradStatus::Inconsistent
                },
            }
        })
        .collect();
    Ok(GradReport { entries })
}
