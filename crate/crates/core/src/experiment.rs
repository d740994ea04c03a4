//! Repeated generate/fit/evaluate runs on a built-in system, for both the
//! constrained model and the independent-SE baseline, with medians and
//! standard deviations across runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{eig_count, marginalize, posterior_mean, predict, Dataset, LodeGPModel};
use crate::io::{self, Metrics, ModelFile, ModelKind, ResultFile, SCHEMA};
use crate::kernelalg::{compile_baseline, compile_lodegp};
use crate::opalgebra::Assignment;
use crate::systems::{generate_data, linspace, make_system, SystemSpec};
use crate::train::{fit, fit_kernel, TrainConfig, TrainResult};
use crate::verify::{ode_residual, rmse};

/// Eigenvalues above this count as nonzero.
pub const EIG_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: String,
    pub runs: usize,
    pub noise: bool,
    /// Run `k` uses seed `seed + k` for data and initialization.
    pub seed: u64,
    pub jobs: usize,
    pub train_points: usize,
    pub eval_points: usize,
    /// Grid size for eigenvalue counting; 0 disables it.
    pub eig_points: usize,
    pub baseline: bool,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: "bipendulum".into(),
            runs: 10,
            noise: true,
            seed: 0,
            jobs: 1,
            train_points: 25,
            eval_points: 1000,
            eig_points: 300,
            baseline: true,
            train: TrainConfig::default(),
        }
    }
}

/// ODE parameters to verify against: the true values when the system
/// declares them all, otherwise the learned ones.
pub fn verification_params(spec: &SystemSpec, model: &LodeGPModel) -> Assignment {
    if spec.params.iter().all(|p| spec.param_defaults.contains_key(p)) {
        spec.defaults()
    } else {
        model.ode_params.clone()
    }
}

/// Metrics of a trained model on its training data.
pub fn evaluate(
    spec: &SystemSpec,
    model: &LodeGPModel,
    data: &Dataset,
    loss: f64,
    eval_points: usize,
    eig_points: usize,
) -> Result<Metrics> {
    let mut m = Metrics {
        loss,
        ..Default::default()
    };
    let mean_at = |ts: &[f64]| posterior_mean(model, data, ts);
    if let Some(f) = spec.reference {
        let reference = |ts: &[f64]| ts.iter().map(|&t| f(t)).collect::<Vec<_>>();
        m.train_rmse = Some(rmse(&mean_at(&data.times)?, &reference(&data.times))?);
        if eval_points > 0 {
            let grid = linspace(spec.eval_interval.0, spec.eval_interval.1, eval_points);
            m.eval_rmse = Some(rmse(&mean_at(&grid)?, &reference(&grid))?);
        }
    }
    if spec.order() <= 2 {
        let r = ode_residual(&mean_at, spec, spec.eval_interval, &verification_params(spec, model))?;
        m.mean_ode_error = Some(r.mean);
        m.per_equation_ode_error = Some(r.per_equation);
    }
    if eig_points > 0 {
        let grid = linspace(spec.eval_interval.0, spec.eval_interval.1, eig_points);
        m.eig_count = Some(eig_count(model, &grid, EIG_THRESHOLD)?);
    }
    Ok(m)
}

/// One trained model with everything needed to write its files.
#[derive(Clone, Debug)]
pub struct Trained {
    pub result: ResultFile,
    pub model: ModelFile,
    pub loss_trace: Vec<f64>,
    /// Posterior mean and variance on the evaluation grid.
    pub prediction: (Vec<Vec<f64>>, Vec<Vec<f64>>),
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub data: Dataset,
    pub grid: Vec<f64>,
    pub lodegp: Trained,
    pub baseline: Option<Trained>,
}

fn trained(
    spec: &SystemSpec,
    kind: ModelKind,
    config: &TrainConfig,
    data: &Dataset,
    r: TrainResult,
    cfg: &ExperimentConfig,
    grid: &[f64],
) -> Result<Trained> {
    let loss = *r.loss_trace.last().expect("iters > 0");
    let metrics = evaluate(spec, &r.model, data, loss, cfg.eval_points, cfg.eig_points)?;
    Ok(Trained {
        result: ResultFile::new(spec, kind, config, &r, metrics),
        model: ModelFile::new(kind, config.mode, spec, &r.model, data),
        prediction: predict(&r.model, data, grid)?,
        loss_trace: r.loss_trace,
    })
}

pub fn run_once(spec: &SystemSpec, cfg: &ExperimentConfig, run: usize) -> Result<RunRecord> {
    let seed = cfg.seed + run as u64;
    let noise = if cfg.noise { spec.noise_std } else { 0.0 };
    let data = generate_data(spec, cfg.train_points, spec.train_interval, noise, seed)?;
    let train = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let grid = linspace(spec.eval_interval.0, spec.eval_interval.1, cfg.eval_points);
    let r = fit(spec, &data, &train)?;
    let lodegp = trained(spec, ModelKind::Lodegp, &train, &data, r, cfg, &grid)?;
    let baseline = if cfg.baseline {
        let k = Arc::new(compile_baseline(spec));
        let r = fit_kernel(k, Assignment::new(), &data, &train)?;
        Some(trained(spec, ModelKind::Baseline, &train, &data, r, cfg, &grid)?)
    } else {
        None
    };
    Ok(RunRecord {
        run,
        seed,
        data,
        grid,
        lodegp,
        baseline,
    })
}

/// Median, spread and range of one quantity across runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        Some(Stat {
            median,
            std: var.sqrt(),
            min: v[0],
            max: v[n - 1],
            count: n,
        })
    }
}

/// Statistics of one model family across completed runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub metrics: BTreeMap<String, Stat>,
    /// Transformed parameter values.
    pub params: BTreeMap<String, Stat>,
}

fn model_stats(results: &[&ResultFile]) -> ModelStats {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut push = |k: String, v: Option<f64>| {
        if let Some(v) = v {
            columns.entry(k).or_default().push(v);
        }
    };
    for r in results {
        let m = &r.metrics;
        push("loss".into(), Some(m.loss));
        push("train_rmse".into(), m.train_rmse);
        push("eval_rmse".into(), m.eval_rmse);
        push("mean_ode_error".into(), m.mean_ode_error);
        push("eig_count".into(), m.eig_count.map(|c| c as f64));
        for (i, e) in m.per_equation_ode_error.iter().flatten().enumerate() {
            push(format!("ode_error_{}", i + 1), Some(*e));
        }
    }
    let metrics = columns.iter().filter_map(|(k, v)| Some((k.clone(), Stat::of(v)?))).collect();
    let mut params: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in results {
        for (k, p) in &r.params {
            params.entry(k.clone()).or_default().push(p.value);
        }
    }
    ModelStats {
        metrics,
        params: params.iter().filter_map(|(k, v)| Some((k.clone(), Stat::of(v)?))).collect(),
    }
}

/// Per-equation ODE errors of the full model and of the model restricted
/// to the state channels, both at unit variance and lengthscale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalComparison {
    pub kept_channels: Vec<String>,
    pub full: Vec<f64>,
    pub marginalized: Vec<f64>,
}

/// Drop the input channels (those without a `D` term), condition on the
/// remaining data and verify with the true inputs substituted.
pub fn marginal_comparison(spec: &SystemSpec, data: &Dataset, noise_var: f64) -> Result<MarginalComparison> {
    let f = spec.reference.ok_or(Error::NoReferenceSolution)?;
    let keep: Vec<usize> = (0..spec.channels.len())
        .filter(|&c| (0..spec.matrix.rows()).any(|r| spec.matrix[(r, c)].degree().unwrap_or(0) > 0))
        .collect();
    let kernel = Arc::new(compile_lodegp(spec, Default::default())?);
    let mut model = LodeGPModel::new(kernel, spec.defaults());
    let noise_var = noise_var.max(crate::train::NOISE_FLOOR * 2.0);
    // inverse softplus
    model.noise_raw = noise_var.exp_m1().ln();
    let params = spec.defaults();
    let full = ode_residual(&|ts: &[f64]| posterior_mean(&model, data, ts), spec, spec.eval_interval, &params)?;
    let small = marginalize(&model, &keep)?;
    let small_data = data.select(&keep);
    let eval = |ts: &[f64]| {
        let mean = posterior_mean(&small, &small_data, ts)?;
        Ok(ts
            .iter()
            .zip(mean)
            .map(|(&t, m)| {
                let mut row = f(t);
                for (slot, v) in keep.iter().zip(m) {
                    row[*slot] = v;
                }
                row
            })
            .collect())
    };
    let marginalized = ode_residual(&eval, spec, spec.eval_interval, &params)?;
    Ok(MarginalComparison {
        kept_channels: keep.iter().map(|&c| spec.channels[c].clone()).collect(),
        full: full.per_equation,
        marginalized: marginalized.per_equation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub schema: u32,
    pub timestamp: u64,
    pub config: ExperimentConfig,
    pub runs_completed: usize,
    pub lodegp: ModelStats,
    pub baseline: Option<ModelStats>,
    /// Relative error of each learned ODE parameter against its true value.
    pub ode_param_relative_error: BTreeMap<String, Stat>,
    pub marginal_comparison: Option<MarginalComparison>,
    pub failures: Vec<RunFailure>,
}

pub struct Experiment {
    pub spec: SystemSpec,
    pub runs: Vec<RunRecord>,
    pub aggregate: Aggregate,
}

/// Worker count: `LODEGP_JOBS` when set, else the requested value.
pub fn resolve_jobs(requested: usize) -> usize {
    std::env::var("LODEGP_JOBS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(requested)
        .max(1)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let spec = make_system(&cfg.system)?;
    if spec.reference.is_none() {
        return Err(Error::NoReferenceSolution);
    }
    if cfg.runs == 0 {
        return Err(Error::InvalidInput("runs must be positive".into()));
    }
    cfg.train.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_jobs(cfg.jobs))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let outcomes: Vec<Result<RunRecord>> =
        pool.install(|| (0..cfg.runs).into_par_iter().map(|k| run_once(&spec, cfg, k)).collect());
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (run, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => runs.push(r),
            Err(e) => failures.push(RunFailure {
                run,
                error: e.to_string(),
            }),
        }
    }
    let lodegp = model_stats(&runs.iter().map(|r| &r.lodegp.result).collect::<Vec<_>>());
    let baseline = cfg.baseline.then(|| {
        model_stats(&runs.iter().filter_map(|r| r.baseline.as_ref().map(|b| &b.result)).collect::<Vec<_>>())
    });
    let ode_param_relative_error = spec
        .params
        .iter()
        .filter_map(|p| {
            let truth = *spec.param_defaults.get(p)?;
            let errs: Vec<f64> = runs
                .iter()
                .map(|r| ((r.lodegp.result.ode_params[p] - truth) / truth).abs())
                .collect();
            Some((p.clone(), Stat::of(&errs)?))
        })
        .collect();
    let has_inputs = (0..spec.channels.len())
        .any(|c| (0..spec.matrix.rows()).all(|r| spec.matrix[(r, c)].degree().unwrap_or(0) == 0));
    let marginal_comparison = match (has_inputs, runs.first()) {
        (true, Some(r)) => {
            let noise = if cfg.noise { spec.noise_std } else { 0.0 };
            Some(marginal_comparison(&spec, &r.data, noise * noise)?)
        }
        _ => None,
    };
    let aggregate = Aggregate {
        schema: SCHEMA,
        timestamp: io::now(),
        config: cfg.clone(),
        runs_completed: runs.len(),
        lodegp,
        baseline,
        ode_param_relative_error,
        marginal_comparison,
        failures,
    };
    Ok(Experiment {
        spec,
        runs,
        aggregate,
    })
}

fn prediction_csv(channels: &[String], grid: &[f64], t: &Trained, reference: Option<fn(f64) -> Vec<f64>>) -> String {
    let mut cols: Vec<String> = channels.iter().map(|c| format!("mean_{c}")).collect();
    cols.extend(channels.iter().map(|c| format!("var_{c}")));
    if reference.is_some() {
        cols.extend(channels.iter().map(|c| format!("ref_{c}")));
    }
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .enumerate()
        .map(|(i, &time)| {
            let mut row = t.prediction.0[i].clone();
            row.extend(&t.prediction.1[i]);
            if let Some(f) = reference {
                row.extend(f(time));
            }
            row
        })
        .collect();
    io::csv_string(&cols, grid, &rows)
}

/// One row per run and model; empty cells for metrics that were not computed.
fn runs_csv(exp: &Experiment) -> String {
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut s = String::from("run,model,loss,train_rmse,eval_rmse,mean_ode_error,eig_count\n");
    for r in &exp.runs {
        let mut models = vec![("lodegp", &r.lodegp)];
        if let Some(b) = &r.baseline {
            models.push(("baseline", b));
        }
        for (tag, t) in models {
            let m = &t.result.metrics;
            s.push_str(&format!(
                "{},{tag},{},{},{},{},{}\n",
                r.run,
                m.loss,
                cell(m.train_rmse),
                cell(m.eval_rmse),
                cell(m.mean_ode_error),
                m.eig_count.map_or(String::new(), |c| c.to_string()),
            ));
        }
    }
    s
}

fn loss_csv(trace: &[f64]) -> String {
    let mut s = String::from("iteration,loss\n");
    for (i, l) in trace.iter().enumerate() {
        s.push_str(&format!("{i},{l}\n"));
    }
    s
}

/// Write `aggregate.json` and `runs.csv` plus, per run, result and model JSON and the
/// data, prediction and loss CSVs.
pub fn write_outputs(dir: &Path, exp: &Experiment) -> Result<()> {
    let spec = &exp.spec;
    for r in &exp.runs {
        let stem = format!("run{:02}", r.run);
        io::write_atomic(&dir.join(format!("{stem}_data.csv")), io::dataset_csv(&r.data).as_bytes())?;
        let mut models = vec![("lodegp", &r.lodegp)];
        if let Some(b) = &r.baseline {
            models.push(("baseline", b));
        }
        for (tag, t) in models {
            let p = |suffix: &str| dir.join(format!("{stem}_{tag}{suffix}"));
            io::write_atomic(&p("_result.json"), io::to_json(&t.result).as_bytes())?;
            io::write_atomic(&p("_model.json"), io::to_json(&t.model).as_bytes())?;
            io::write_atomic(
                &p("_prediction.csv"),
                prediction_csv(&spec.channels, &r.grid, t, spec.reference).as_bytes(),
            )?;
            io::write_atomic(&p("_loss.csv"), loss_csv(&t.loss_trace).as_bytes())?;
        }
    }
    io::write_atomic(&dir.join("runs.csv"), runs_csv(exp).as_bytes())?;
    io::write_atomic(&dir.join("aggregate.json"), io::to_json(&exp.aggregate).as_bytes())
}
