use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use lodegp::experiment::{
    evaluate, run_experiment, verification_params, write_outputs, Aggregate, ExperimentConfig, ModelStats,
    EIG_THRESHOLD,
};
use lodegp::gp::{eig_count, posterior_mean, predict, sample};
use lodegp::io::{self, ModelFile, ModelKind, ResultFile};
use lodegp::kernelalg::{compile_baseline, compile_lodegp};
use lodegp::opalgebra::Assignment;
use lodegp::smith::{smith_normal_form, SmithRendering};
use lodegp::systems::{generate_data, linspace, make_system, SystemSpec};
use lodegp::train::{fit, fit_kernel, TrainConfig};
use lodegp::verify::ode_residual;
use lodegp::{Error, Result};
use serde::Serialize;

use crate::{Command, Grid, Switch};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Snf { system, json } => snf(&load_system(&system)?, json),
        Command::Kernel { system, mode, json } => kernel(&load_system(&system)?, mode.into(), json),
        Command::System { name } => {
            stdout(&io::system_json(&make_system(&name)?));
            Ok(())
        }
        Command::Data {
            system,
            points,
            noise,
            seed,
            interval,
            output,
        } => {
            let spec = load_system(&system)?;
            let interval = interval.map_or(spec.train_interval, |v| (v[0], v[1]));
            let std = if noise == Switch::On { spec.noise_std } else { 0.0 };
            let data = generate_data(&spec, points, interval, std, seed)?;
            emit(output.as_deref(), &io::dataset_csv(&data))
        }
        Command::Fit {
            system,
            data,
            iters,
            lr,
            seed,
            mode,
            baseline,
            output,
            result,
            eval_points,
            eig_points,
        } => {
            let spec = load_system(&system)?;
            let data = io::read_csv(&io::read_to_string(&data)?, Some(&spec.channels))?;
            let config = TrainConfig {
                iters,
                lr,
                seed,
                mode: mode.into(),
                ..Default::default()
            };
            let (kind, r) = if baseline {
                let k = Arc::new(compile_baseline(&spec));
                (ModelKind::Baseline, fit_kernel(k, Assignment::new(), &data, &config)?)
            } else {
                (ModelKind::Lodegp, fit(&spec, &data, &config)?)
            };
            let loss = *r.loss_trace.last().expect("iters > 0");
            let metrics = evaluate(&spec, &r.model, &data, loss, eval_points, eig_points)?;
            let model = ModelFile::new(kind, config.mode, &spec, &r.model, &data);
            io::write_atomic(&output, io::to_json(&model).as_bytes())?;
            let res = ResultFile::new(&spec, kind, &config, &r, metrics);
            emit(result.as_deref(), &io::to_json(&res))
        }
        Command::Predict { model, grid: Grid(grid), output } => {
            let (spec, model, data) = load_model(&model)?;
            let (mean, var) = predict(&model, &data, &grid)?;
            let mut cols: Vec<String> = spec.channels.iter().map(|c| format!("mean_{c}")).collect();
            cols.extend(spec.channels.iter().map(|c| format!("var_{c}")));
            let rows: Vec<Vec<f64>> = mean.into_iter().zip(var).map(|(m, v)| [m, v].concat()).collect();
            emit(output.as_deref(), &io::csv_string(&cols, &grid, &rows))
        }
        Command::Sample {
            model,
            grid: Grid(grid),
            seed,
            count,
            prior,
            output,
        } => {
            let (spec, model, data) = load_model(&model)?;
            let draws = sample(&model, &grid, count, seed, (!prior).then_some(&data))?;
            let cols: Vec<String> = (0..count)
                .flat_map(|k| spec.channels.iter().map(move |c| format!("sample{k}_{c}")))
                .collect();
            let rows: Vec<Vec<f64>> = (0..grid.len())
                .map(|i| draws.iter().flat_map(|d| d[i].iter().copied()).collect())
                .collect();
            emit(output.as_deref(), &io::csv_string(&cols, &grid, &rows))
        }
        Command::Verify {
            model,
            system,
            interval,
            eig_points,
        } => verify(&model, system.as_deref(), interval, eig_points),
        Command::Experiment {
            name,
            runs,
            noise,
            seed,
            output,
            jobs,
            iters,
            train_points,
            eval_points,
            eig_points,
            no_baseline,
            json,
        } => {
            let cfg = ExperimentConfig {
                system: name,
                runs,
                noise: noise == Switch::On,
                seed,
                jobs,
                train_points,
                eval_points,
                eig_points,
                baseline: !no_baseline,
                train: TrainConfig {
                    iters,
                    ..Default::default()
                },
            };
            let exp = run_experiment(&cfg)?;
            if let Some(dir) = &output {
                write_outputs(dir, &exp)?;
            }
            for f in &exp.aggregate.failures {
                eprintln!("run {} failed: {}", f.run, f.error);
            }
            stdout(&if json { io::to_json(&exp.aggregate) } else { summary(&exp.aggregate) });
            if exp.aggregate.runs_completed == 0 {
                return Err(Error::InvalidInput("no run completed".into()));
            }
            Ok(())
        }
    }
}

fn load_system(arg: &str) -> Result<SystemSpec> {
    let path = Path::new(arg);
    if path.is_file() {
        return io::parse_system(&io::read_to_string(path)?);
    }
    make_system(arg)
}

fn load_model(path: &Path) -> Result<(SystemSpec, lodegp::gp::LodeGPModel, lodegp::gp::Dataset)> {
    let file: ModelFile = io::from_json(&io::read_to_string(path)?)?;
    file.restore()
}

/// Write to `path` atomically, or to stdout.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => io::write_atomic(p, text.as_bytes()),
        None => {
            stdout(text);
            Ok(())
        }
    }
}

/// A closed pipe (`lodegp ... | head`) is not an error.
fn stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

fn snf(spec: &SystemSpec, json: bool) -> Result<()> {
    let s = smith_normal_form(&spec.matrix)?;
    let r = SmithRendering::from(&s);
    if json {
        stdout(&io::to_json(&r));
        return Ok(());
    }
    let mut out = String::new();
    for (label, m) in [("U", &r.u), ("D", &r.d), ("V", &r.v)] {
        out.push_str(&format!("{label} =\n"));
        grid_lines(&mut out, m);
    }
    out.push_str(&format!("det U = {}\ndet V = {}\ncontrollable: {}\n", r.det_u, r.det_v, r.controllable));
    stdout(&out);
    Ok(())
}

fn grid_lines(out: &mut String, m: &[Vec<String>]) {
    let cols = m.first().map_or(0, Vec::len);
    let widths: Vec<usize> = (0..cols)
        .map(|j| m.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    for row in m {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(&format!("  [ {} ]\n", cells.join("  ").trim_end()));
    }
}

#[derive(Serialize)]
struct KernelRendering {
    channels: Vec<String>,
    hyperparameters: Vec<String>,
    entries: Vec<Vec<String>>,
}

fn kernel(spec: &SystemSpec, mode: lodegp::kernelalg::CompileMode, json: bool) -> Result<()> {
    let compiled = compile_lodegp(spec, mode)?;
    let mut params = spec.initial_params();
    params.extend(spec.defaults());
    let m = compiled.matrix(&params)?;
    let r = KernelRendering {
        channels: spec.channels.clone(),
        hyperparameters: m.slot_names(),
        entries: m.render(),
    };
    if json {
        stdout(&io::to_json(&r));
        return Ok(());
    }
    let mut out = format!("hyperparameters: {}\n", r.hyperparameters.join(", "));
    for (i, row) in r.entries.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            out.push_str(&format!("k[{}, {}] = {e}\n", r.channels[i], r.channels[j]));
        }
    }
    stdout(&out);
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    system: String,
    interval: (f64, f64),
    ode_params: Assignment,
    per_equation_ode_error: Vec<f64>,
    mean_ode_error: f64,
    point_count: usize,
    delta: f64,
    filter: String,
    eig_threshold: f64,
    eig_points: usize,
    eig_count: Option<usize>,
}

fn verify(model: &Path, system: Option<&str>, interval: Option<Vec<f64>>, eig_points: usize) -> Result<()> {
    let (own, model, data) = load_model(model)?;
    let target = match system {
        Some(s) => load_system(s)?,
        None => own,
    };
    if target.channels != data.channels {
        return Err(Error::Data(format!(
            "system channels {:?} differ from model channels {:?}",
            target.channels, data.channels
        )));
    }
    let interval = interval.map_or(target.eval_interval, |v| (v[0], v[1]));
    let params = verification_params(&target, &model);
    let eval = |ts: &[f64]| posterior_mean(&model, &data, ts);
    let r = ode_residual(&eval, &target, interval, &params)?;
    let eig = if eig_points > 0 {
        Some(eig_count(&model, &linspace(interval.0, interval.1, eig_points), EIG_THRESHOLD)?)
    } else {
        None
    };
    let report = VerifyReport {
        system: target.name.clone(),
        interval,
        ode_params: params,
        per_equation_ode_error: r.per_equation,
        mean_ode_error: r.mean,
        point_count: r.point_count,
        delta: r.delta,
        filter: r.filter,
        eig_threshold: EIG_THRESHOLD,
        eig_points,
        eig_count: eig,
    };
    stdout(&io::to_json(&report));
    Ok(())
}

/// Medians and standard deviations in the layout of a results table.
fn summary(agg: &Aggregate) -> String {
    let mut out = format!(
        "{}: {} of {} runs completed\n",
        agg.config.system, agg.runs_completed, agg.config.runs
    );
    let fmt = |s: &ModelStats, k: &str| {
        s.metrics
            .get(k)
            .map_or("-".to_string(), |st| format!("{:.4e} ± {:.3e}", st.median, st.std))
    };
    let keys: Vec<&String> = agg.lodegp.metrics.keys().collect();
    out.push_str(&format!("{:<16} {:>24} {:>24}\n", "metric", "LODE-GP", "GP"));
    for k in keys {
        let base = agg.baseline.as_ref().map_or("-".to_string(), |b| fmt(b, k));
        out.push_str(&format!("{k:<16} {:>24} {base:>24}\n", fmt(&agg.lodegp, k)));
    }
    for (p, st) in &agg.ode_param_relative_error {
        out.push_str(&format!(
            "relative error of {p}: median {:.3e}, max {:.3e}\n",
            st.median, st.max
        ));
    }
    if let Some(mc) = &agg.marginal_comparison {
        out.push_str(&format!("marginalized to {}:\n", mc.kept_channels.join(", ")));
        for (i, (f, m)) in mc.full.iter().zip(&mc.marginalized).enumerate() {
            out.push_str(&format!("  equation {}: full {f:.3e}, marginalized {m:.3e}\n", i + 1));
        }
    }
    out
}
