use std::sync::Arc;

use lodegp::gp::{Dataset, LodeGPModel};
use lodegp::kernelalg::{compile_lodegp, CompileMode};
use lodegp::opalgebra::{parse_operator, OperatorMatrix};
use lodegp::systems::{generate_data, make_system};
use lodegp::train::{fit, grad_check, optimize, GradStatus, TrainConfig};

fn heating_data(noise: f64, seed: u64) -> (lodegp::systems::SystemSpec, Dataset) {
    let spec = make_system("heating").unwrap();
    let data = generate_data(&spec, 25, spec.train_interval, noise, seed).unwrap();
    (spec, data)
}

fn rel_err(params: &std::collections::BTreeMap<String, (f64, f64)>) -> f64 {
    let a = params["a"].1;
    let b = params["b"].1;
    ((a - 3.0) / 3.0).abs().max((b - 1.0).abs())
}

#[test]
fn fit_is_deterministic() {
    let (spec, data) = heating_data(0.02, 4);
    let cfg = TrainConfig {
        iters: 40,
        seed: 9,
        ..Default::default()
    };
    let a = fit(&spec, &data, &cfg).unwrap();
    let b = fit(&spec, &data, &cfg).unwrap();
    assert_eq!(a.loss_trace.len(), 40);
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.final_params, b.final_params);
}

#[test]
fn transformed_values_stay_in_bounds() {
    let (spec, data) = heating_data(0.0, 2);
    let r = fit(&spec, &data, &TrainConfig::default()).unwrap();
    for (name, (_, v)) in &r.final_params {
        if name.starts_with("sigma2") || name.starts_with("ell") {
            assert!(*v > 0.0, "{name}");
        }
    }
    assert!(r.final_params["noise"].1 >= 1e-10);
}

#[test]
fn heating_recovers_parameters_noiseless() {
    let (spec, data) = heating_data(0.0, 0);
    let r = fit(&spec, &data, &TrainConfig::default()).unwrap();
    let e = rel_err(&r.final_params);
    assert!(e <= 0.05, "{e}");
}

#[test]
fn heating_recovers_parameters_noisy() {
    let (spec, data) = heating_data(spec_noise(), 1);
    let r = fit(&spec, &data, &TrainConfig::default()).unwrap();
    let e = rel_err(&r.final_params);
    assert!(e <= 0.10, "{e}");
}

fn spec_noise() -> f64 {
    make_system("heating").unwrap().noise_std
}

fn assert_trend_descends(name: &str, seed: u64) {
    let spec = make_system(name).unwrap();
    let data = generate_data(&spec, 25, spec.train_interval, spec.noise_std, seed).unwrap();
    let cfg = TrainConfig {
        seed,
        ..Default::default()
    };
    let trace = fit(&spec, &data, &cfg).unwrap().loss_trace;
    let avg: Vec<f64> = trace.windows(50).map(|w| w.iter().sum::<f64>() / 50.0).collect();
    for (i, w) in avg[avg.len() - 200..].windows(2).enumerate() {
        assert!(w[1] <= w[0], "{name} seed {seed} at {i}: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn loss_trend_descends() {
    for seed in 0..3 {
        assert_trend_descends("bipendulum", seed);
        assert_trend_descends("three-tank", seed);
    }
}

#[test]
#[ignore = "Adam at lr 0.1 enters a limit cycle on the untransformed heating parameters"]
fn heating_loss_trend_descends() {
    assert_trend_descends("heating", 0);
}

#[test]
fn grad_check_se_model() {
    let mut spec = make_system("bipendulum").unwrap();
    spec.matrix = OperatorMatrix::from_rows(vec![vec![parse_operator("0").unwrap()]]).unwrap();
    spec.channels = vec!["x".into()];
    spec.params.clear();
    let kernel = Arc::new(compile_lodegp(&spec, CompileMode::Symbolic).unwrap());
    let times = vec![0.0, 0.5, 1.2, 2.0, 3.1];
    let values = times.iter().map(|t: &f64| vec![t.sin()]).collect();
    let data = Dataset::new(times, values, spec.channels.clone()).unwrap();
    let mut model = LodeGPModel::new(kernel, Default::default());
    model.noise_raw = -2.0;
    let report = grad_check(&model, &data).unwrap();
    assert!(report.passed(), "{report:?}");
    assert!(report.entries.iter().all(|e| e.status == GradStatus::Ok));

    model.noise_raw = -40.0;
    let report = grad_check(&model, &data).unwrap();
    let noise = report.entries.iter().find(|e| e.name == "noise").unwrap();
    assert_eq!(noise.status, GradStatus::AtBound);
    assert!(noise.central[1].abs() < 1e-6);
}

#[test]
fn grad_check_after_warm_up() {
    for name in ["bipendulum", "heating", "three-tank"] {
        let spec = make_system(name).unwrap();
        let data = generate_data(&spec, 25, spec.train_interval, spec.noise_std, 0).unwrap();
        let cfg = TrainConfig {
            iters: 10,
            ..Default::default()
        };
        let model = fit(&spec, &data, &cfg).unwrap().model;
        let report = grad_check(&model, &data).unwrap();
        assert!(report.passed(), "{name}: {report:?}");
    }
}

#[test]
fn optimize_continues_from_current_values() {
    let (spec, data) = heating_data(0.0, 0);
    let cfg = TrainConfig {
        iters: 5,
        ..Default::default()
    };
    let first = fit(&spec, &data, &cfg).unwrap();
    let more = optimize(first.model.clone(), &data, &cfg).unwrap();
    // the first loss of the continuation is taken after the fifth step
    assert!(more.loss_trace[0] < first.loss_trace[0]);
    assert_eq!(more.loss_trace.len(), 5);
}
