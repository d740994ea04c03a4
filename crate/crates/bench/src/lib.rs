//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use lodegp::gp::{Dataset, LodeGPModel};
use lodegp::kernelalg::{compile_lodegp, CompileMode};
use lodegp::systems::{generate_data, make_system, SystemSpec};

/// A built-in system with unit hyperparameters and its standard noisy
/// training set.
pub fn fixture(name: &str) -> (SystemSpec, LodeGPModel, Dataset) {
    let spec = make_system(name).expect("built-in system");
    let kernel = compile_lodegp(&spec, CompileMode::Symbolic).expect("compiles");
    let mut model = LodeGPModel::new(Arc::new(kernel), spec.defaults());
    model.noise_raw = -5.0;
    let data = generate_data(&spec, 25, spec.train_interval, spec.noise_std, 0).expect("has a solution");
    (spec, model, data)
}
