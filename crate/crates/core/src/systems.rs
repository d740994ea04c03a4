//! Built-in benchmark systems and data generation.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gp::Dataset;
use crate::opalgebra::{parse_operator, Assignment, OperatorMatrix, Rational};

/// Closed-form trajectory: time to one value per channel.
pub type Trajectory = fn(f64) -> Vec<f64>;

#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    pub channels: Vec<String>,
    pub params: Vec<String>,
    /// True parameter values used for data generation and verification.
    pub param_defaults: BTreeMap<String, f64>,
    /// Starting values for training; missing entries start at 1.0.
    pub param_init: BTreeMap<String, f64>,
    pub matrix: OperatorMatrix,
    pub reference: Option<Trajectory>,
    pub train_interval: (f64, f64),
    pub eval_interval: (f64, f64),
    pub noise_std: f64,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("channels", &self.channels)
            .field("params", &self.params)
            .field("matrix", &self.matrix.to_string())
            .field("reference", &self.reference.is_some())
            .finish()
    }
}

impl SystemSpec {
    pub fn defaults(&self) -> Assignment {
        self.param_defaults.clone()
    }

    pub fn initial_params(&self) -> Assignment {
        self.params
            .iter()
            .map(|p| (p.clone(), self.param_init.get(p).copied().unwrap_or(1.0)))
            .collect()
    }

    /// Highest power of `D` in the operator matrix.
    pub fn order(&self) -> usize {
        self.matrix.max_degree()
    }

    /// Operator matrix with every parameter replaced by an exact value.
    pub fn bound_matrix(&self, params: &Assignment) -> Result<OperatorMatrix> {
        let exact: BTreeMap<String, Rational> = params
            .iter()
            .map(|(k, v)| (k.clone(), crate::opalgebra::from_f64(*v)))
            .collect();
        self.matrix.substitute(&exact)
    }
}

pub const BUILTIN: [&str; 4] = ["bipendulum", "bipendulum-equal", "heating", "three-tank"];

fn matrix(rows: &[&[&str]]) -> OperatorMatrix {
    OperatorMatrix::from_rows(
        rows.iter()
            .map(|r| r.iter().map(|s| parse_operator(s).expect("built-in entry")).collect())
            .collect(),
    )
    .expect("rectangular")
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn make_system(name: &str) -> Result<SystemSpec> {
    let spec = match name {
        "bipendulum" => SystemSpec {
            name: name.into(),
            channels: names(&["f1", "f2", "u"]),
            params: Vec::new(),
            param_defaults: BTreeMap::new(),
            param_init: BTreeMap::new(),
            matrix: matrix(&[
                &["D^2 + 981/100", "0", "-1"],
                &["0", "D^2 + 981/200", "-1/2"],
            ]),
            reference: Some(bipendulum_solution),
            train_interval: (1.0, 6.0),
            eval_interval: (1.0, 11.0),
            noise_std: 0.012,
        },
        "bipendulum-equal" => SystemSpec {
            name: name.into(),
            channels: names(&["f1", "f2", "u"]),
            params: Vec::new(),
            param_defaults: BTreeMap::new(),
            param_init: BTreeMap::new(),
            matrix: matrix(&[&["D^2 + 981/100", "0", "-1"], &["0", "D^2 + 981/100", "-1"]]),
            reference: None,
            train_interval: (1.0, 6.0),
            eval_interval: (1.0, 11.0),
            noise_std: 0.012,
        },
        "heating" => SystemSpec {
            name: name.into(),
            channels: names(&["f1", "f2", "u"]),
            params: names(&["a", "b"]),
            param_defaults: [("a".to_string(), 3.0), ("b".to_string(), 1.0)].into(),
            param_init: BTreeMap::new(),
            matrix: matrix(&[&["D + a", "-a", "-1"], &["-b", "D + b", "0"]]),
            reference: Some(heating_solution),
            train_interval: (-5.0, 5.0),
            eval_interval: (-9.0, 9.0),
            noise_std: 0.02,
        },
        "three-tank" => SystemSpec {
            name: name.into(),
            channels: names(&["f1", "f2", "f3", "u1", "u2"]),
            params: Vec::new(),
            param_defaults: BTreeMap::new(),
            param_init: BTreeMap::new(),
            matrix: matrix(&[
                &["-D", "0", "0", "1", "0"],
                &["0", "-D", "0", "1", "1"],
                &["0", "0", "-D", "0", "1"],
            ]),
            reference: Some(three_tank_solution),
            train_interval: (1.0, 6.0),
            eval_interval: (1.0, 11.0),
            noise_std: 0.08,
        },
        other => return Err(Error::UnknownSystem(other.into())),
    };
    Ok(spec)
}

/// Two pendulums on a common rod (lengths 1 and 2).
///
/// `sin(3t) / (10 (t+1))` pushed through the latent column of the base
/// change, so both equations hold exactly.
pub fn bipendulum_solution(t: f64) -> Vec<f64> {
    let (s, c, x) = ((3.0 * t).sin(), (3.0 * t).cos(), t + 1.0);
    let f1 = -819.0 / 2000.0 * s / x - 0.6 * c / x.powi(2) + 0.2 * s / x.powi(3);
    let f2 = 81.0 / 2000.0 * s / x - 0.3 * c / x.powi(2) + 0.1 * s / x.powi(3);
    let u = -66339.0 / 200000.0 * s / x + 1971.0 / 1000.0 * c / x.powi(2)
        - 7857.0 / 1000.0 * s / x.powi(3)
        - 7.2 * c / x.powi(4)
        + 2.4 * s / x.powi(5);
    vec![f1, f2, u]
}

/// Heating system at `a = 3`, `b = 1`.
pub fn heating_solution(t: f64) -> Vec<f64> {
    let (e, c, s) = ((-t / 10.0).exp(), (t / 2.0).cos(), (t / 2.0).sin());
    vec![
        0.5 * c * e + 0.9 * e * s,
        e * s,
        1.9 * c * e - 0.64 * e * s,
    ]
}

pub fn three_tank_solution(t: f64) -> Vec<f64> {
    let (a, b) = ((-t / 2.0).exp(), (-t / 4.0).exp());
    vec![a, b, b - a, -a / 2.0, -b / 4.0 + a / 2.0]
}

/// Evenly spaced times from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Noisy samples of the reference solution at evenly spaced times.
pub fn generate_data(
    spec: &SystemSpec,
    count: usize,
    interval: (f64, f64),
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    let f = spec.reference.ok_or(Error::NoReferenceSolution)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = linspace(interval.0, interval.1, count);
    let values = times
        .iter()
        .map(|&t| {
            f(t).into_iter()
                .map(|v| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v + noise_std * e
                })
                .collect()
        })
        .collect();
    Dataset::new(times, values, spec.channels.clone())
}
