//! File formats: system specs, models and results as JSON, time series as
//! CSV. Floats are written in shortest round-trip form, so every value
//! reads back bit-exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Dataset, LodeGPModel};
use crate::kernelalg::{compile_baseline, compile_lodegp, CompileMode};
use crate::opalgebra::{parse_operator, OperatorMatrix};
use crate::systems::{make_system, SystemSpec, BUILTIN};
use crate::train::{TrainConfig, TrainResult};

/// Version stamped into every model and result file.
pub const SCHEMA: u32 = 1;

/// JSON form of a [`SystemSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpecFile {
    pub name: String,
    #[serde(default)]
    pub parameters: Vec<String>,
    pub channels: Vec<String>,
    /// One row per equation, one polynomial in `D` per channel.
    pub equations: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_interval: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_interval: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub param_defaults: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub param_init: BTreeMap<String, f64>,
}

impl SystemSpecFile {
    pub fn from_spec(spec: &SystemSpec) -> Self {
        SystemSpecFile {
            name: spec.name.clone(),
            parameters: spec.params.clone(),
            channels: spec.channels.clone(),
            equations: spec
                .matrix
                .to_rows()
                .iter()
                .map(|r| r.iter().map(ToString::to_string).collect())
                .collect(),
            train_interval: Some(spec.train_interval),
            eval_interval: Some(spec.eval_interval),
            noise_std: Some(spec.noise_std),
            param_defaults: spec.param_defaults.clone(),
            param_init: spec.param_init.clone(),
        }
    }

    /// Validate and build the system. A file naming a built-in system with
    /// the built-in equations inherits its reference solution.
    pub fn to_spec(&self) -> Result<SystemSpec> {
        let n = self.channels.len();
        if self.equations.is_empty() || n == 0 {
            return Err(Error::ShapeMismatch("system needs equations and channels".into()));
        }
        if let Some((r, row)) = self.equations.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "equation {} has {} entries for {} channels",
                r + 1,
                row.len(),
                n
            )));
        }
        if self.channels.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::InvalidInput("repeated channel name".into()));
        }
        if self.channels.iter().any(|c| c == "t") {
            return Err(Error::InvalidInput("channel name `t` is reserved".into()));
        }
        let declared: BTreeSet<&str> = self.parameters.iter().map(String::as_str).collect();
        let mut rows = Vec::with_capacity(self.equations.len());
        for (r, eq) in self.equations.iter().enumerate() {
            let mut row = Vec::with_capacity(n);
            for (c, src) in eq.iter().enumerate() {
                let p = parse_operator(src).map_err(|e| match e {
                    Error::Parse { column, message } => Error::Parse {
                        column,
                        message: format!("equation {}, entry {} (`{src}`): {message}", r + 1, c + 1),
                    },
                    other => other,
                })?;
                for coef in p.coeffs() {
                    if let Some(s) = coef.symbols().iter().find(|s| !declared.contains(&***s)) {
                        return Err(Error::InvalidInput(format!(
                            "undeclared parameter `{s}` in equation {}, entry {}",
                            r + 1,
                            c + 1
                        )));
                    }
                }
                row.push(p);
            }
            rows.push(row);
        }
        let matrix = OperatorMatrix::from_rows(rows)?;
        for key in self.param_defaults.keys().chain(self.param_init.keys()) {
            if !declared.contains(key.as_str()) {
                return Err(Error::InvalidInput(format!("value given for unknown parameter `{key}`")));
            }
        }
        let train_interval = self.train_interval.or(self.eval_interval).unwrap_or((0.0, 1.0));
        let eval_interval = self.eval_interval.unwrap_or(train_interval);
        for (lo, hi) in [train_interval, eval_interval] {
            if !(lo < hi) {
                return Err(Error::InvalidInput(format!("empty interval [{lo}, {hi}]")));
            }
        }
        let noise_std = self.noise_std.unwrap_or(0.0);
        if !(noise_std >= 0.0) {
            return Err(Error::InvalidInput("noise_std must be non-negative".into()));
        }
        let reference = if BUILTIN.contains(&self.name.as_str()) {
            let builtin = make_system(&self.name)?;
            (builtin.matrix == matrix).then_some(builtin.reference).flatten()
        } else {
            None
        };
        Ok(SystemSpec {
            name: self.name.clone(),
            channels: self.channels.clone(),
            params: self.parameters.clone(),
            param_defaults: self.param_defaults.clone(),
            param_init: self.param_init.clone(),
            matrix,
            reference,
            train_interval,
            eval_interval,
            noise_std,
        })
    }
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        column: e.column(),
        message: format!("line {}: {e}", e.line()),
    }
}

pub fn parse_system(text: &str) -> Result<SystemSpec> {
    serde_json::from_str::<SystemSpecFile>(text)
        .map_err(json_error)?
        .to_spec()
}

pub fn system_json(spec: &SystemSpec) -> String {
    to_json(&SystemSpecFile::from_spec(spec))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(json_error)
}

/// Observations as stored inside a model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataBlock {
    pub channels: Vec<String>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl From<&Dataset> for DataBlock {
    fn from(d: &Dataset) -> Self {
        DataBlock {
            channels: d.channels.clone(),
            times: d.times.clone(),
            values: d.values.clone(),
        }
    }
}

impl DataBlock {
    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::new(self.times.clone(), self.values.clone(), self.channels.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lodegp,
    Baseline,
}

/// A trained model: system, raw parameters and the training data it
/// conditions on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: u32,
    pub kind: ModelKind,
    pub mode: CompileMode,
    pub system: SystemSpecFile,
    /// Raw (untransformed) kernel hyperparameters.
    pub hypers: BTreeMap<String, f64>,
    pub noise_raw: f64,
    pub ode_params: BTreeMap<String, f64>,
    pub data: DataBlock,
}

impl ModelFile {
    pub fn new(
        kind: ModelKind,
        mode: CompileMode,
        spec: &SystemSpec,
        model: &LodeGPModel,
        data: &Dataset,
    ) -> Self {
        ModelFile {
            schema: SCHEMA,
            kind,
            mode,
            system: SystemSpecFile::from_spec(spec),
            hypers: model.raw_hypers.clone(),
            noise_raw: model.noise_raw,
            ode_params: model.ode_params.clone(),
            data: data.into(),
        }
    }

    /// Recompile the kernel and rebind the stored parameters.
    pub fn restore(&self) -> Result<(SystemSpec, LodeGPModel, Dataset)> {
        if self.schema != SCHEMA {
            return Err(Error::InvalidInput(format!("unsupported model schema {}", self.schema)));
        }
        let spec = self.system.to_spec()?;
        let kernel = match self.kind {
            ModelKind::Lodegp => compile_lodegp(&spec, self.mode)?,
            ModelKind::Baseline => compile_baseline(&spec),
        };
        for s in &kernel.slots {
            if !self.hypers.contains_key(&s.name) {
                return Err(Error::UnboundSymbol(s.name.clone()));
            }
        }
        let model = LodeGPModel {
            kernel: Arc::new(kernel),
            raw_hypers: self.hypers.clone(),
            ode_params: self.ode_params.clone(),
            noise_raw: self.noise_raw,
        };
        let data = self.data.to_dataset()?;
        if data.channels != spec.channels {
            return Err(Error::Data("model data channels differ from its system".into()));
        }
        Ok((spec, model, data))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamValue {
    pub raw: f64,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub iterations: usize,
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
    pub min: f64,
}

impl LossSummary {
    pub fn of(trace: &[f64]) -> Self {
        LossSummary {
            iterations: trace.len(),
            initial: trace.first().copied().unwrap_or(f64::NAN),
            last: trace.last().copied().unwrap_or(f64::NAN),
            min: trace.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Evaluation of one trained model; absent entries were not computable
/// (no reference solution) or not requested.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub train_rmse: Option<f64>,
    pub eval_rmse: Option<f64>,
    pub mean_ode_error: Option<f64>,
    pub per_equation_ode_error: Option<Vec<f64>>,
    pub eig_count: Option<usize>,
}

/// Starting values that the training protocol does not randomize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitEcho {
    pub ode_params: BTreeMap<String, f64>,
    pub noise_raw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub schema: u32,
    /// Seconds since the Unix epoch; the only non-reproducible field.
    pub timestamp: u64,
    pub system: String,
    pub kind: ModelKind,
    pub seed: u64,
    pub config: TrainConfig,
    pub init: InitEcho,
    pub params: BTreeMap<String, ParamValue>,
    pub ode_params: BTreeMap<String, f64>,
    pub loss: LossSummary,
    pub metrics: Metrics,
}

impl ResultFile {
    pub fn new(
        spec: &SystemSpec,
        kind: ModelKind,
        config: &TrainConfig,
        result: &TrainResult,
        metrics: Metrics,
    ) -> Self {
        ResultFile {
            schema: SCHEMA,
            timestamp: now(),
            system: spec.name.clone(),
            kind,
            seed: config.seed,
            config: config.clone(),
            init: InitEcho {
                ode_params: if kind == ModelKind::Lodegp {
                    spec.initial_params()
                } else {
                    BTreeMap::new()
                },
                noise_raw: 0.0,
            },
            params: result
                .final_params
                .iter()
                .map(|(k, &(raw, value))| (k.clone(), ParamValue { raw, value }))
                .collect(),
            ode_params: result.model.ode_params.clone(),
            loss: LossSummary::of(&result.loss_trace),
            metrics,
        }
    }
}

pub fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Parse `t,<channels...>` CSV. When `channels` is given the header must
/// match it exactly.
pub fn read_csv(text: &str, channels: Option<&[String]>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(Error::Data("CSV header must start with `t`".into()));
    }
    let names = header[1..].to_vec();
    if names.is_empty() {
        return Err(Error::Data("CSV has no channel columns".into()));
    }
    if let Some(expected) = channels {
        if names != expected {
            return Err(Error::Data(format!(
                "CSV channels {names:?} differ from system channels {expected:?}"
            )));
        }
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("CSV row {}: {e}", i + 1)))?;
        let nums: Vec<f64> = record
            .iter()
            .enumerate()
            .map(|(c, s)| {
                s.parse::<f64>().map_err(|_| {
                    Error::Data(format!("CSV row {}, column {}: `{s}` is not a number", i + 1, c + 1))
                })
            })
            .collect::<Result<_>>()?;
        times.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    if times.is_empty() {
        return Err(Error::Data("CSV has no data rows".into()));
    }
    Dataset::new(times, values, names)
}

/// CSV with header `t,<columns...>`, one row per time.
pub fn csv_string(columns: &[String], times: &[f64], rows: &[Vec<f64>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("t").chain(columns.iter().map(String::as_str)).collect();
    w.write_record(&header).expect("in-memory write");
    for (t, row) in times.iter().zip(rows) {
        let rec: Vec<String> = std::iter::once(t).chain(row).map(f64::to_string).collect();
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn dataset_csv(d: &Dataset) -> String {
    csv_string(&d.channels, &d.times, &d.values)
}

/// Write via a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
