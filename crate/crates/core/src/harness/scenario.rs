//! Scenario files.
//!
//! A scenario is a TOML document. Matrices are arrays of rows. Example:
//!
//! ```toml
//! version = 1
//! name = "scalar"
//! steps = 10
//! key_bits = 512
//!
//! [model]
//! F = [[1.0]]
//! Q = [[0.01]]
//!
//! [[sensors]]
//! H = [[1.0]]
//! R = [[0.5]]
//! group = 1          # optional; all sensors or none
//!
//! [initial]
//! x_true = [0.0]
//! x_est = [0.0]      # defaults to x_true
//! P = [[1.0]]
//!
//! [privacy]          # optional
//! private_HR = false
//! private_FQ = false
//!
//! [seeds]            # optional
//! plant = 1
//! crypto = 2
//! simulator = 3
//!
//! [data]             # optional; synthetic unless csv is given
//! csv = "measurements.csv"
//! noiseless = false
//!
//! [protocol]         # optional
//! refresh = true
//! gain_cache = false
//! parallel = false
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kalman::{Belief, KalmanError, SensorModel, SystemModel};
use crate::matlib::{self, Matrix, Vector};
use crate::phe::{DEFAULT_KEY_BITS, MIN_KEY_BITS};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

fn field(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Field {
        path: path.into(),
        message: message.into(),
    }
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "F")]
    pub f: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorFile {
    #[serde(rename = "H")]
    pub h: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialFile {
    pub x_true: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_est: Option<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: Rows,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Visibility {
    /// Withhold every `H_i`, `R_i` from parties other than its sensor and the aggregator.
    #[serde(default, rename = "private_HR")]
    pub private_hr: bool,
    /// Withhold `F` and `Q` from everyone but the aggregator.
    #[serde(default, rename = "private_FQ")]
    pub private_fq: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default = "seed_plant")]
    pub plant: u64,
    #[serde(default = "seed_crypto")]
    pub crypto: u64,
    #[serde(default = "seed_simulator")]
    pub simulator: u64,
}

fn seed_plant() -> u64 {
    1
}
fn seed_crypto() -> u64 {
    2
}
fn seed_simulator() -> u64 {
    3
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            plant: seed_plant(),
            crypto: seed_crypto(),
            simulator: seed_simulator(),
        }
    }
}

impl Seeds {
    /// All three seeds derived from one number.
    pub fn from_base(seed: u64) -> Self {
        Seeds {
            plant: seed,
            crypto: seed.wrapping_add(1),
            simulator: seed.wrapping_add(2),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub noiseless: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolOptions {
    /// Query re-encrypts the estimate at the base exponent every step (Protocol 1).
    #[serde(default = "yes")]
    pub refresh: bool,
    /// Reuse the previous gains when the prior covariance is unchanged.
    #[serde(default)]
    pub gain_cache: bool,
    /// Run sensor/group computations on worker threads.
    #[serde(default)]
    pub parallel: bool,
}

fn yes() -> bool {
    true
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            refresh: true,
            gain_cache: false,
            parallel: false,
        }
    }
}

/// On-disk form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "schema_version")]
    pub version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub steps: usize,
    #[serde(default = "default_key_bits")]
    pub key_bits: u64,
    #[serde(default = "default_frac_bits")]
    pub frac_bits: u32,
    pub model: ModelFile,
    pub sensors: Vec<SensorFile>,
    pub initial: InitialFile,
    #[serde(default)]
    pub privacy: Visibility,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub data: DataFile,
    #[serde(default)]
    pub protocol: ProtocolOptions,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}
fn default_name() -> String {
    "scenario".into()
}
fn default_key_bits() -> u64 {
    DEFAULT_KEY_BITS
}
fn default_frac_bits() -> u32 {
    crate::encoding::DEFAULT_FRAC_BITS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Synthetic { noiseless: bool },
    Csv(PathBuf),
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub model: SystemModel,
    /// Zero-based sensor indices per group; `None` for a flat topology.
    pub groups: Option<Vec<Vec<usize>>>,
    pub x0: Vector,
    pub init: Belief,
    pub steps: usize,
    pub key_bits: u64,
    pub frac_bits: u32,
    pub visibility: Visibility,
    pub seeds: Seeds,
    pub data: DataSource,
    pub options: ProtocolOptions,
}

fn matrix(path: &str, rows: &Rows) -> Result<Matrix, ScenarioError> {
    let Some(first) = rows.first() else {
        return Err(field(path, "matrix has no rows"));
    };
    let cols = first.len();
    if cols == 0 {
        return Err(field(path, "matrix has no columns"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(field(
                format!("{path}[{i}]"),
                format!("row has {} entries, expected {cols}", row.len()),
            ));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(field(format!("{path}[{i}][{j}]"), "entry is not finite"));
        }
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn rows_of(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn expect_shape(path: &str, m: &Matrix, rows: usize, cols: usize) -> Result<(), ScenarioError> {
    if m.shape() != (rows, cols) {
        return Err(field(path, format!("is {}x{}, expected {rows}x{cols}", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn symmetric(m: &Matrix) -> bool {
    matlib::max_abs(&(m - m.transpose())) <= 1e-9 * matlib::max_abs(m).max(1.0)
}

fn expect_spd(path: &str, m: &Matrix) -> Result<(), ScenarioError> {
    if !symmetric(m) || matlib::cholesky(m).is_err() {
        return Err(field(path, "must be symmetric positive-definite"));
    }
    Ok(())
}

fn vector(path: &str, v: &[f64], n: usize) -> Result<Vector, ScenarioError> {
    if v.len() != n {
        return Err(field(path, format!("has {} entries, expected {n}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(field(path, "entry is not finite"));
    }
    Ok(Vector::from_row_slice(v))
}

impl ScenarioFile {
    pub fn validate(&self) -> Result<Scenario, ScenarioError> {
        if self.version != SCHEMA_VERSION {
            return Err(field("version", format!("unsupported schema version {}", self.version)));
        }
        if self.steps == 0 {
            return Err(field("steps", "must be at least 1"));
        }
        if self.key_bits < MIN_KEY_BITS {
            return Err(field("key_bits", format!("must be at least {MIN_KEY_BITS}")));
        }
        let f = matrix("model.F", &self.model.f)?;
        let n = f.nrows();
        expect_shape("model.F", &f, n, n)?;
        let q = matrix("model.Q", &self.model.q)?;
        expect_shape("model.Q", &q, n, n)?;
        if !symmetric(&q) || matlib::min_eigenvalue(&q) < -1e-9 {
            return Err(field("model.Q", "must be symmetric positive-semidefinite"));
        }
        if self.sensors.is_empty() {
            return Err(field("sensors", "at least one sensor is required"));
        }
        let mut sensors = Vec::with_capacity(self.sensors.len());
        let mut p = None;
        for (i, s) in self.sensors.iter().enumerate() {
            let h = matrix(&format!("sensors[{i}].H"), &s.h)?;
            let p = *p.get_or_insert(h.nrows());
            expect_shape(&format!("sensors[{i}].H"), &h, p, n)?;
            let r = matrix(&format!("sensors[{i}].R"), &s.r)?;
            expect_shape(&format!("sensors[{i}].R"), &r, p, p)?;
            expect_spd(&format!("sensors[{i}].R"), &r)?;
            sensors.push(SensorModel { h, r });
        }
        let model = SystemModel { f, q, sensors };
        model.validate().map_err(|e: KalmanError| field("model", e.to_string()))?;

        let groups = self.groups()?;
        let x0 = vector("initial.x_true", &self.initial.x_true, n)?;
        let x_est = match &self.initial.x_est {
            Some(v) => vector("initial.x_est", v, n)?,
            None => x0.clone(),
        };
        let p0 = matrix("initial.P", &self.initial.p)?;
        expect_shape("initial.P", &p0, n, n)?;
        expect_spd("initial.P", &p0)?;

        let data = match &self.data.csv {
            Some(path) => {
                if self.data.noiseless {
                    return Err(field("data.noiseless", "only applies to synthetic data"));
                }
                DataSource::Csv(path.clone())
            }
            None => DataSource::Synthetic {
                noiseless: self.data.noiseless,
            },
        };
        Ok(Scenario {
            name: self.name.clone(),
            model,
            groups,
            x0,
            init: Belief { x: x_est, p: p0 },
            steps: self.steps,
            key_bits: self.key_bits,
            frac_bits: self.frac_bits,
            visibility: self.privacy,
            seeds: self.seeds,
            data,
            options: self.protocol,
        })
    }

    fn groups(&self) -> Result<Option<Vec<Vec<usize>>>, ScenarioError> {
        let tagged = self.sensors.iter().filter(|s| s.group.is_some()).count();
        if tagged == 0 {
            return Ok(None);
        }
        if tagged != self.sensors.len() {
            let i = self.sensors.iter().position(|s| s.group.is_none()).expect("some untagged");
            return Err(field(format!("sensors[{i}].group"), "either every sensor has a group or none does"));
        }
        let count = self.sensors.iter().filter_map(|s| s.group).max().unwrap_or(0);
        let mut groups = vec![Vec::new(); count];
        for (i, s) in self.sensors.iter().enumerate() {
            let g = s.group.expect("all tagged");
            if g == 0 {
                return Err(field(format!("sensors[{i}].group"), "groups are numbered from 1"));
            }
            groups[g - 1].push(i);
        }
        if let Some(j) = groups.iter().position(Vec::is_empty) {
            return Err(field("sensors", format!("group {} has no sensors", j + 1)));
        }
        Ok(Some(groups))
    }
}

impl Scenario {
    pub fn to_file(&self) -> ScenarioFile {
        let mut group_of = vec![None; self.model.sensors.len()];
        if let Some(groups) = &self.groups {
            for (j, members) in groups.iter().enumerate() {
                for &i in members {
                    group_of[i] = Some(j + 1);
                }
            }
        }
        let (csv, noiseless) = match &self.data {
            DataSource::Csv(p) => (Some(p.clone()), false),
            DataSource::Synthetic { noiseless } => (None, *noiseless),
        };
        ScenarioFile {
            version: SCHEMA_VERSION,
            name: self.name.clone(),
            steps: self.steps,
            key_bits: self.key_bits,
            frac_bits: self.frac_bits,
            model: ModelFile {
                f: rows_of(&self.model.f),
                q: rows_of(&self.model.q),
            },
            sensors: self
                .model
                .sensors
                .iter()
                .zip(group_of)
                .map(|(s, group)| SensorFile {
                    h: rows_of(&s.h),
                    r: rows_of(&s.r),
                    group,
                })
                .collect(),
            initial: InitialFile {
                x_true: self.x0.iter().copied().collect(),
                x_est: Some(self.init.x.iter().copied().collect()),
                p: rows_of(&self.init.p),
            },
            privacy: self.visibility,
            seeds: self.seeds,
            data: DataFile { csv, noiseless },
            protocol: self.options,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("scenario serializes")
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn p(&self) -> usize {
        self.model.p()
    }

    pub fn sensor_count(&self) -> usize {
        self.model.sensor_count()
    }

    /// Groups, or every sensor in its own group when the topology is flat.
    pub fn groups_or_singletons(&self) -> Vec<Vec<usize>> {
        self.groups
            .clone()
            .unwrap_or_else(|| (0..self.sensor_count()).map(|i| vec![i]).collect())
    }

    /// Resolves a relative CSV path against the scenario file's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataSource::Csv(p) = &mut self.data {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Six-state constant-velocity model observed by `sensors` position sensors.
    pub fn constant_velocity(sensors: usize, groups: Option<usize>, steps: usize, key_bits: u64) -> Scenario {
        let dt = 0.01;
        let mut f = Matrix::identity(6, 6);
        let mut q = Matrix::zeros(6, 6);
        let accel = 4.0;
        for a in 0..3 {
            f[(a, a + 3)] = dt;
            q[(a, a)] = accel * dt.powi(3) / 3.0;
            q[(a, a + 3)] = accel * dt.powi(2) / 2.0;
            q[(a + 3, a)] = accel * dt.powi(2) / 2.0;
            q[(a + 3, a + 3)] = accel * dt;
        }
        let mut h = Matrix::zeros(3, 6);
        for a in 0..3 {
            h[(a, a)] = 1.0;
        }
        let sensor_models = (0..sensors)
            .map(|i| SensorModel {
                h: h.clone(),
                r: Matrix::identity(3, 3) * (0.0004 * (1.0 + 0.5 * i as f64)),
            })
            .collect();
        let groups = groups.map(|j| (0..j).map(|g| (0..sensors).filter(|i| i % j == g).collect()).collect());
        let x0 = Vector::from_row_slice(&[0.5, -0.2, 1.0, 0.3, 0.1, -0.05]);
        Scenario {
            name: "constant-velocity".into(),
            model: SystemModel {
                f,
                q,
                sensors: sensor_models,
            },
            groups,
            x0: x0.clone(),
            init: Belief {
                x: x0,
                p: Matrix::identity(6, 6) * 0.01,
            },
            steps,
            key_bits,
            frac_bits: crate::encoding::DEFAULT_FRAC_BITS,
            visibility: Visibility::default(),
            seeds: Seeds::default(),
            data: DataSource::Synthetic { noiseless: false },
            options: ProtocolOptions::default(),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    file.validate()
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut scenario = parse_scenario(&text)?;
    scenario.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(scenario)
}
