//! Types shared by the two protocol runners.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coins::{CoinStream, Purpose};
use crate::encoding::EncodingError;
use crate::harness::bus::{BusError, Delivery};
use crate::harness::scenario::{DataSource, Scenario};
use crate::harness::trajectory::{self, CsvError};
use crate::kalman::{self, Belief, KalmanError, SystemModel, Trajectory};
use crate::matlib::{LinalgError, Matrix, Vector};
use crate::phe::{self, PheError, PrivateKey, PublicKey};
use crate::privacy::transcript::{PartyId, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolKind {
    /// Flat sensors, encrypted fusion at the aggregator.
    One,
    /// Sensor groups with plaintext local updates and encrypted diffusion.
    Two,
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProtocolKind::One => write!(f, "protocol 1"),
            ProtocolKind::Two => write!(f, "protocol 2"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid setup: {0}")]
    Setup(String),
    #[error("measurement data: {0}")]
    Data(#[from] CsvError),
    #[error(transparent)]
    Kalman(#[from] KalmanError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Phe(#[from] PheError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{party} expected {expected} at step {step}")]
    Unexpected {
        party: PartyId,
        expected: &'static str,
        step: usize,
    },
}

impl ProtocolError {
    /// True when the failure is in the inputs rather than the computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, ProtocolError::Setup(_) | ProtocolError::Data(_))
    }
}

/// Wall-clock milliseconds one party spent in each step. Entry 0 is setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyTiming {
    pub party: PartyId,
    pub ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub protocol: ProtocolKind,
    pub scenario: Scenario,
    /// What the query node output after each step.
    pub estimates: Vec<Belief>,
    /// The plaintext filter the protocol is meant to reproduce.
    pub reference: Vec<Belief>,
    /// `states` may be empty when the data came without ground truth.
    pub truth: Trajectory,
    pub transcripts: Vec<Transcript>,
    pub timings: Vec<PartyTiming>,
    pub deliveries: Vec<Delivery>,
    pub public_key: PublicKey,
}

impl RunResult {
    pub fn steps(&self) -> usize {
        self.estimates.len()
    }

    pub fn transcript(&self, party: PartyId) -> Option<&Transcript> {
        self.transcripts.iter().find(|t| t.party == party)
    }

    /// True state the step-`k` estimate refers to (`k` from 1).
    ///
    /// Protocol 2 ends each step with a time update, so its estimate is a
    /// prediction of the next state.
    pub fn truth_at(&self, k: usize) -> Option<&Vector> {
        match self.protocol {
            ProtocolKind::One => self.truth.states.get(k),
            ProtocolKind::Two => self.truth.states.get(k + 1),
        }
    }

    /// Largest entry-wise gap between the protocol and the plaintext reference.
    pub fn max_reference_deviation(&self) -> f64 {
        self.estimates
            .iter()
            .zip(&self.reference)
            .map(|(a, b)| (&a.x - &b.x).amax())
            .fold(0.0, f64::max)
    }

    /// The parties of the run in a fixed order: query, aggregator, then sensors or groups.
    pub fn parties(&self) -> Vec<PartyId> {
        self.transcripts.iter().map(|t| t.party).collect()
    }

    pub fn private_key(&self) -> Option<&PrivateKey> {
        use crate::privacy::transcript::{Subject, Value};
        self.transcript(PartyId::Query)?
            .entries
            .iter()
            .find(|e| e.subject == Subject::PrivateKey)
            .and_then(|e| match &e.value {
                Value::PrivateKey(sk) => Some(sk),
                _ => None,
            })
    }
}

/// Per-party stopwatch.
#[derive(Debug, Default)]
pub(crate) struct Clock {
    ms: Vec<f64>,
}

impl Clock {
    pub fn add(&mut self, step: usize, ms: f64) {
        if self.ms.len() <= step {
            self.ms.resize(step + 1, 0.0);
        }
        self.ms[step] += ms;
    }

    pub fn finish(mut self, party: PartyId, steps: usize) -> PartyTiming {
        self.ms.resize(steps + 1, 0.0);
        PartyTiming { party, ms: self.ms }
    }
}

type KeyCache = Mutex<HashMap<(u64, u64), (PublicKey, PrivateKey)>>;

/// Key pair for `(bits, seed)`, generated once per process.
pub fn keys_for(bits: u64, seed: u64) -> Result<(PublicKey, PrivateKey), PheError> {
    static CACHE: OnceLock<KeyCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(keys) = cache.lock().expect("key cache").get(&(bits, seed)) {
        return Ok(keys.clone());
    }
    let keys = phe::keygen(bits, &mut CoinStream::new(seed, Purpose::Keygen))?;
    cache.lock().expect("key cache").insert((bits, seed), keys.clone());
    Ok(keys)
}

/// Measurements and ground truth for a run.
///
/// Synthetic data simulates one step past the end so that Protocol 2's
/// final prediction has a true state to compare with.
pub fn prepare_data(scenario: &Scenario) -> Result<Trajectory, ProtocolError> {
    let steps = scenario.steps;
    match &scenario.data {
        DataSource::Synthetic { noiseless } => {
            let model = if *noiseless {
                noiseless_model(&scenario.model)
            } else {
                scenario.model.clone()
            };
            let mut coins = CoinStream::new(scenario.seeds.plant, Purpose::Noise);
            let mut traj = kalman::simulate_plant(&model, &scenario.x0, steps + 1, &mut coins)?;
            traj.measurements.truncate(steps);
            Ok(traj)
        }
        DataSource::Csv(path) => {
            let data = trajectory::load_measurements(path, scenario.sensor_count(), scenario.p(), scenario.n())?;
            if data.steps() < steps {
                return Err(ProtocolError::Setup(format!(
                    "{} has {} rows, the scenario runs {steps} steps",
                    path.display(),
                    data.steps()
                )));
            }
            let mut measurements = data.measurements;
            measurements.truncate(steps);
            let states = match data.truth {
                Some(truth) => std::iter::once(scenario.x0.clone()).chain(truth).collect(),
                None => Vec::new(),
            };
            Ok(Trajectory { states, measurements })
        }
    }
}

fn noiseless_model(model: &SystemModel) -> SystemModel {
    let mut m = model.clone();
    m.q = Matrix::zeros(m.n(), m.n());
    for s in &mut m.sensors {
        s.r = Matrix::zeros(s.r.nrows(), s.r.ncols());
    }
    m
}

/// Records the model parameters a non-aggregator party is allowed to see.
pub(crate) fn record_public_model(t: &mut Transcript, scenario: &Scenario, skip: &[usize]) {
    use crate::privacy::transcript::{Source, Subject, Value};
    if !scenario.visibility.private_fq {
        t.record(0, Source::Input, Subject::ProcessModel, Value::Matrix(scenario.model.f.clone()));
        t.record(0, Source::Input, Subject::ProcessNoise, Value::Matrix(scenario.model.q.clone()));
    }
    if !scenario.visibility.private_hr {
        record_sensor_models(t, scenario, skip);
    }
}

/// Records every sensor's public `H_i` and `R_i` except those in `skip`.
pub(crate) fn record_sensor_models(t: &mut Transcript, scenario: &Scenario, skip: &[usize]) {
    use crate::privacy::transcript::{Source, Subject, Value};
    for (i, s) in scenario.model.sensors.iter().enumerate() {
        if !skip.contains(&i) {
            t.record(0, Source::Input, Subject::ObservationModel(i), Value::Matrix(s.h.clone()));
            t.record(0, Source::Input, Subject::MeasurementCov(i), Value::Matrix(s.r.clone()));
        }
    }
}

/// Rough wire size of a plaintext matrix.
pub(crate) fn matrix_bytes(m: &Matrix) -> usize {
    8 * m.len()
}
