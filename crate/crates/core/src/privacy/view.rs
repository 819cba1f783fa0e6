//! Coalition views and their simulation.
//!
//! A view is what the coalition's members recorded during a run. The
//! simulator rebuilds a view of the same shape from what the coalition is
//! entitled to: its own inputs and outputs plus public parameters. Every
//! ciphertext becomes a fresh encryption of an unrelated value and every coin
//! a fresh draw; covariances and gains are recomputed from the public model.

use std::collections::HashMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::coins::{CoinStream, Purpose};
use crate::encoding;
use crate::kalman::{self, KalmanError, SensorModel, SystemModel};
use crate::matlib::{EncVector, Matrix, Vector};
use crate::phe::PublicKey;
use crate::privacy::coalition::{CoalitionError, CoalitionSpec};
use crate::privacy::transcript::{Entry, PartyId, Shape, Source, Subject, Transcript, Value};
use crate::run::{ProtocolKind, RunResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionView {
    pub coalition: CoalitionSpec,
    pub protocol: ProtocolKind,
    /// Sensor indices per group; one group per sensor in Protocol 1.
    pub groups: Vec<Vec<usize>>,
    /// Member transcripts in canonical party order.
    pub transcripts: Vec<Transcript>,
}

impl CoalitionView {
    pub fn entries(&self) -> impl Iterator<Item = (PartyId, &Entry)> {
        self.transcripts
            .iter()
            .flat_map(|t| t.entries.iter().map(move |e| (t.party, e)))
    }

    pub fn party(&self, party: PartyId) -> Option<&Transcript> {
        self.transcripts.iter().find(|t| t.party == party)
    }

    /// First plaintext vector any member recorded for `(step, subject)`.
    pub fn real(&self, step: usize, subject: Subject) -> Option<&Vector> {
        self.transcripts.iter().find_map(|t| t.real(step, subject))
    }

    /// First plaintext matrix any member recorded for `(step, subject)`.
    pub fn matrix(&self, step: usize, subject: Subject) -> Option<&Matrix> {
        self.transcripts.iter().find_map(|t| t.matrix(step, subject))
    }

    /// Sensors whose readings the coalition holds in the clear by right.
    pub fn member_sensors(&self) -> Vec<usize> {
        match self.protocol {
            ProtocolKind::One => self.coalition.members.clone(),
            ProtocolKind::Two => self
                .coalition
                .members
                .iter()
                .flat_map(|&j| self.groups.get(j).cloned().unwrap_or_default())
                .collect(),
        }
    }

    /// Field-by-field shapes, for comparing a simulated view with a real one.
    pub fn shapes(&self) -> Vec<(PartyId, usize, Source, Subject, Shape)> {
        self.entries()
            .map(|(p, e)| (p, e.step, e.source, e.subject, e.value.shape()))
            .collect()
    }
}

fn units(run: &RunResult) -> usize {
    match run.protocol {
        ProtocolKind::One => run.scenario.sensor_count(),
        ProtocolKind::Two => run.scenario.groups_or_singletons().len(),
    }
}

/// Pools the transcripts of the coalition's members.
pub fn extract_view(run: &RunResult, coalition: &CoalitionSpec) -> Result<CoalitionView, CoalitionError> {
    coalition.validate(units(run))?;
    let transcripts = coalition
        .parties(run.protocol)
        .into_iter()
        .map(|p| {
            run.transcript(p).cloned().ok_or(CoalitionError::OutOfRange {
                member: 0,
                units: units(run),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(CoalitionView {
        coalition: coalition.clone(),
        protocol: run.protocol,
        groups: match run.protocol {
            ProtocolKind::One => (0..run.scenario.sensor_count()).map(|i| vec![i]).collect(),
            ProtocolKind::Two => run.scenario.groups_or_singletons(),
        },
        transcripts,
    })
}

/// Parameters the protocols reveal to everyone: the model, the initial
/// covariance, the topology and the public key.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicInfo {
    pub protocol: ProtocolKind,
    pub model: SystemModel,
    pub groups: Vec<Vec<usize>>,
    pub init_cov: Matrix,
    pub steps: usize,
    pub public_key: PublicKey,
}

impl PublicInfo {
    pub fn from_run(run: &RunResult) -> Self {
        PublicInfo {
            protocol: run.protocol,
            model: run.scenario.model.clone(),
            groups: run.scenario.groups_or_singletons(),
            init_cov: run.scenario.init.p.clone(),
            steps: run.steps(),
            public_key: run.public_key.clone(),
        }
    }
}

/// Every covariance and gain of a run, which depend on public data only.
#[derive(Debug, Clone, Default)]
pub struct CovarianceSchedule {
    values: HashMap<(usize, Subject), Matrix>,
}

impl CovarianceSchedule {
    pub fn compute(info: &PublicInfo) -> Result<Self, KalmanError> {
        let mut values = HashMap::new();
        values.insert((0, Subject::InitialCov), info.init_cov.clone());
        let model = &info.model;
        let mut p = info.init_cov.clone();
        match info.protocol {
            ProtocolKind::One => {
                let zeros: Vec<Option<Vector>> = model.sensors.iter().map(|s| Some(Vector::zeros(s.h.nrows()))).collect();
                let st = kalman::stack(model, &zeros)?;
                for k in 1..=info.steps {
                    let prior = kalman::predict_covariance(model, &p);
                    let gains = kalman::parallel_gains(&prior, &st.h, &st.r, &st.block_sizes)?;
                    for (i, g) in gains.per_sensor.iter().enumerate() {
                        values.insert((k, Subject::Gain(i)), g.clone());
                    }
                    values.insert((k, Subject::PriorCov), prior);
                    values.insert((k, Subject::EstimateCov), gains.p.clone());
                    p = gains.p;
                }
            }
            ProtocolKind::Two => {
                for k in 1..=info.steps {
                    let mut group_covs = Vec::with_capacity(info.groups.len());
                    for (j, members) in info.groups.iter().enumerate() {
                        let sensors: Vec<&SensorModel> = members.iter().map(|&i| &model.sensors[i]).collect();
                        let (pg, weighted) = kalman::group_covariance(&p, &sensors)?;
                        for (&i, w) in members.iter().zip(weighted) {
                            values.insert((k, Subject::Gain(i)), &pg * w);
                        }
                        values.insert((k, Subject::GroupPriorCov(j)), pg.clone());
                        group_covs.push(pg);
                    }
                    let refs: Vec<&Matrix> = group_covs.iter().collect();
                    let (fused, _) = kalman::diffusion_covariance(&refs)?;
                    let next = kalman::predict_covariance(model, &fused);
                    values.insert((k, Subject::PriorCov), fused);
                    values.insert((k, Subject::EstimateCov), next.clone());
                    p = next;
                }
            }
        }
        Ok(CovarianceSchedule { values })
    }

    pub fn get(&self, step: usize, subject: Subject) -> Option<&Matrix> {
        self.values.get(&(step, subject))
    }
}

/// Range of the stand-in plaintexts behind simulated ciphertexts.
pub const SIMULATED_RANGE: f64 = 1e3;

/// Builds a synthetic view shaped like `real` without using its secrets.
///
/// `real` supplies the skeleton (which fields exist, at which step, with
/// which exponent) and the coalition's own inputs and outputs. Ciphertexts,
/// coins, covariances and gains in it are never read.
pub fn simulate_view(real: &CoalitionView, info: &PublicInfo, seed: u64) -> Result<CoalitionView, KalmanError> {
    let schedule = CovarianceSchedule::compute(info)?;
    let pk = &info.public_key;
    let mut coins = CoinStream::new(seed, Purpose::Simulator);
    let mut out = real.clone();
    for t in &mut out.transcripts {
        for e in &mut t.entries {
            e.value = match &e.value {
                Value::Cipher(c) => Value::Cipher(fake_ciphertexts(pk, c, &mut coins)?),
                Value::Draws(d) => Value::Draws(d.iter().map(|_| fresh_draw(pk, &mut coins)).collect()),
                Value::Matrix(m) => match schedule.get(e.step, e.subject) {
                    Some(recomputed) if is_derived(e.subject) => Value::Matrix(recomputed.clone()),
                    _ => Value::Matrix(m.clone()),
                },
                other => other.clone(),
            };
        }
    }
    Ok(out)
}

fn is_derived(subject: Subject) -> bool {
    matches!(
        subject,
        Subject::InitialCov
            | Subject::PriorCov
            | Subject::EstimateCov
            | Subject::GroupPriorCov(_)
            | Subject::Gain(_)
    )
}

fn fake_ciphertexts(pk: &PublicKey, real: &EncVector, coins: &mut CoinStream) -> Result<EncVector, KalmanError> {
    real.iter()
        .map(|c| {
            let x = coins.uniform(-SIMULATED_RANGE, SIMULATED_RANGE);
            encoding::encrypt_real(pk, x, c.exponent, coins)
        })
        .collect::<Result<Vec<_>, _>>()
        .map(EncVector)
        .map_err(KalmanError::from)
}

fn fresh_draw(pk: &PublicKey, coins: &mut CoinStream) -> BigUint {
    loop {
        let r = coins.next_below(pk.n());
        if r != BigUint::ZERO {
            return r;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::Scenario;
    use crate::privacy::coalition::CoalitionKind;
    use crate::protocol1::run_protocol1;
    use crate::protocol2::run_protocol2;

    fn small(groups: Option<usize>) -> Scenario {
        Scenario::constant_velocity(3, groups, 2, 256)
    }

    #[test]
    fn sensor_view_is_that_sensors_transcript() {
        let run = run_protocol1(&small(None)).unwrap();
        let view = extract_view(&run, &CoalitionSpec::new(CoalitionKind::Sensor, vec![1]).unwrap()).unwrap();
        assert_eq!(view.transcripts.len(), 1);
        assert_eq!(&view.transcripts[0], run.transcript(PartyId::Sensor(1)).unwrap());
    }

    #[test]
    fn cloud_view_holds_other_readings_only_as_ciphertexts() {
        let run = run_protocol1(&small(None)).unwrap();
        let view = extract_view(&run, &CoalitionSpec::new(CoalitionKind::Cloud, vec![0]).unwrap()).unwrap();
        let of_sensor_1: Vec<&Entry> = view
            .entries()
            .filter(|(_, e)| e.subject == Subject::Measurement(1))
            .map(|(_, e)| e)
            .collect();
        assert!(!of_sensor_1.is_empty());
        assert!(of_sensor_1.iter().all(|e| matches!(e.value, Value::Cipher(_))));
        assert!(view.real(1, Subject::Measurement(0)).is_some());
    }

    #[test]
    fn schedule_reproduces_recorded_covariances_exactly() {
        for run in [run_protocol1(&small(None)).unwrap(), run_protocol2(&small(Some(3))).unwrap()] {
            let schedule = CovarianceSchedule::compute(&PublicInfo::from_run(&run)).unwrap();
            let mut checked = 0;
            for t in &run.transcripts {
                for e in &t.entries {
                    if let (Value::Matrix(m), true) = (&e.value, is_derived(e.subject)) {
                        assert_eq!(schedule.get(e.step, e.subject), Some(m), "{} {:?}", t.party, e.subject);
                        checked += 1;
                    }
                }
            }
            assert!(checked > 10);
        }
    }

    #[test]
    fn simulated_view_has_the_real_shape() {
        let run = run_protocol2(&small(Some(3))).unwrap();
        let coalition = CoalitionSpec::new(CoalitionKind::Query, vec![2]).unwrap();
        let real = extract_view(&run, &coalition).unwrap();
        let fake = simulate_view(&real, &PublicInfo::from_run(&run), 5).unwrap();
        assert_eq!(fake.shapes(), real.shapes());
        assert_ne!(fake, real);
    }
}
