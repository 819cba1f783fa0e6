//! Protocol 1: sensors encrypt their readings and the aggregator fuses them.
//!
//! Per step, every sensor sends `⟦y_i⟧` and `R_i` to the aggregator, which
//! runs the time and measurement updates on ciphertexts and sends the
//! encrypted estimate with its covariance to the query node. The query
//! decrypts it and, unless running in literal mode, sends back a fresh
//! encryption at the base exponent so exponents do not grow across steps.

use crate::coins::{CoinStream, Purpose};
use crate::harness::bus::{Envelope, MessageBus};
use crate::harness::scenario::Scenario;
use crate::kalman::{self, parallel_gains, Belief, EncBelief, SensorModel, SystemModel, UpdateGains};
use crate::matlib::{enc_vec_add, enc_vec_sub, mat_enc_mul, EncVector, Matrix, Vector};
use crate::phe::{PrivateKey, PublicKey};
use crate::privacy::transcript::{PartyId, Source, Subject, Transcript, Value};
use crate::run::{self, Clock, ProtocolError, ProtocolKind, RunResult};
use crate::wire;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    InitEstimate { x: EncVector, p: Matrix },
    SensorReading { y: EncVector, r: Matrix },
    Estimate { x: EncVector, p: Matrix },
    /// The query's re-encryption of the estimate at the base exponent.
    Refresh { x: EncVector },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::InitEstimate { .. } => "init-estimate",
            Message::SensorReading { .. } => "sensor-reading",
            Message::Estimate { .. } => "estimate",
            Message::Refresh { .. } => "refresh",
        }
    }

    pub fn bytes(&self) -> usize {
        match self {
            Message::InitEstimate { x, p } | Message::Estimate { x, p } => {
                wire::encode_enc_vector(x).len() + run::matrix_bytes(p)
            }
            Message::SensorReading { y, r } => wire::encode_enc_vector(y).len() + run::matrix_bytes(r),
            Message::Refresh { x } => wire::encode_enc_vector(x).len(),
        }
    }
}

type Bus = MessageBus<Message>;

fn send(bus: &mut Bus, from: PartyId, to: PartyId, payload: Message) -> Result<(), ProtocolError> {
    let kind = payload.kind();
    let bytes = payload.bytes();
    let step = bus.step();
    bus.send(
        Envelope {
            from,
            to,
            step,
            payload,
            enveloped: true,
            bytes,
        },
        kind,
    )?;
    Ok(())
}

/// Re-encrypts a decrypted estimate at the base exponent.
pub fn query_refresh(
    pk: &PublicKey,
    estimate: &Vector,
    frac_bits: u32,
    coins: &mut CoinStream,
) -> Result<Message, ProtocolError> {
    Ok(Message::Refresh {
        x: EncVector::encrypt(pk, estimate, frac_bits, coins)?,
    })
}

struct Query {
    pk: PublicKey,
    sk: PrivateKey,
    coins: CoinStream,
    transcript: Transcript,
    clock: Clock,
    frac_bits: u32,
    refresh: bool,
    outputs: Vec<Belief>,
}

impl Query {
    fn setup(&mut self, scenario: &Scenario, bus: &mut Bus) -> Result<(), ProtocolError> {
        let start = std::time::Instant::now();
        let t = &mut self.transcript;
        t.record(0, Source::Input, Subject::PublicKey, Value::PublicKey(self.pk.clone()));
        t.record(0, Source::Input, Subject::PrivateKey, Value::PrivateKey(self.sk.clone()));
        t.record(0, Source::Input, Subject::InitialEstimate, Value::Real(scenario.init.x.clone()));
        t.record(0, Source::Input, Subject::InitialCov, Value::Matrix(scenario.init.p.clone()));
        run::record_public_model(t, scenario, &[]);
        let x = EncVector::encrypt(&self.pk, &scenario.init.x, self.frac_bits, &mut self.coins)?;
        t.record_coins(0, Purpose::Encryption, self.coins.drain_log());
        let to = Source::Sent {
            to: PartyId::Aggregator,
            enveloped: true,
        };
        t.record(0, to, Subject::InitialEstimate, Value::Cipher(x.clone()));
        t.record(0, to, Subject::InitialCov, Value::Matrix(scenario.init.p.clone()));
        self.clock.add(0, start.elapsed().as_secs_f64() * 1e3);
        send(
            bus,
            PartyId::Query,
            PartyId::Aggregator,
            Message::InitEstimate {
                x,
                p: scenario.init.p.clone(),
            },
        )
    }

    fn step(&mut self, k: usize, bus: &mut Bus) -> Result<(), ProtocolError> {
        let env = bus.recv(PartyId::Query).ok_or(ProtocolError::Unexpected {
            party: PartyId::Query,
            expected: "an estimate",
            step: k,
        })?;
        let start = std::time::Instant::now();
        let Message::Estimate { x, p } = env.payload else {
            return Err(ProtocolError::Unexpected {
                party: PartyId::Query,
                expected: "an estimate",
                step: k,
            });
        };
        let from = Source::Received {
            from: env.from,
            enveloped: env.enveloped,
        };
        let t = &mut self.transcript;
        t.record(k, from, Subject::Estimate, Value::Cipher(x.clone()));
        t.record(k, from, Subject::EstimateCov, Value::Matrix(p.clone()));
        let estimate = x.decrypt(&self.sk)?;
        t.record(k, Source::Output, Subject::Estimate, Value::Real(estimate.clone()));
        t.record(k, Source::Output, Subject::EstimateCov, Value::Matrix(p.clone()));
        let reply = if self.refresh {
            let msg = query_refresh(&self.pk, &estimate, self.frac_bits, &mut self.coins)?;
            t.record_coins(k, Purpose::Encryption, self.coins.drain_log());
            if let Message::Refresh { x } = &msg {
                t.record(
                    k,
                    Source::Sent {
                        to: PartyId::Aggregator,
                        enveloped: true,
                    },
                    Subject::Estimate,
                    Value::Cipher(x.clone()),
                );
            }
            Some(msg)
        } else {
            None
        };
        self.outputs.push(Belief { x: estimate, p });
        self.clock.add(k, start.elapsed().as_secs_f64() * 1e3);
        if let Some(msg) = reply {
            send(bus, PartyId::Query, PartyId::Aggregator, msg)?;
        }
        Ok(())
    }
}

struct Sensor {
    index: usize,
    model: SensorModel,
    pk: PublicKey,
    coins: CoinStream,
    transcript: Transcript,
    clock: Clock,
    frac_bits: u32,
}

impl Sensor {
    fn party(&self) -> PartyId {
        PartyId::Sensor(self.index)
    }

    fn setup(&mut self, scenario: &Scenario) {
        let i = self.index;
        let t = &mut self.transcript;
        t.record(0, Source::Input, Subject::PublicKey, Value::PublicKey(self.pk.clone()));
        t.record(0, Source::Input, Subject::ObservationModel(i), Value::Matrix(self.model.h.clone()));
        t.record(0, Source::Input, Subject::MeasurementCov(i), Value::Matrix(self.model.r.clone()));
        if !scenario.visibility.private_hr {
            run::record_sensor_models(t, scenario, &[i]);
        }
    }

    fn step(&mut self, k: usize, y: &Vector) -> Result<Envelope<Message>, ProtocolError> {
        let start = std::time::Instant::now();
        let i = self.index;
        let t = &mut self.transcript;
        t.record(k, Source::Input, Subject::Measurement(i), Value::Real(y.clone()));
        let enc = EncVector::encrypt(&self.pk, y, self.frac_bits, &mut self.coins)?;
        t.record_coins(k, Purpose::Encryption, self.coins.drain_log());
        let to = Source::Sent {
            to: PartyId::Aggregator,
            enveloped: true,
        };
        t.record(k, to, Subject::Measurement(i), Value::Cipher(enc.clone()));
        t.record(k, to, Subject::MeasurementCov(i), Value::Matrix(self.model.r.clone()));
        let payload = Message::SensorReading {
            y: enc,
            r: self.model.r.clone(),
        };
        self.clock.add(k, start.elapsed().as_secs_f64() * 1e3);
        Ok(Envelope {
            from: PartyId::Sensor(i),
            to: PartyId::Aggregator,
            step: k,
            bytes: payload.bytes(),
            payload,
            enveloped: true,
        })
    }
}

struct Aggregator {
    pk: PublicKey,
    model: SystemModel,
    belief: Option<EncBelief>,
    transcript: Transcript,
    clock: Clock,
    frac_bits: u32,
    gain_cache: bool,
    cached: Option<(Matrix, Matrix, UpdateGains)>,
}

impl Aggregator {
    fn setup(&mut self, bus: &mut Bus) -> Result<(), ProtocolError> {
        let start = std::time::Instant::now();
        let t = &mut self.transcript;
        t.record(0, Source::Input, Subject::PublicKey, Value::PublicKey(self.pk.clone()));
        t.record(0, Source::Input, Subject::ProcessModel, Value::Matrix(self.model.f.clone()));
        t.record(0, Source::Input, Subject::ProcessNoise, Value::Matrix(self.model.q.clone()));
        for (i, s) in self.model.sensors.iter().enumerate() {
            t.record(0, Source::Input, Subject::ObservationModel(i), Value::Matrix(s.h.clone()));
        }
        let env = bus.recv(PartyId::Aggregator).ok_or(ProtocolError::Unexpected {
            party: PartyId::Aggregator,
            expected: "the initial estimate",
            step: 0,
        })?;
        let Message::InitEstimate { x, p } = env.payload else {
            return Err(ProtocolError::Unexpected {
                party: PartyId::Aggregator,
                expected: "the initial estimate",
                step: 0,
            });
        };
        let from = Source::Received {
            from: env.from,
            enveloped: env.enveloped,
        };
        t.record(0, from, Subject::InitialEstimate, Value::Cipher(x.clone()));
        t.record(0, from, Subject::InitialCov, Value::Matrix(p.clone()));
        self.belief = Some(EncBelief { x, p });
        self.clock.add(0, start.elapsed().as_secs_f64() * 1e3);
        Ok(())
    }

    fn step(&mut self, k: usize, bus: &mut Bus) -> Result<(), ProtocolError> {
        let inbox = bus.drain(PartyId::Aggregator);
        let start = std::time::Instant::now();
        let mut readings: Vec<Option<EncVector>> = vec![None; self.model.sensor_count()];
        let mut model = self.model.clone();
        for env in inbox {
            let (PartyId::Sensor(i), Message::SensorReading { y, r }) = (env.from, env.payload) else {
                return Err(ProtocolError::Unexpected {
                    party: PartyId::Aggregator,
                    expected: "sensor readings",
                    step: k,
                });
            };
            let from = Source::Received {
                from: env.from,
                enveloped: env.enveloped,
            };
            self.transcript.record(k, from, Subject::Measurement(i), Value::Cipher(y.clone()));
            self.transcript.record(k, from, Subject::MeasurementCov(i), Value::Matrix(r.clone()));
            model.sensors[i].r = r;
            readings[i] = Some(y);
        }
        let stacked = kalman::stack(&model, &readings)?;
        let belief = self.belief.take().expect("set up before the first step");
        let prior = kalman::time_update_enc(&self.pk, &model, &belief, self.frac_bits)?;
        let gains = match &self.cached {
            Some((p, r, g)) if self.gain_cache && *p == prior.p && *r == stacked.r => g.clone(),
            _ => parallel_gains(&prior.p, &stacked.h, &stacked.r, &stacked.block_sizes)?,
        };
        let predicted = mat_enc_mul(&self.pk, &stacked.h, &prior.x, self.frac_bits)?;
        let innovation = enc_vec_sub(&self.pk, &stacked.y, &predicted)?;
        let correction = mat_enc_mul(&self.pk, &gains.gain, &innovation, self.frac_bits)?;
        let x = enc_vec_add(&self.pk, &prior.x, &correction)?;

        let t = &mut self.transcript;
        t.record(k, Source::Computed, Subject::PriorEstimate, Value::Cipher(prior.x.clone()));
        t.record(k, Source::Computed, Subject::PriorCov, Value::Matrix(prior.p.clone()));
        for (i, g) in gains.per_sensor.iter().enumerate() {
            t.record(k, Source::Computed, Subject::Gain(i), Value::Matrix(g.clone()));
        }
        t.record(k, Source::Computed, Subject::Estimate, Value::Cipher(x.clone()));
        t.record(k, Source::Computed, Subject::EstimateCov, Value::Matrix(gains.p.clone()));
        let to = Source::Sent {
            to: PartyId::Query,
            enveloped: true,
        };
        t.record(k, to, Subject::Estimate, Value::Cipher(x.clone()));
        t.record(k, to, Subject::EstimateCov, Value::Matrix(gains.p.clone()));
        let p = gains.p.clone();
        if self.gain_cache {
            self.cached = Some((prior.p, stacked.r, gains));
        }
        self.belief = Some(EncBelief { x: x.clone(), p: p.clone() });
        self.clock.add(k, start.elapsed().as_secs_f64() * 1e3);
        send(bus, PartyId::Aggregator, PartyId::Query, Message::Estimate { x, p })
    }

    fn take_refresh(&mut self, k: usize, bus: &mut Bus) -> Result<(), ProtocolError> {
        let env = bus.recv(PartyId::Aggregator).ok_or(ProtocolError::Unexpected {
            party: PartyId::Aggregator,
            expected: "a refresh",
            step: k,
        })?;
        let start = std::time::Instant::now();
        let Message::Refresh { x } = env.payload else {
            return Err(ProtocolError::Unexpected {
                party: PartyId::Aggregator,
                expected: "a refresh",
                step: k,
            });
        };
        self.transcript.record(
            k,
            Source::Received {
                from: env.from,
                enveloped: env.enveloped,
            },
            Subject::Estimate,
            Value::Cipher(x.clone()),
        );
        if let Some(b) = self.belief.as_mut() {
            b.x = x;
        }
        self.clock.add(k, start.elapsed().as_secs_f64() * 1e3);
        Ok(())
    }
}

pub fn run_protocol1(scenario: &Scenario) -> Result<RunResult, ProtocolError> {
    if scenario.sensor_count() < 2 {
        return Err(ProtocolError::Setup("protocol 1 needs at least two sensors".into()));
    }
    let truth = run::prepare_data(scenario)?;
    let (pk, sk) = run::keys_for(scenario.key_bits, scenario.seeds.crypto)?;
    let f = scenario.frac_bits;
    let crypto = scenario.seeds.crypto;
    let options = scenario.options;

    let mut query = Query {
        pk: pk.clone(),
        sk,
        coins: CoinStream::for_party(crypto, Purpose::Encryption, 0).with_log(),
        transcript: Transcript::new(PartyId::Query),
        clock: Clock::default(),
        frac_bits: f,
        refresh: options.refresh,
        outputs: Vec::new(),
    };
    let mut aggregator = Aggregator {
        pk: pk.clone(),
        model: scenario.model.clone(),
        belief: None,
        transcript: Transcript::new(PartyId::Aggregator),
        clock: Clock::default(),
        frac_bits: f,
        gain_cache: options.gain_cache,
        cached: None,
    };
    let mut sensors: Vec<Sensor> = scenario
        .model
        .sensors
        .iter()
        .enumerate()
        .map(|(i, model)| Sensor {
            index: i,
            model: model.clone(),
            pk: pk.clone(),
            coins: CoinStream::for_party(crypto, Purpose::Encryption, i as u32 + 1).with_log(),
            transcript: Transcript::new(PartyId::Sensor(i)),
            clock: Clock::default(),
            frac_bits: f,
        })
        .collect();

    let mut bus = Bus::new();
    query.setup(scenario, &mut bus)?;
    for s in &mut sensors {
        s.setup(scenario);
    }
    aggregator.setup(&mut bus)?;
    bus.end_step()?;

    for k in 1..=scenario.steps {
        let ys = &truth.measurements[k - 1];
        let envelopes: Vec<Envelope<Message>> = if options.parallel {
            std::thread::scope(|scope| {
                let handles: Vec<_> = sensors
                    .iter_mut()
                    .zip(ys)
                    .map(|(s, y)| scope.spawn(move || s.step(k, y)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("sensor thread"))
                    .collect::<Result<_, _>>()
            })?
        } else {
            sensors
                .iter_mut()
                .zip(ys)
                .map(|(s, y)| s.step(k, y))
                .collect::<Result<_, _>>()?
        };
        for env in envelopes {
            let kind = env.payload.kind();
            bus.send(env, kind)?;
        }
        aggregator.step(k, &mut bus)?;
        query.step(k, &mut bus)?;
        if options.refresh {
            aggregator.take_refresh(k, &mut bus)?;
        }
        bus.end_step()?;
    }

    let steps = scenario.steps;
    let reference = kalman::reference_parallel(&scenario.model, &scenario.init, &truth.measurements)?;
    let mut timings = vec![
        query.clock.finish(PartyId::Query, steps),
        aggregator.clock.finish(PartyId::Aggregator, steps),
    ];
    let mut transcripts = vec![query.transcript, aggregator.transcript];
    for s in sensors {
        let party = s.party();
        timings.push(s.clock.finish(party, steps));
        transcripts.push(s.transcript);
    }
    Ok(RunResult {
        protocol: ProtocolKind::One,
        scenario: scenario.clone(),
        estimates: query.outputs,
        reference,
        truth,
        transcripts,
        timings,
        deliveries: bus.into_log(),
        public_key: pk,
    })
}
