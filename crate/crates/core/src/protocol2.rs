//! Protocol 2: sensor groups update locally, the aggregator diffuses.
//!
//! Each group's manager holds its members' readings in the clear and runs the
//! information-form update from the last global estimate. It encrypts the
//! resulting prior and sends it, with its covariance, to the aggregator. The
//! aggregator fuses the group priors by inverse-covariance weighting, runs the
//! time update, and sends the encrypted result to the query node, which
//! decrypts it and broadcasts the plaintext estimate to every group.

use crate::coins::{CoinStream, Purpose};
use crate::harness::bus::{Envelope, MessageBus};
use crate::harness::scenario::Scenario;
use crate::kalman::{self, Belief, EncBelief, KalmanError, SensorModel, SystemModel};
use crate::matlib::{EncVector, Matrix, Vector};
use crate::phe::{PrivateKey, PublicKey};
use crate::privacy::transcript::{PartyId, Source, Subject, Transcript, Value};
use crate::run::{self, Clock, ProtocolError, ProtocolKind, RunResult};
use crate::wire;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    InitPlain { x: Vector, p: Matrix },
    GroupPrior { x: EncVector, p: Matrix },
    GlobalEncrypted { x: EncVector, p: Matrix },
    GlobalPlain { x: Vector, p: Matrix },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::InitPlain { .. } => "init-plain",
            Message::GroupPrior { .. } => "group-prior",
            Message::GlobalEncrypted { .. } => "global-encrypted",
            Message::GlobalPlain { .. } => "global-plain",
        }
    }

    pub fn bytes(&self) -> usize {
        match self {
            Message::InitPlain { x, p } | Message::GlobalPlain { x, p } => 8 * x.len() + run::matrix_bytes(p),
            Message::GroupPrior { x, p } | Message::GlobalEncrypted { x, p } => {
                wire::encode_enc_vector(x).len() + run::matrix_bytes(p)
            }
        }
    }
}

type Bus = MessageBus<Message>;

fn envelope(from: PartyId, to: PartyId, step: usize, payload: Message) -> Envelope<Message> {
    Envelope {
        from,
        to,
        step,
        bytes: payload.bytes(),
        payload,
        enveloped: true,
    }
}

fn send(bus: &mut Bus, from: PartyId, to: PartyId, payload: Message) -> Result<(), ProtocolError> {
    let kind = payload.kind();
    let step = bus.step();
    bus.send(envelope(from, to, step, payload), kind)?;
    Ok(())
}

fn unexpected(party: PartyId, expected: &'static str, step: usize) -> ProtocolError {
    ProtocolError::Unexpected { party, expected, step }
}

struct Query {
    pk: PublicKey,
    sk: PrivateKey,
    groups: usize,
    transcript: Transcript,
    clock: Clock,
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
        self.broadcast(0, &scenario.init, bus, Subject::InitialEstimate, Subject::InitialCov)?;
        self.clock.add(0, start.elapsed().as_secs_f64() * 1e3);
        Ok(())
    }

    fn broadcast(
        &mut self,
        k: usize,
        b: &Belief,
        bus: &mut Bus,
        xs: Subject,
        ps: Subject,
    ) -> Result<(), ProtocolError> {
        for j in 0..self.groups {
            let to = Source::Sent {
                to: PartyId::Group(j),
                enveloped: true,
            };
            self.transcript.record(k, to, xs, Value::Real(b.x.clone()));
            self.transcript.record(k, to, ps, Value::Matrix(b.p.clone()));
            let msg = if k == 0 {
                Message::InitPlain {
                    x: b.x.clone(),
                    p: b.p.clone(),
                }
            } else {
                Message::GlobalPlain {
                    x: b.x.clone(),
                    p: b.p.clone(),
                }
            };
            send(bus, PartyId::Query, PartyId::Group(j), msg)?;
        }
        Ok(())
    }

    fn step(&mut self, k: usize, bus: &mut Bus) -> Result<(), ProtocolError> {
        let env = bus.recv(PartyId::Query).ok_or(unexpected(PartyId::Query, "the global estimate", k))?;
        let start = std::time::Instant::now();
        let Message::GlobalEncrypted { x, p } = env.payload else {
            return Err(unexpected(PartyId::Query, "the global estimate", k));
        };
        let from = Source::Received {
            from: env.from,
            enveloped: env.enveloped,
        };
        let t = &mut self.transcript;
        t.record(k, from, Subject::Estimate, Value::Cipher(x.clone()));
        t.record(k, from, Subject::EstimateCov, Value::Matrix(p.clone()));
        let estimate = Belief {
            x: x.decrypt(&self.sk)?,
            p,
        };
        t.record(k, Source::Output, Subject::Estimate, Value::Real(estimate.x.clone()));
        t.record(k, Source::Output, Subject::EstimateCov, Value::Matrix(estimate.p.clone()));
        self.broadcast(k, &estimate, bus, Subject::Estimate, Subject::EstimateCov)?;
        self.outputs.push(estimate);
        self.clock.add(k, start.elapsed().as_secs_f64() * 1e3);
        Ok(())
    }
}

struct Group {
    index: usize,
    members: Vec<usize>,
    sensors: Vec<SensorModel>,
    pk: PublicKey,
    coins: CoinStream,
    transcript: Transcript,
    clock: Clock,
    frac_bits: u32,
    current: Option<Belief>,
}

impl Group {
    fn party(&self) -> PartyId {
        PartyId::Group(self.index)
    }

    fn setup(&mut self, scenario: &Scenario) {
        let t = &mut self.transcript;
        t.record(0, Source::Input, Subject::PublicKey, Value::PublicKey(self.pk.clone()));
        for (&i, s) in self.members.iter().zip(&self.sensors) {
            t.record(0, Source::Input, Subject::ObservationModel(i), Value::Matrix(s.h.clone()));
            t.record(0, Source::Input, Subject::MeasurementCov(i), Value::Matrix(s.r.clone()));
        }
        if !scenario.visibility.private_hr {
            run::record_sensor_models(t, scenario, &self.members);
        }
    }

    /// Takes the query's broadcast that closes a step.
    fn receive(&mut self, k: usize, bus: &mut Bus) -> Result<(), ProtocolError> {
        let party = self.party();
        let env = bus.recv(party).ok_or(unexpected(party, "the global estimate", k))?;
        let start = std::time::Instant::now();
        let (x, p) = match env.payload {
            Message::InitPlain { x, p } | Message::GlobalPlain { x, p } => (x, p),
            _ => return Err(unexpected(party, "the global estimate", k)),
        };
        let (xs, ps) = if k == 0 {
            (Subject::InitialEstimate, Subject::InitialCov)
        } else {
            (Subject::Estimate, Subject::EstimateCov)
        };
        let from = Source::Received {
            from: env.from,
            enveloped: env.enveloped,
        };
        self.transcript.record(k, from, xs, Value::Real(x.clone()));
        self.transcript.record(k, from, ps, Value::Matrix(p.clone()));
        self.current = Some(Belief { x, p });
        self.clock.add(k, start.elapsed().as_secs_f64() * 1e3);
        Ok(())
    }

    fn step(&mut self, k: usize, ys: &[Vector]) -> Result<Envelope<Message>, ProtocolError> {
        let start = std::time::Instant::now();
        let j = self.index;
        let prev = self.current.as_ref().expect("initialized before the first step");
        let t = &mut self.transcript;
        let mut inputs = Vec::with_capacity(self.members.len());
        for (&i, s) in self.members.iter().zip(&self.sensors) {
            t.record(k, Source::Input, Subject::Measurement(i), Value::Real(ys[i].clone()));
            inputs.push((s, &ys[i]));
        }
        let (prior, gains) = kalman::group_measurement_update(prev, &inputs)?;
        t.record(k, Source::Computed, Subject::GroupPriorCov(j), Value::Matrix(prior.p.clone()));
        for (&i, g) in self.members.iter().zip(&gains) {
            t.record(k, Source::Computed, Subject::Gain(i), Value::Matrix(g.clone()));
        }
        t.record(k, Source::Computed, Subject::GroupPrior(j), Value::Real(prior.x.clone()));
        let x = EncVector::encrypt(&self.pk, &prior.x, self.frac_bits, &mut self.coins)?;
        t.record_coins(k, Purpose::Encryption, self.coins.drain_log());
        let to = Source::Sent {
            to: PartyId::Aggregator,
            enveloped: true,
        };
        t.record(k, to, Subject::GroupPrior(j), Value::Cipher(x.clone()));
        t.record(k, to, Subject::GroupPriorCov(j), Value::Matrix(prior.p.clone()));
        self.clock.add(k, start.elapsed().as_secs_f64() * 1e3);
        Ok(envelope(
            self.party(),
            PartyId::Aggregator,
            k,
            Message::GroupPrior { x, p: prior.p },
        ))
    }
}

struct Aggregator {
    pk: PublicKey,
    model: SystemModel,
    groups: usize,
    transcript: Transcript,
    clock: Clock,
    frac_bits: u32,
}

impl Aggregator {
    fn setup(&mut self) {
        let t = &mut self.transcript;
        t.record(0, Source::Input, Subject::PublicKey, Value::PublicKey(self.pk.clone()));
        t.record(0, Source::Input, Subject::ProcessModel, Value::Matrix(self.model.f.clone()));
        t.record(0, Source::Input, Subject::ProcessNoise, Value::Matrix(self.model.q.clone()));
    }

    fn step(&mut self, k: usize, bus: &mut Bus) -> Result<(), ProtocolError> {
        let inbox = bus.drain(PartyId::Aggregator);
        let start = std::time::Instant::now();
        let mut priors: Vec<Option<EncBelief>> = vec![None; self.groups];
        for env in inbox {
            let (PartyId::Group(j), Message::GroupPrior { x, p }) = (env.from, env.payload) else {
                return Err(unexpected(PartyId::Aggregator, "group priors", k));
            };
            let from = Source::Received {
                from: env.from,
                enveloped: env.enveloped,
            };
            self.transcript.record(k, from, Subject::GroupPrior(j), Value::Cipher(x.clone()));
            self.transcript.record(k, from, Subject::GroupPriorCov(j), Value::Matrix(p.clone()));
            priors[j] = Some(EncBelief { x, p });
        }
        let missing: Vec<usize> = (0..self.groups).filter(|&j| priors[j].is_none()).collect();
        if !missing.is_empty() {
            return Err(KalmanError::IncompleteRound { missing }.into());
        }
        let priors: Vec<EncBelief> = priors.into_iter().flatten().collect();
        let fused = kalman::diffusion_update_enc(&self.pk, &priors, self.frac_bits)?;
        let next = kalman::time_update_enc(&self.pk, &self.model, &fused, self.frac_bits)?;
        let t = &mut self.transcript;
        t.record(k, Source::Computed, Subject::PriorEstimate, Value::Cipher(fused.x.clone()));
        t.record(k, Source::Computed, Subject::PriorCov, Value::Matrix(fused.p.clone()));
        t.record(k, Source::Computed, Subject::Estimate, Value::Cipher(next.x.clone()));
        t.record(k, Source::Computed, Subject::EstimateCov, Value::Matrix(next.p.clone()));
        let to = Source::Sent {
            to: PartyId::Query,
            enveloped: true,
        };
        t.record(k, to, Subject::Estimate, Value::Cipher(next.x.clone()));
        t.record(k, to, Subject::EstimateCov, Value::Matrix(next.p.clone()));
        self.clock.add(k, start.elapsed().as_secs_f64() * 1e3);
        send(
            bus,
            PartyId::Aggregator,
            PartyId::Query,
            Message::GlobalEncrypted { x: next.x, p: next.p },
        )
    }
}

/// Runs Protocol 2. A scenario without groups puts every sensor in its own group.
pub fn run_protocol2(scenario: &Scenario) -> Result<RunResult, ProtocolError> {
    let group_members = scenario.groups_or_singletons();
    let truth = run::prepare_data(scenario)?;
    let (pk, sk) = run::keys_for(scenario.key_bits, scenario.seeds.crypto)?;
    let f = scenario.frac_bits;
    let crypto = scenario.seeds.crypto;
    let j_count = group_members.len();

    let mut query = Query {
        pk: pk.clone(),
        sk,
        groups: j_count,
        transcript: Transcript::new(PartyId::Query),
        clock: Clock::default(),
        outputs: Vec::new(),
    };
    let mut aggregator = Aggregator {
        pk: pk.clone(),
        model: scenario.model.clone(),
        groups: j_count,
        transcript: Transcript::new(PartyId::Aggregator),
        clock: Clock::default(),
        frac_bits: f,
    };
    let mut groups: Vec<Group> = group_members
        .iter()
        .enumerate()
        .map(|(j, members)| Group {
            index: j,
            members: members.clone(),
            sensors: members.iter().map(|&i| scenario.model.sensors[i].clone()).collect(),
            pk: pk.clone(),
            coins: CoinStream::for_party(crypto, Purpose::Encryption, j as u32 + 1).with_log(),
            transcript: Transcript::new(PartyId::Group(j)),
            clock: Clock::default(),
            frac_bits: f,
            current: None,
        })
        .collect();

    let mut bus = Bus::new();
    query.setup(scenario, &mut bus)?;
    aggregator.setup();
    for g in &mut groups {
        g.setup(scenario);
        g.receive(0, &mut bus)?;
    }
    bus.end_step()?;

    for k in 1..=scenario.steps {
        let ys = &truth.measurements[k - 1];
        let envelopes: Vec<Envelope<Message>> = if scenario.options.parallel {
            std::thread::scope(|scope| {
                let handles: Vec<_> = groups.iter_mut().map(|g| scope.spawn(move || g.step(k, ys))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("group thread"))
                    .collect::<Result<_, _>>()
            })?
        } else {
            groups.iter_mut().map(|g| g.step(k, ys)).collect::<Result<_, _>>()?
        };
        for env in envelopes {
            let kind = env.payload.kind();
            bus.send(env, kind)?;
        }
        aggregator.step(k, &mut bus)?;
        query.step(k, &mut bus)?;
        for g in &mut groups {
            g.receive(k, &mut bus)?;
        }
        bus.end_step()?;
    }

    let steps = scenario.steps;
    let reference = kalman::reference_diffusion(&scenario.model, &group_members, &scenario.init, &truth.measurements)?;
    let mut timings = vec![
        query.clock.finish(PartyId::Query, steps),
        aggregator.clock.finish(PartyId::Aggregator, steps),
    ];
    let mut transcripts = vec![query.transcript, aggregator.transcript];
    for g in groups {
        let party = g.party();
        timings.push(g.clock.finish(party, steps));
        transcripts.push(g.transcript);
    }
    Ok(RunResult {
        protocol: ProtocolKind::Two,
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
