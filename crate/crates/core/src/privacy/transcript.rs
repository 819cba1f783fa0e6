//! Append-only records of what each party saw during a run.

use std::fmt;
use std::io::Write;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::coins::Purpose;
use crate::matlib::{EncVector, Matrix, Vector};
use crate::phe::{PrivateKey, PublicKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PartyId {
    Query,
    Aggregator,
    /// Zero-based sensor index.
    Sensor(usize),
    /// Zero-based group index.
    Group(usize),
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Query => write!(f, "query"),
            PartyId::Aggregator => write!(f, "aggregator"),
            PartyId::Sensor(i) => write!(f, "sensor-{}", i + 1),
            PartyId::Group(j) => write!(f, "group-{}", j + 1),
        }
    }
}

/// What a recorded value is about. The structural privacy scans key on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subject {
    Measurement(usize),
    MeasurementCov(usize),
    ObservationModel(usize),
    ProcessModel,
    ProcessNoise,
    InitialEstimate,
    InitialCov,
    /// Predicted estimate at the aggregator.
    PriorEstimate,
    PriorCov,
    /// Global estimate after a full step.
    Estimate,
    EstimateCov,
    Gain(usize),
    GroupPrior(usize),
    GroupPriorCov(usize),
    PublicKey,
    PrivateKey,
    Coins(Purpose),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Real(Vector),
    Matrix(Matrix),
    Cipher(EncVector),
    PublicKey(PublicKey),
    PrivateKey(PrivateKey),
    Draws(Vec<BigUint>),
}

/// Type and dimensions of a [`Value`], without its content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Real(usize),
    Matrix(usize, usize),
    Cipher(usize),
    PublicKey,
    PrivateKey,
    Draws(usize),
}

impl Value {
    pub fn shape(&self) -> Shape {
        match self {
            Value::Real(v) => Shape::Real(v.len()),
            Value::Matrix(m) => Shape::Matrix(m.nrows(), m.ncols()),
            Value::Cipher(c) => Shape::Cipher(c.len()),
            Value::PublicKey(_) => Shape::PublicKey,
            Value::PrivateKey(_) => Shape::PrivateKey,
            Value::Draws(d) => Shape::Draws(d.len()),
        }
    }

    /// True for values readable without the private key.
    pub fn is_plaintext(&self) -> bool {
        matches!(self, Value::Real(_) | Value::Matrix(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Input,
    Coins,
    Received { from: PartyId, enveloped: bool },
    Sent { to: PartyId, enveloped: bool },
    Computed,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub step: usize,
    pub source: Source,
    pub subject: Subject,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub party: PartyId,
    pub entries: Vec<Entry>,
}

impl Transcript {
    pub fn new(party: PartyId) -> Self {
        Transcript {
            party,
            entries: Vec::new(),
        }
    }

    pub fn record(&mut self, step: usize, source: Source, subject: Subject, value: Value) {
        self.entries.push(Entry {
            step,
            source,
            subject,
            value,
        });
    }

    /// Records coin draws unless there were none.
    pub fn record_coins(&mut self, step: usize, purpose: Purpose, draws: Vec<BigUint>) {
        if !draws.is_empty() {
            self.record(step, Source::Coins, Subject::Coins(purpose), Value::Draws(draws));
        }
    }

    pub fn find(&self, step: usize, subject: Subject) -> impl Iterator<Item = &Entry> {
        self.entries
            .iter()
            .filter(move |e| e.step == step && e.subject == subject)
    }

    /// First plaintext vector recorded for `(step, subject)`.
    pub fn real(&self, step: usize, subject: Subject) -> Option<&Vector> {
        self.find(step, subject).find_map(|e| match &e.value {
            Value::Real(v) => Some(v),
            _ => None,
        })
    }

    /// First plaintext matrix recorded for `(step, subject)`.
    pub fn matrix(&self, step: usize, subject: Subject) -> Option<&Matrix> {
        self.find(step, subject).find_map(|e| match &e.value {
            Value::Matrix(m) => Some(m),
            _ => None,
        })
    }

    pub fn shapes(&self) -> Vec<(usize, Source, Subject, Shape)> {
        self.entries
            .iter()
            .map(|e| (e.step, e.source, e.subject, e.value.shape()))
            .collect()
    }

    /// One JSON object per line, in recording order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_in_order_and_finds_by_step() {
        let mut t = Transcript::new(PartyId::Sensor(0));
        t.record(0, Source::Input, Subject::ObservationModel(0), Value::Matrix(Matrix::identity(2, 2)));
        t.record(1, Source::Input, Subject::Measurement(0), Value::Real(Vector::from_vec(vec![1.0, 2.0])));
        t.record_coins(1, Purpose::Encryption, vec![]);
        t.record_coins(1, Purpose::Encryption, vec![BigUint::from(3u32)]);
        assert_eq!(t.entries.len(), 3);
        assert_eq!(t.real(1, Subject::Measurement(0)).unwrap()[1], 2.0);
        assert!(t.real(2, Subject::Measurement(0)).is_none());
        assert_eq!(t.shapes()[2].3, Shape::Draws(1));
        let text = String::from_utf8(t.to_jsonl()).unwrap();
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn party_names_are_one_based() {
        assert_eq!(PartyId::Sensor(0).to_string(), "sensor-1");
        assert_eq!(PartyId::Group(2).to_string(), "group-3");
    }
}
