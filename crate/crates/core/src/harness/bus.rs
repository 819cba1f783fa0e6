//! In-process synchronous message network.
//!
//! Messages carry the step they belong to. A step ends with
//! [`MessageBus::end_step`], which fails if anything is still undelivered;
//! only then can messages of the next step be sent.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::privacy::transcript::PartyId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("message for step {message} sent during step {current}")]
    WrongStep { message: usize, current: usize },
    #[error("step {step} ended with {count} undelivered message(s)")]
    Undelivered { step: usize, count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope<M> {
    pub from: PartyId,
    pub to: PartyId,
    pub step: usize,
    pub payload: M,
    /// Transport-layer encryption marker. Never inspected.
    pub enveloped: bool,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub step: usize,
    pub from: PartyId,
    pub to: PartyId,
    pub kind: String,
    pub bytes: usize,
}

#[derive(Debug)]
pub struct MessageBus<M> {
    step: usize,
    mailboxes: BTreeMap<PartyId, VecDeque<Envelope<M>>>,
    log: Vec<Delivery>,
}

impl<M> Default for MessageBus<M> {
    fn default() -> Self {
        MessageBus {
            step: 0,
            mailboxes: BTreeMap::new(),
            log: Vec::new(),
        }
    }
}

impl<M> MessageBus<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn send(&mut self, envelope: Envelope<M>, kind: &str) -> Result<(), BusError> {
        if envelope.step != self.step {
            return Err(BusError::WrongStep {
                message: envelope.step,
                current: self.step,
            });
        }
        self.log.push(Delivery {
            step: envelope.step,
            from: envelope.from,
            to: envelope.to,
            kind: kind.to_string(),
            bytes: envelope.bytes,
        });
        self.mailboxes.entry(envelope.to).or_default().push_back(envelope);
        Ok(())
    }

    /// Next message for `to`, in send order.
    pub fn recv(&mut self, to: PartyId) -> Option<Envelope<M>> {
        self.mailboxes.get_mut(&to).and_then(VecDeque::pop_front)
    }

    /// Every pending message for `to`.
    pub fn drain(&mut self, to: PartyId) -> Vec<Envelope<M>> {
        self.mailboxes.get_mut(&to).map(|q| q.drain(..).collect()).unwrap_or_default()
    }

    pub fn pending(&self) -> usize {
        self.mailboxes.values().map(VecDeque::len).sum()
    }

    /// Barrier: every message of the current step must have been consumed.
    pub fn end_step(&mut self) -> Result<(), BusError> {
        let count = self.pending();
        if count > 0 {
            return Err(BusError::Undelivered { step: self.step, count });
        }
        self.step += 1;
        Ok(())
    }

    pub fn log(&self) -> &[Delivery] {
        &self.log
    }

    pub fn into_log(self) -> Vec<Delivery> {
        self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(from: PartyId, to: PartyId, step: usize, payload: u32) -> Envelope<u32> {
        Envelope {
            from,
            to,
            step,
            payload,
            enveloped: true,
            bytes: 4,
        }
    }

    #[test]
    fn delivers_in_order_per_receiver() {
        let mut bus = MessageBus::new();
        bus.send(env(PartyId::Sensor(0), PartyId::Aggregator, 0, 1), "a").unwrap();
        bus.send(env(PartyId::Sensor(1), PartyId::Aggregator, 0, 2), "a").unwrap();
        bus.send(env(PartyId::Aggregator, PartyId::Query, 0, 3), "b").unwrap();
        assert_eq!(bus.recv(PartyId::Aggregator).unwrap().payload, 1);
        assert_eq!(bus.drain(PartyId::Aggregator).len(), 1);
        assert_eq!(bus.pending(), 1);
        assert_eq!(bus.log().len(), 3);
    }

    #[test]
    fn barrier_blocks_next_step_until_drained() {
        let mut bus = MessageBus::new();
        assert_eq!(
            bus.send(env(PartyId::Query, PartyId::Aggregator, 1, 0), "x"),
            Err(BusError::WrongStep { message: 1, current: 0 })
        );
        bus.send(env(PartyId::Query, PartyId::Aggregator, 0, 0), "x").unwrap();
        assert_eq!(bus.end_step(), Err(BusError::Undelivered { step: 0, count: 1 }));
        bus.recv(PartyId::Aggregator).unwrap();
        bus.end_step().unwrap();
        assert_eq!(bus.step(), 1);
        bus.send(env(PartyId::Query, PartyId::Aggregator, 1, 0), "x").unwrap();
    }
}
