//! Estimation error, timing and traffic figures of a run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::matlib::Vector;
use crate::privacy::transcript::PartyId;
use crate::run::RunResult;

/// Which side of the protocol a party is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    /// A sensor in Protocol 1 or a sensor group in Protocol 2.
    Sensor,
    Aggregator,
    Query,
}

impl Role {
    pub fn of(party: PartyId) -> Role {
        match party {
            PartyId::Sensor(_) | PartyId::Group(_) => Role::Sensor,
            PartyId::Aggregator => Role::Aggregator,
            PartyId::Query => Role::Query,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// `x̂_k − x_k` per step; `None` when the data came without ground truth.
    pub errors: Option<Vec<Vector>>,
    pub rms: Option<Vector>,
    /// Mean milliseconds per step for each party, setup excluded.
    pub party_ms: Vec<(PartyId, f64)>,
    /// Per-role mean of `party_ms`.
    pub role_ms: BTreeMap<Role, f64>,
    pub setup_ms: BTreeMap<Role, f64>,
    pub messages: usize,
    pub bytes: usize,
    pub by_kind: BTreeMap<String, (usize, usize)>,
    pub reference_deviation: f64,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = xs.into_iter().fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

impl RunMetrics {
    pub fn compute(run: &RunResult) -> RunMetrics {
        let errors: Option<Vec<Vector>> = (1..=run.steps())
            .map(|k| run.truth_at(k).map(|t| &run.estimates[k - 1].x - t))
            .collect();
        let rms = errors.as_ref().filter(|e| !e.is_empty()).map(|e| {
            let n = e[0].len();
            Vector::from_fn(n, |i, _| (mean(e.iter().map(|v| v[i] * v[i]))).sqrt())
        });

        let party_ms: Vec<(PartyId, f64)> = run
            .timings
            .iter()
            .map(|t| (t.party, mean(t.ms.iter().skip(1).copied())))
            .collect();
        let by_role = |f: &dyn Fn(&crate::run::PartyTiming) -> f64| {
            let mut acc: BTreeMap<Role, Vec<f64>> = BTreeMap::new();
            for t in &run.timings {
                acc.entry(Role::of(t.party)).or_default().push(f(t));
            }
            acc.into_iter().map(|(r, v)| (r, mean(v))).collect::<BTreeMap<_, _>>()
        };
        let role_ms = by_role(&|t| mean(t.ms.iter().skip(1).copied()));
        let setup_ms = by_role(&|t| t.ms.first().copied().unwrap_or(0.0));

        let mut by_kind: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for d in &run.deliveries {
            let e = by_kind.entry(d.kind.clone()).or_default();
            e.0 += 1;
            e.1 += d.bytes;
        }
        RunMetrics {
            errors,
            rms,
            party_ms,
            role_ms,
            setup_ms,
            messages: run.deliveries.len(),
            bytes: run.deliveries.iter().map(|d| d.bytes).sum(),
            by_kind,
            reference_deviation: run.max_reference_deviation(),
        }
    }

    pub fn role(&self, role: Role) -> f64 {
        self.role_ms.get(&role).copied().unwrap_or(0.0)
    }
}
