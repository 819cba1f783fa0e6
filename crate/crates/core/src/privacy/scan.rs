//! Structural checks on coalition views.

use serde::{Deserialize, Serialize};

use crate::privacy::coalition::CoalitionKind;
use crate::privacy::transcript::{PartyId, Subject, Value};
use crate::privacy::view::CoalitionView;
use crate::run::ProtocolKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leak {
    pub party: PartyId,
    pub step: usize,
    pub subject: Subject,
    pub reason: String,
}

/// Lists every field the coalition holds but should not.
///
/// Flags plaintext readings of sensors outside the coalition, plaintext
/// group priors of outside groups, plaintext estimates in a coalition that
/// is not entitled to them, and private-key material without the query node.
/// Protocol 2 hands the plaintext estimate to every group, so any coalition
/// containing a group is entitled to it.
pub fn scan_view(view: &CoalitionView) -> Vec<Leak> {
    let sensors = view.member_sensors();
    let has_query = view.coalition.kind == CoalitionKind::Query;
    let gets_estimates = has_query || (view.protocol == ProtocolKind::Two && !view.coalition.members.is_empty());
    let mut leaks = Vec::new();
    for (party, e) in view.entries() {
        let plain = e.value.is_plaintext();
        let reason = match (e.subject, &e.value) {
            (Subject::Measurement(i), _) if plain && !sensors.contains(&i) => {
                Some(format!("plaintext reading of outside sensor {}", i + 1))
            }
            (Subject::GroupPrior(j), _) if plain && !view.coalition.members.contains(&j) => {
                Some(format!("plaintext prior of outside group {}", j + 1))
            }
            (Subject::Estimate | Subject::PriorEstimate | Subject::InitialEstimate, _) if plain && !gets_estimates => {
                Some("plaintext estimate".to_string())
            }
            (_, Value::PrivateKey(_)) if !has_query => Some("private key".to_string()),
            _ => None,
        };
        if let Some(reason) = reason {
            leaks.push(Leak {
                party,
                step: e.step,
                subject: e.subject,
                reason,
            });
        }
    }
    leaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::Scenario;
    use crate::privacy::coalition::CoalitionSpec;
    use crate::privacy::transcript::Source;
    use crate::privacy::view::extract_view;
    use crate::protocol1::run_protocol1;

    #[test]
    fn honest_views_are_clean_and_planted_leaks_are_found() {
        let run = run_protocol1(&Scenario::constant_velocity(3, None, 2, 256)).unwrap();
        let cloud = CoalitionSpec::parse("kind=cloud,members=1").unwrap();
        let mut view = extract_view(&run, &cloud).unwrap();
        assert!(scan_view(&view).is_empty());

        let y = run.truth.measurements[0][2].clone();
        let sk = run.private_key().unwrap().clone();
        view.transcripts[0].record(1, Source::Computed, Subject::Measurement(2), Value::Real(y));
        view.transcripts[0].record(1, Source::Computed, Subject::PrivateKey, Value::PrivateKey(sk));
        let leaks = scan_view(&view);
        assert_eq!(leaks.len(), 2);
        assert_eq!(leaks[0].subject, Subject::Measurement(2));
        assert_eq!(leaks[0].party, PartyId::Aggregator);
    }

    #[test]
    fn query_sees_estimates_legitimately() {
        let run = run_protocol1(&Scenario::constant_velocity(3, None, 2, 256)).unwrap();
        let view = extract_view(&run, &CoalitionSpec::parse("kind=query,members=2").unwrap()).unwrap();
        assert!(scan_view(&view).is_empty());
    }
}
