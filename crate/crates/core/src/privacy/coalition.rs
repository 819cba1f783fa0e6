//! Coalitions of semi-honest parties that pool their views.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::privacy::transcript::PartyId;
use crate::run::ProtocolKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoalitionKind {
    /// Sensors (or sensor groups) only.
    Sensor,
    /// The aggregator with some sensors or groups.
    Cloud,
    /// The query node with some sensors or groups.
    Query,
}

impl fmt::Display for CoalitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoalitionKind::Sensor => "sensor",
            CoalitionKind::Cloud => "cloud",
            CoalitionKind::Query => "query",
        })
    }
}

impl FromStr for CoalitionKind {
    type Err = CoalitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sensor" | "sensors" => Ok(CoalitionKind::Sensor),
            "cloud" | "aggregator" => Ok(CoalitionKind::Cloud),
            "query" => Ok(CoalitionKind::Query),
            other => Err(CoalitionError::Parse(format!("unknown coalition kind `{other}`"))),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoalitionError {
    #[error("cannot parse coalition: {0}")]
    Parse(String),
    #[error("a sensor coalition needs at least one member")]
    Empty,
    #[error("member {member} does not exist; there are {units}")]
    OutOfRange { member: usize, units: usize },
    #[error("every sensor or group is in the coalition; at least one must stay out")]
    NoOutsider,
}

/// A coalition kind and its member sensors (Protocol 1) or groups (Protocol 2).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoalitionSpec {
    pub kind: CoalitionKind,
    /// Zero-based, sorted, without duplicates.
    pub members: Vec<usize>,
}

impl CoalitionSpec {
    pub fn new(kind: CoalitionKind, mut members: Vec<usize>) -> Result<Self, CoalitionError> {
        members.sort_unstable();
        members.dedup();
        if kind == CoalitionKind::Sensor && members.is_empty() {
            return Err(CoalitionError::Empty);
        }
        Ok(CoalitionSpec { kind, members })
    }

    /// Parses `kind=query,members=1,2` with one-based member numbers.
    pub fn parse(text: &str) -> Result<Self, CoalitionError> {
        let mut kind = None;
        let mut members = Vec::new();
        let mut key = "";
        for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let value = match token.split_once('=') {
                Some((k, v)) => {
                    key = k.trim();
                    v.trim()
                }
                None => token,
            };
            match key {
                "kind" => kind = Some(value.parse()?),
                "members" => {
                    if value.is_empty() {
                        continue;
                    }
                    let m: usize = value
                        .parse()
                        .map_err(|_| CoalitionError::Parse(format!("`{value}` is not a member number")))?;
                    if m == 0 {
                        return Err(CoalitionError::Parse("members are numbered from 1".into()));
                    }
                    members.push(m - 1);
                }
                "" => return Err(CoalitionError::Parse(format!("`{token}` has no key"))),
                other => return Err(CoalitionError::Parse(format!("unknown key `{other}`"))),
            }
        }
        let kind = kind.ok_or_else(|| CoalitionError::Parse("missing `kind=`".into()))?;
        Self::new(kind, members)
    }

    /// Checks the members against `units` sensors or groups.
    pub fn validate(&self, units: usize) -> Result<(), CoalitionError> {
        if let Some(&member) = self.members.iter().find(|&&m| m >= units) {
            return Err(CoalitionError::OutOfRange { member, units });
        }
        if self.members.len() >= units {
            return Err(CoalitionError::NoOutsider);
        }
        Ok(())
    }

    /// Sensors or groups outside the coalition (`m_r` or `d_r` of them).
    pub fn outsiders(&self, units: usize) -> Vec<usize> {
        (0..units).filter(|u| !self.members.contains(u)).collect()
    }

    /// Parties whose views the coalition pools, in canonical order.
    pub fn parties(&self, protocol: ProtocolKind) -> Vec<PartyId> {
        let mut out = match self.kind {
            CoalitionKind::Sensor => Vec::new(),
            CoalitionKind::Cloud => vec![PartyId::Aggregator],
            CoalitionKind::Query => vec![PartyId::Query],
        };
        out.extend(self.members.iter().map(|&m| match protocol {
            ProtocolKind::One => PartyId::Sensor(m),
            ProtocolKind::Two => PartyId::Group(m),
        }));
        out
    }
}

impl fmt::Display for CoalitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kind={}", self.kind)?;
        if !self.members.is_empty() {
            let list: Vec<String> = self.members.iter().map(|m| (m + 1).to_string()).collect();
            write!(f, ",members={}", list.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_one_based_members() {
        let c = CoalitionSpec::parse("kind=query,members=3,1,3").unwrap();
        assert_eq!(c.kind, CoalitionKind::Query);
        assert_eq!(c.members, vec![0, 2]);
        assert_eq!(c.to_string(), "kind=query,members=1,3");
        assert_eq!(CoalitionSpec::parse(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(CoalitionSpec::parse("members=1"), Err(CoalitionError::Parse(_))));
        assert!(matches!(CoalitionSpec::parse("kind=boss"), Err(CoalitionError::Parse(_))));
        assert!(matches!(CoalitionSpec::parse("kind=query,members=0"), Err(CoalitionError::Parse(_))));
        assert_eq!(CoalitionSpec::parse("kind=sensor"), Err(CoalitionError::Empty));
    }

    #[test]
    fn validation_and_outsiders() {
        let c = CoalitionSpec::parse("kind=cloud,members=1,2").unwrap();
        assert_eq!(c.validate(2), Err(CoalitionError::NoOutsider));
        assert_eq!(c.validate(1), Err(CoalitionError::OutOfRange { member: 1, units: 1 }));
        c.validate(4).unwrap();
        assert_eq!(c.outsiders(4), vec![2, 3]);
        assert_eq!(
            c.parties(ProtocolKind::Two),
            vec![PartyId::Aggregator, PartyId::Group(0), PartyId::Group(1)]
        );
        let alone = CoalitionSpec::parse("kind=query").unwrap();
        assert_eq!(alone.parties(ProtocolKind::One), vec![PartyId::Query]);
    }
}
