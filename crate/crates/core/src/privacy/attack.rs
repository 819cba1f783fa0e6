//! Query-coalition attacks on the readings or priors of outsiders.
//!
//! A query coalition knows the decrypted estimates, the revealed
//! covariances, the public model, and its members' private data. From these
//! it can form a linear system whose unknowns are the outsiders' data:
//!
//! * Protocol 1: `K_r Y_r = z`, where `K_r` stacks the gains of the outside
//!   sensors and `Y_r` their readings at step `k`.
//! * Protocol 2: `P_r X_r = z`, where `P_r` stacks the inverse prior
//!   covariances of the outside groups and `X_r` their priors.
//!
//! The attack succeeds when the system has a unique solution. Otherwise the
//! solutions form the family `A⁺z + (I − A⁺A)X` for arbitrary `X`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coins::{CoinStream, Purpose};
use crate::harness::report::fmt_sig;
use crate::harness::scenario::Scenario;
use crate::kalman::{self, SensorModel};
use crate::matlib::{self, hstack, inv, pinv, rank, vstack, LinalgError, Matrix, Vector};
use crate::privacy::coalition::{CoalitionError, CoalitionKind, CoalitionSpec};
use crate::privacy::transcript::{PartyId, Subject};
use crate::privacy::view::{extract_view, CoalitionView};
use crate::run::{ProtocolKind, RunResult};

/// Largest residual accepted for a solution of the attack system.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;
/// Recovery error under which a unique solution counts as a break.
pub const RECOVERY_TOLERANCE: f64 = 1e-6;
/// Recovery error over which the min-norm solution is called distinct from the truth.
pub const DISTINCT_THRESHOLD: f64 = 1e-3;
/// Random members of the solution family checked per report.
pub const FAMILY_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    PrivacyBroken,
    PrivacyPreserved,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::PrivacyBroken => "PrivacyBroken",
            Verdict::PrivacyPreserved => "PrivacyPreserved",
        })
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Coalition(#[from] CoalitionError),
    #[error("the attack needs a query coalition, got a {0} coalition")]
    NotQuery(CoalitionKind),
    #[error("this attack targets {expected}, the run is {found}")]
    WrongProtocol { expected: ProtocolKind, found: ProtocolKind },
    #[error("attack inapplicable: {0}")]
    Inapplicable(String),
    #[error("step {step} is outside the run (1..={steps})")]
    Step { step: usize, steps: usize },
    #[error("the coalition view lacks {0}")]
    Missing(String),
    #[error("attack system is inconsistent: residual {residual:e}")]
    Inconsistent { residual: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Kalman(#[from] kalman::KalmanError),
}

/// Rank of the per-step systems stacked over every step of the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackedRank {
    pub steps: usize,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub protocol: ProtocolKind,
    pub coalition: CoalitionSpec,
    pub step: usize,
    pub system: Matrix,
    pub rhs: Vector,
    pub rank: usize,
    pub unknowns: usize,
    pub nullity: usize,
    pub unique: bool,
    /// Minimum-norm solution.
    pub solution: Vector,
    /// What the outsiders actually held; never visible to the coalition.
    pub truth: Vector,
    pub recovery_error: f64,
    pub distinct_from_truth: bool,
    pub residual: f64,
    /// Worst residual over random members of the solution family.
    pub family_residual: f64,
    pub stacked: Option<StackedRank>,
    pub verdict: Verdict,
}

fn missing(what: &str, step: usize) -> AttackError {
    AttackError::Missing(format!("{what} at step {step}"))
}

fn check_query(run: &RunResult, coalition: &CoalitionSpec, expected: ProtocolKind, step: usize) -> Result<CoalitionView, AttackError> {
    if run.protocol != expected {
        return Err(AttackError::WrongProtocol {
            expected,
            found: run.protocol,
        });
    }
    if coalition.kind != CoalitionKind::Query {
        return Err(AttackError::NotQuery(coalition.kind));
    }
    if step == 0 || step > run.steps() {
        return Err(AttackError::Step {
            step,
            steps: run.steps(),
        });
    }
    Ok(extract_view(run, coalition)?)
}

/// `H_i`, `R_i` as the query node knows them.
fn public_sensor(view: &CoalitionView, i: usize) -> Result<SensorModel, AttackError> {
    let h = view.matrix(0, Subject::ObservationModel(i));
    let r = view.matrix(0, Subject::MeasurementCov(i));
    match (h, r) {
        (Some(h), Some(r)) => Ok(SensorModel { h: h.clone(), r: r.clone() }),
        _ => Err(AttackError::Inapplicable(format!("H and R of sensor {} are private", i + 1))),
    }
}

fn public_f(view: &CoalitionView) -> Result<(Matrix, Matrix), AttackError> {
    match (view.matrix(0, Subject::ProcessModel), view.matrix(0, Subject::ProcessNoise)) {
        (Some(f), Some(q)) => Ok((f.clone(), q.clone())),
        _ => Err(AttackError::Inapplicable("F and Q are private to the aggregator".into())),
    }
}

/// Estimate and covariance the query output after `step`; step 0 is the initial belief.
fn query_belief(view: &CoalitionView, step: usize) -> Result<(Vector, Matrix), AttackError> {
    let (xs, ps, at) = if step == 0 {
        (Subject::InitialEstimate, Subject::InitialCov, 0)
    } else {
        (Subject::Estimate, Subject::EstimateCov, step)
    };
    let q = view.party(PartyId::Query).ok_or_else(|| missing("the query transcript", step))?;
    let x = q.real(at, xs).ok_or_else(|| missing("the estimate", step))?.clone();
    let p = q.matrix(at, ps).ok_or_else(|| missing("the covariance", step))?.clone();
    Ok((x, p))
}

struct Solved {
    rank: usize,
    nullity: usize,
    solution: Vector,
    residual: f64,
    family_residual: f64,
}

fn solve(a: &Matrix, z: &Vector, seed: u64) -> Result<Solved, AttackError> {
    let rtol = matlib::default_rtol(a);
    let a_pinv = pinv(a, rtol)?;
    let r = rank(a, rtol)?;
    let solution = &a_pinv * z;
    let residual = (a * &solution - z).amax();
    if residual > RESIDUAL_TOLERANCE {
        return Err(AttackError::Inconsistent { residual });
    }
    let cols = a.ncols();
    let projector = Matrix::identity(cols, cols) - &a_pinv * a;
    let scale = solution.amax().max(1.0);
    let mut coins = CoinStream::new(seed, Purpose::Simulator);
    let mut family_residual: f64 = 0.0;
    for _ in 0..FAMILY_SAMPLES {
        let x = Vector::from_fn(cols, |_, _| coins.uniform(-scale, scale));
        let y = &solution + &projector * x;
        family_residual = family_residual.max((a * y - z).amax());
    }
    Ok(Solved {
        rank: r,
        nullity: cols - r,
        solution,
        residual,
        family_residual,
    })
}

fn report(
    run: &RunResult,
    coalition: &CoalitionSpec,
    step: usize,
    system: Matrix,
    rhs: Vector,
    truth: Vector,
    stacked: Option<StackedRank>,
) -> Result<AttackReport, AttackError> {
    let solved = solve(&system, &rhs, run.scenario.seeds.simulator)?;
    let recovery_error = (&solved.solution - &truth).amax();
    let unique = solved.nullity == 0;
    let verdict = if unique && recovery_error <= RECOVERY_TOLERANCE {
        Verdict::PrivacyBroken
    } else {
        Verdict::PrivacyPreserved
    };
    Ok(AttackReport {
        protocol: run.protocol,
        coalition: coalition.clone(),
        step,
        unknowns: system.ncols(),
        system,
        rhs,
        rank: solved.rank,
        nullity: solved.nullity,
        unique,
        solution: solved.solution,
        truth,
        recovery_error,
        distinct_from_truth: recovery_error > DISTINCT_THRESHOLD,
        residual: solved.residual,
        family_residual: solved.family_residual,
        stacked,
        verdict,
    })
}

/// Gains `K_i = P H_iᵀ R_i⁻¹` of every sensor.
fn gains(p: &Matrix, sensors: &[SensorModel]) -> Result<Vec<Matrix>, AttackError> {
    sensors
        .iter()
        .map(|s| Ok(p * s.h.transpose() * inv(&s.r)?))
        .collect()
}

/// Recovers the readings of the sensors outside a Protocol 1 query coalition at `step`.
///
/// With `x̂_k = (I − Σ K_i H_i) F x̂_{k−1} + Σ K_i y_i`, everything but the
/// outsiders' `K_i y_i` is known to the coalition.
pub fn attack_protocol1_query_coalition(
    run: &RunResult,
    coalition: &CoalitionSpec,
    step: usize,
) -> Result<AttackReport, AttackError> {
    let view = check_query(run, coalition, ProtocolKind::One, step)?;
    let count = run.scenario.sensor_count();
    let outsiders = coalition.outsiders(count);
    let (f, _) = public_f(&view)?;
    let sensors = (0..count).map(|i| public_sensor(&view, i)).collect::<Result<Vec<_>, _>>()?;
    let n = f.nrows();

    let system_at = |k: usize| -> Result<(Matrix, Vector), AttackError> {
        let (x_now, p_now) = query_belief(&view, k)?;
        let (x_prev, _) = query_belief(&view, k - 1)?;
        let ks = gains(&p_now, &sensors)?;
        let mut carry = Matrix::identity(n, n);
        for (kg, s) in ks.iter().zip(&sensors) {
            carry -= kg * &s.h;
        }
        let mut z = x_now - carry * (&f * x_prev);
        for &i in &coalition.members {
            let y = view.real(k, Subject::Measurement(i)).ok_or_else(|| missing("a member reading", k))?;
            z -= &ks[i] * y;
        }
        Ok((kalman::stacked_gains(&ks, &outsiders)?, z))
    };

    let (system, rhs) = system_at(step)?;
    let per_step = (1..=run.steps()).map(|k| system_at(k).map(|(a, _)| a)).collect::<Result<Vec<_>, _>>()?;
    let tall = vstack(&per_step)?;
    let stacked = StackedRank {
        steps: per_step.len(),
        rows: tall.nrows(),
        cols: tall.ncols(),
        rank: rank(&tall, matlib::default_rtol(&tall))?,
    };
    let truth_parts: Vec<Vector> = outsiders.iter().map(|&i| run.truth.measurements[step - 1][i].clone()).collect();
    let truth = Vector::from_iterator(
        truth_parts.iter().map(|v| v.len()).sum(),
        truth_parts.iter().flat_map(|v| v.iter().copied()),
    );
    report(run, coalition, step, system, rhs, truth, Some(stacked))
}

/// Recovers the priors of the groups outside a Protocol 2 query coalition at `step`.
///
/// The coalition undoes the aggregator's time update to get the fused prior,
/// then subtracts its members' information contributions.
pub fn attack_protocol2_query_coalition(
    run: &RunResult,
    coalition: &CoalitionSpec,
    step: usize,
) -> Result<AttackReport, AttackError> {
    let view = check_query(run, coalition, ProtocolKind::Two, step)?;
    let groups = run.scenario.groups_or_singletons();
    let outsiders = coalition.outsiders(groups.len());
    let (f, q) = public_f(&view)?;
    let n = f.nrows();
    if rank(&f, matlib::default_rtol(&f))? < n || matlib::condition(&f)? > matlib::MAX_CONDITION {
        return Err(AttackError::Inapplicable("F is not invertible".into()));
    }
    let f_inv = inv(&f)?;
    let (x_a, p_a) = query_belief(&view, step)?;
    let (_, p_prev) = query_belief(&view, step - 1)?;
    let x_fused = &f_inv * x_a;
    let p_fused = matlib::symmetrize(&(&f_inv * (p_a - q) * f_inv.transpose()));
    let info_fused = inv(&p_fused)?;

    let mut z = &info_fused * &x_fused;
    let mut member_info = Matrix::zeros(n, n);
    for &j in &coalition.members {
        let x = view.real(step, Subject::GroupPrior(j)).ok_or_else(|| missing("a member prior", step))?;
        let p = view.matrix(step, Subject::GroupPriorCov(j)).ok_or_else(|| missing("a member prior covariance", step))?;
        let info = inv(p)?;
        z -= &info * x;
        member_info += info;
    }
    let outsider_infos = if outsiders.len() == 1 {
        // The lone outsider's information is what the members do not account for.
        vec![&info_fused - &member_info]
    } else {
        outsiders
            .iter()
            .map(|&j| {
                let sensors = groups[j].iter().map(|&i| public_sensor(&view, i)).collect::<Result<Vec<_>, _>>()?;
                let refs: Vec<&SensorModel> = sensors.iter().collect();
                Ok(inv(&kalman::group_covariance(&p_prev, &refs)?.0)?)
            })
            .collect::<Result<Vec<_>, AttackError>>()?
    };
    let system = hstack(&outsider_infos)?;
    let mut truth = Vec::with_capacity(n * outsiders.len());
    for &j in &outsiders {
        let t = run
            .transcript(PartyId::Group(j))
            .and_then(|t| t.real(step, Subject::GroupPrior(j)))
            .ok_or_else(|| missing("an outsider prior in the run", step))?;
        truth.extend(t.iter().copied());
    }
    report(run, coalition, step, system, z, Vector::from_vec(truth), None)
}

/// Runs the attack matching the run's protocol.
pub fn attack_query_coalition(run: &RunResult, coalition: &CoalitionSpec, step: usize) -> Result<AttackReport, AttackError> {
    match run.protocol {
        ProtocolKind::One => attack_protocol1_query_coalition(run, coalition, step),
        ProtocolKind::Two => attack_protocol2_query_coalition(run, coalition, step),
    }
}

/// The verdict the privacy theorems predict for `coalition`.
///
/// Sensor and cloud coalitions never learn outsiders' data. A query
/// coalition breaks Protocol 1 unless `p·m_r > n` and Protocol 2 unless
/// `d_r > 1`. Keeping `H`/`R` or `F`/`Q` private, or a singular `F` in
/// Protocol 2, defeats the attack.
pub fn check_theorem_conditions(scenario: &Scenario, protocol: ProtocolKind, coalition: &CoalitionSpec) -> Verdict {
    if coalition.kind != CoalitionKind::Query {
        return Verdict::PrivacyPreserved;
    }
    let n = scenario.n();
    let vis = scenario.visibility;
    let safe = match protocol {
        ProtocolKind::One => {
            let m_r = coalition.outsiders(scenario.sensor_count()).len();
            scenario.p() * m_r > n || vis.private_hr || vis.private_fq
        }
        ProtocolKind::Two => {
            let d_r = coalition.outsiders(scenario.groups_or_singletons().len()).len();
            let f = &scenario.model.f;
            let singular = rank(f, matlib::default_rtol(f)).map_or(true, |r| r < n);
            d_r > 1 || vis.private_fq || singular
        }
    };
    if safe {
        Verdict::PrivacyPreserved
    } else {
        Verdict::PrivacyBroken
    }
}

impl AttackReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} attack, coalition {}, step {}", self.protocol, self.coalition, self.step);
        let _ = writeln!(s, "system: {} x {}", self.system.nrows(), self.system.ncols());
        let _ = writeln!(s, "rank: {}", self.rank);
        let _ = writeln!(s, "nullspace dimension: {}", self.nullity);
        let _ = writeln!(s, "unique: {}", self.unique);
        let _ = writeln!(s, "residual: {}", fmt_sig(self.residual));
        let _ = writeln!(s, "family residual ({FAMILY_SAMPLES} samples): {}", fmt_sig(self.family_residual));
        let _ = writeln!(s, "recovery error: {}", fmt_sig(self.recovery_error));
        let _ = writeln!(s, "min-norm solution differs from truth: {}", self.distinct_from_truth);
        if let Some(st) = &self.stacked {
            let _ = writeln!(
                s,
                "stacked over {} steps: {} x {}, rank {}",
                st.steps, st.rows, st.cols, st.rank
            );
        }
        let _ = writeln!(s, "solution: {}", join(&self.solution));
        let _ = writeln!(s, "truth: {}", join(&self.truth));
        let _ = writeln!(s, "verdict: {}", self.verdict);
        s
    }

    /// `field,value` rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut row = |k: &str, v: String| w.write_record([k, v.as_str()]).expect("write to memory");
        row("field", "value".into());
        row("protocol", self.protocol.to_string());
        row("coalition", self.coalition.to_string());
        row("step", self.step.to_string());
        row("rows", self.system.nrows().to_string());
        row("unknowns", self.unknowns.to_string());
        row("rank", self.rank.to_string());
        row("nullity", self.nullity.to_string());
        row("unique", self.unique.to_string());
        row("residual", fmt_sig(self.residual));
        row("family_residual", fmt_sig(self.family_residual));
        row("recovery_error", fmt_sig(self.recovery_error));
        row("distinct_from_truth", self.distinct_from_truth.to_string());
        if let Some(st) = &self.stacked {
            row("stacked_steps", st.steps.to_string());
            row("stacked_rank", st.rank.to_string());
        }
        row("solution", join(&self.solution));
        row("truth", join(&self.truth));
        row("verdict", self.verdict.to_string());
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
    }
}

fn join(v: &Vector) -> String {
    v.iter().map(|&x| fmt_sig(x)).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::Scenario;
    use crate::protocol1::run_protocol1;
    use crate::protocol2::run_protocol2;

    fn query(members: &[usize]) -> CoalitionSpec {
        CoalitionSpec::new(CoalitionKind::Query, members.to_vec()).unwrap()
    }

    #[test]
    fn protocol1_single_outsider_is_recovered() {
        let s = Scenario::constant_velocity(3, None, 3, 256);
        let run = run_protocol1(&s).unwrap();
        let r = attack_protocol1_query_coalition(&run, &query(&[0, 1]), 2).unwrap();
        assert_eq!((r.unknowns, r.nullity), (3, 0));
        assert!(r.recovery_error < 1e-6, "{}", r.recovery_error);
        assert_eq!(r.verdict, Verdict::PrivacyBroken);
        assert_eq!(check_theorem_conditions(&s, ProtocolKind::One, &query(&[0, 1])), Verdict::PrivacyBroken);
        assert!(r.family_residual < 1e-6);
        assert!(r.to_csv().contains("verdict,PrivacyBroken"));
    }

    #[test]
    fn protocol2_with_two_outsiders_is_preserved() {
        let s = Scenario::constant_velocity(3, Some(3), 2, 256);
        let run = run_protocol2(&s).unwrap();
        let r = attack_protocol2_query_coalition(&run, &query(&[0]), 2).unwrap();
        assert_eq!(r.nullity, 6);
        assert!(r.distinct_from_truth);
        assert_eq!(r.verdict, Verdict::PrivacyPreserved);
        let lone = attack_protocol2_query_coalition(&run, &query(&[0, 1]), 1).unwrap();
        assert_eq!(lone.verdict, Verdict::PrivacyBroken, "{}", lone.to_text());
    }

    #[test]
    fn wrong_kind_or_protocol_is_refused() {
        let run = run_protocol1(&Scenario::constant_velocity(2, None, 1, 256)).unwrap();
        let cloud = CoalitionSpec::new(CoalitionKind::Cloud, vec![0]).unwrap();
        assert!(matches!(
            attack_protocol1_query_coalition(&run, &cloud, 1),
            Err(AttackError::NotQuery(CoalitionKind::Cloud))
        ));
        assert!(matches!(
            attack_protocol2_query_coalition(&run, &query(&[0]), 1),
            Err(AttackError::WrongProtocol { .. })
        ));
        assert!(matches!(
            attack_protocol1_query_coalition(&run, &query(&[0]), 2),
            Err(AttackError::Step { .. })
        ));
    }

    #[test]
    fn private_models_make_the_attack_inapplicable() {
        let mut s = Scenario::constant_velocity(2, None, 1, 256);
        s.visibility.private_hr = true;
        let run = run_protocol1(&s).unwrap();
        assert!(matches!(
            attack_protocol1_query_coalition(&run, &query(&[0]), 1),
            Err(AttackError::Inapplicable(_))
        ));
        assert_eq!(check_theorem_conditions(&s, ProtocolKind::One, &query(&[0])), Verdict::PrivacyPreserved);
    }
}
