//! Plaintext and encrypted Kalman filter steps.
//!
//! Estimates may be encrypted; covariances never are. All covariance
//! outputs are symmetrized.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coins::CoinStream;
use crate::encoding::EncodingError;
use crate::matlib::{
    self, block_diag, cholesky_or_zero, enc_vec_add, enc_vec_sub, hstack, inv, mat_enc_mul, pinv, symmetrize,
    vstack, EncVector, LinalgError, Matrix, Vector,
};
use crate::phe::PublicKey;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KalmanError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("incomplete round: no reading from sensor(s) {missing:?}")]
    IncompleteRound { missing: Vec<usize> },
    #[error("a measurement update needs at least one sensor")]
    NoSensors,
    #[error("{0} is not a valid covariance")]
    Covariance(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

type Result<T> = std::result::Result<T, KalmanError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub h: Matrix,
    pub r: Matrix,
}

/// `x_{k+1} = F x_k + w_k`, `y_{i,k} = H_i x_k + v_{i,k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub f: Matrix,
    pub q: Matrix,
    pub sensors: Vec<SensorModel>,
}

fn is_symmetric(m: &Matrix) -> bool {
    matlib::max_abs(&(m - m.transpose())) <= 1e-9 * matlib::max_abs(m).max(1.0)
}

impl SystemModel {
    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    /// Measurement size of sensor 0; [`Self::check_dims`] enforces uniformity.
    pub fn p(&self) -> usize {
        self.sensors.first().map_or(0, |s| s.h.nrows())
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    pub fn check_dims(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || !self.f.is_square() {
            return Err(KalmanError::Dimension(format!("F is {}x{}", self.f.nrows(), self.f.ncols())));
        }
        if self.q.shape() != (n, n) {
            return Err(KalmanError::Dimension(format!("Q is {:?}, expected {n}x{n}", self.q.shape())));
        }
        let p = self.p();
        for (i, s) in self.sensors.iter().enumerate() {
            if s.h.shape() != (p, n) || p == 0 {
                return Err(KalmanError::Dimension(format!(
                    "H of sensor {i} is {:?}, expected {p}x{n}",
                    s.h.shape()
                )));
            }
            if s.r.shape() != (p, p) {
                return Err(KalmanError::Dimension(format!("R of sensor {i} is {:?}, expected {p}x{p}", s.r.shape())));
            }
        }
        Ok(())
    }

    /// Dimensions, plus `Q` symmetric PSD and every `R_i` symmetric positive-definite.
    pub fn validate(&self) -> Result<()> {
        self.check_dims()?;
        matlib::ensure_finite(&self.f)?;
        if !is_symmetric(&self.q) || matlib::min_eigenvalue(&self.q) < -1e-9 {
            return Err(KalmanError::Covariance("Q".into()));
        }
        for (i, s) in self.sensors.iter().enumerate() {
            matlib::ensure_finite(&s.h)?;
            if !is_symmetric(&s.r) || matlib::cholesky(&s.r).is_err() {
                return Err(KalmanError::Covariance(format!("R of sensor {i}")));
            }
        }
        Ok(())
    }
}

/// Plaintext estimate with its covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub x: Vector,
    pub p: Matrix,
}

/// Encrypted estimate with its (public) covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncBelief {
    pub x: EncVector,
    pub p: Matrix,
}

fn check_state(n: usize, len: usize, p: &Matrix) -> Result<()> {
    if len != n || p.shape() != (n, n) {
        return Err(KalmanError::Dimension(format!(
            "belief of length {len} with {:?} covariance, state size {n}",
            p.shape()
        )));
    }
    Ok(())
}

pub fn predict_covariance(model: &SystemModel, p: &Matrix) -> Matrix {
    symmetrize(&(&model.f * p * model.f.transpose() + &model.q))
}

pub fn time_update(model: &SystemModel, b: &Belief) -> Result<Belief> {
    check_state(model.n(), b.x.len(), &b.p)?;
    Ok(Belief {
        x: &model.f * &b.x,
        p: predict_covariance(model, &b.p),
    })
}

pub fn time_update_enc(pk: &PublicKey, model: &SystemModel, b: &EncBelief, frac_bits: u32) -> Result<EncBelief> {
    check_state(model.n(), b.x.len(), &b.p)?;
    Ok(EncBelief {
        x: mat_enc_mul(pk, &model.f, &b.x, frac_bits)?,
        p: predict_covariance(model, &b.p),
    })
}

/// Something a sensor reports: a plaintext or encrypted vector.
pub trait Reading: Clone {
    fn len(&self) -> usize;
    fn concat(parts: Vec<Self>) -> Self;
}

impl Reading for Vector {
    fn len(&self) -> usize {
        self.nrows()
    }

    fn concat(parts: Vec<Self>) -> Self {
        Vector::from_iterator(parts.iter().map(|v| v.len()).sum(), parts.iter().flat_map(|v| v.iter().copied()))
    }
}

impl Reading for EncVector {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn concat(parts: Vec<Self>) -> Self {
        EncVector(parts.into_iter().flat_map(|v| v.0).collect())
    }
}

/// Measurements of several sensors stacked in sensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct Stacked<Y> {
    pub y: Y,
    pub h: Matrix,
    pub r: Matrix,
    pub block_sizes: Vec<usize>,
}

/// Stacks one reading per sensor of `model`. A `None` entry is a missing sensor.
pub fn stack<Y: Reading>(model: &SystemModel, readings: &[Option<Y>]) -> Result<Stacked<Y>> {
    if model.sensors.is_empty() {
        return Err(KalmanError::NoSensors);
    }
    if readings.len() != model.sensors.len() {
        return Err(KalmanError::Dimension(format!(
            "{} readings for {} sensors",
            readings.len(),
            model.sensors.len()
        )));
    }
    let missing: Vec<usize> = (0..readings.len()).filter(|&i| readings[i].is_none()).collect();
    if !missing.is_empty() {
        return Err(KalmanError::IncompleteRound { missing });
    }
    let mut ys = Vec::with_capacity(readings.len());
    for (i, (y, s)) in readings.iter().zip(&model.sensors).enumerate() {
        let y = y.as_ref().expect("checked above");
        if y.len() != s.h.nrows() {
            return Err(KalmanError::Dimension(format!(
                "sensor {i} reported {} values, H has {} rows",
                y.len(),
                s.h.nrows()
            )));
        }
        ys.push(y.clone());
    }
    let hs: Vec<Matrix> = model.sensors.iter().map(|s| s.h.clone()).collect();
    let rs: Vec<Matrix> = model.sensors.iter().map(|s| s.r.clone()).collect();
    Ok(Stacked {
        y: Y::concat(ys),
        h: vstack(&hs)?,
        r: block_diag(&rs),
        block_sizes: model.sensors.iter().map(|s| s.h.nrows()).collect(),
    })
}

/// Covariance-side results of a parallel measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateGains {
    /// Posterior covariance.
    pub p: Matrix,
    /// Stacked gain, `n x sum(block_sizes)`.
    pub gain: Matrix,
    /// Column blocks of `gain`, one per sensor.
    pub per_sensor: Vec<Matrix>,
}

fn block_pinv(r: &Matrix, block_sizes: &[usize]) -> Result<Matrix> {
    let mut blocks = Vec::with_capacity(block_sizes.len());
    let mut at = 0;
    for &size in block_sizes {
        let block = r.view((at, at), (size, size)).into_owned();
        blocks.push(pinv(&block, matlib::default_rtol(&block))?);
        at += size;
    }
    if at != r.nrows() {
        return Err(KalmanError::Dimension("block sizes do not tile R".into()));
    }
    Ok(block_diag(&blocks))
}

/// `P = ((P^-)^-1 + H^T R^+ H)^-1` and `K = P H^T R^+`.
pub fn parallel_gains(p_prior: &Matrix, h: &Matrix, r: &Matrix, block_sizes: &[usize]) -> Result<UpdateGains> {
    let r_pinv = block_pinv(r, block_sizes)?;
    let ht_rp = h.transpose() * &r_pinv;
    let info = inv(p_prior)? + &ht_rp * h;
    let p = symmetrize(&inv(&info)?);
    let gain = &p * ht_rp;
    let mut per_sensor = Vec::with_capacity(block_sizes.len());
    let mut at = 0;
    for &size in block_sizes {
        per_sensor.push(gain.columns(at, size).into_owned());
        at += size;
    }
    Ok(UpdateGains { p, gain, per_sensor })
}

pub fn measurement_update_parallel(prior: &Belief, st: &Stacked<Vector>) -> Result<(Belief, UpdateGains)> {
    check_state(st.h.ncols(), prior.x.len(), &prior.p)?;
    let gains = parallel_gains(&prior.p, &st.h, &st.r, &st.block_sizes)?;
    let innovation = &st.y - &st.h * &prior.x;
    let x = &prior.x + &gains.gain * innovation;
    Ok((Belief { x, p: gains.p.clone() }, gains))
}

/// `x = x^- + K (Y - H x^-)` evaluated on ciphertexts.
pub fn measurement_update_parallel_enc(
    pk: &PublicKey,
    prior: &EncBelief,
    st: &Stacked<EncVector>,
    frac_bits: u32,
) -> Result<(EncBelief, UpdateGains)> {
    check_state(st.h.ncols(), prior.x.len(), &prior.p)?;
    let gains = parallel_gains(&prior.p, &st.h, &st.r, &st.block_sizes)?;
    let predicted = mat_enc_mul(pk, &st.h, &prior.x, frac_bits)?;
    let innovation = enc_vec_sub(pk, &st.y, &predicted)?;
    let correction = mat_enc_mul(pk, &gains.gain, &innovation, frac_bits)?;
    let x = enc_vec_add(pk, &prior.x, &correction)?;
    Ok((EncBelief { x, p: gains.p.clone() }, gains))
}

/// Covariance-form update with the prior covariance in the gain. Test oracle.
pub fn classical_update(prior: &Belief, st: &Stacked<Vector>) -> Result<(Belief, Matrix)> {
    let s = &st.h * &prior.p * st.h.transpose() + &st.r;
    let gain = &prior.p * st.h.transpose() * inv(&s)?;
    let n = prior.x.len();
    let x = &prior.x + &gain * (&st.y - &st.h * &prior.x);
    let p = symmetrize(&((Matrix::identity(n, n) - &gain * &st.h) * &prior.p));
    Ok((Belief { x, p }, gain))
}

/// Information-form update of one group from the previous global estimate.
/// Returns the group prior and each member's gain.
/// Group posterior covariance and the per-member `H_iᵀ R_i⁻¹` factors.
pub fn group_covariance(prev_p: &Matrix, sensors: &[&SensorModel]) -> Result<(Matrix, Vec<Matrix>)> {
    if sensors.is_empty() {
        return Err(KalmanError::NoSensors);
    }
    let n = prev_p.nrows();
    check_state(n, n, prev_p)?;
    let mut info = inv(prev_p)?;
    let mut weighted = Vec::with_capacity(sensors.len());
    for (i, s) in sensors.iter().enumerate() {
        if s.h.ncols() != n {
            return Err(KalmanError::Dimension(format!("group member {i} does not match state size {n}")));
        }
        let ht_rinv = s.h.transpose() * inv(&s.r)?;
        info += &ht_rinv * &s.h;
        weighted.push(ht_rinv);
    }
    Ok((symmetrize(&inv(&info)?), weighted))
}

pub fn group_measurement_update(prev: &Belief, sensors: &[(&SensorModel, &Vector)]) -> Result<(Belief, Vec<Matrix>)> {
    let models: Vec<&SensorModel> = sensors.iter().map(|(s, _)| *s).collect();
    check_state(prev.p.nrows(), prev.x.len(), &prev.p)?;
    let (p, weighted) = group_covariance(&prev.p, &models)?;
    let mut x = prev.x.clone();
    let mut gains = Vec::with_capacity(sensors.len());
    for (i, ((s, y), ht_rinv)) in sensors.iter().zip(weighted).enumerate() {
        if y.len() != s.h.nrows() {
            return Err(KalmanError::Dimension(format!("group member {i} reported {} values", y.len())));
        }
        let k = &p * ht_rinv;
        x += &k * (*y - &s.h * &prev.x);
        gains.push(k);
    }
    Ok((Belief { x, p }, gains))
}

pub fn diffusion_covariance(priors: &[&Matrix]) -> Result<(Matrix, Vec<Matrix>)> {
    if priors.is_empty() {
        return Err(KalmanError::NoSensors);
    }
    let infos = priors.iter().map(|p| inv(p)).collect::<std::result::Result<Vec<_>, _>>()?;
    let total = infos.iter().skip(1).fold(infos[0].clone(), |acc, m| acc + m);
    Ok((symmetrize(&inv(&total)?), infos))
}

/// Fused covariance and the weights `P P_j⁻¹` that combine the group priors.
pub fn diffusion_weights(priors: &[&Matrix]) -> Result<(Matrix, Vec<Matrix>)> {
    let (p, infos) = diffusion_covariance(priors)?;
    let weights = infos.iter().map(|info| &p * info).collect();
    Ok((p, weights))
}

// Both forms apply the weights directly. Multiplying by the information
// matrices first and by P afterwards would scale each prior's rounding error
// by the condition number of P.
pub fn diffusion_update(priors: &[Belief]) -> Result<Belief> {
    let covs: Vec<&Matrix> = priors.iter().map(|b| &b.p).collect();
    let (p, weights) = diffusion_weights(&covs)?;
    let n = p.nrows();
    let mut x = Vector::zeros(n);
    for (b, w) in priors.iter().zip(&weights) {
        check_state(n, b.x.len(), &b.p)?;
        x += w * &b.x;
    }
    Ok(Belief { x, p })
}

/// Weighted average of encrypted group priors.
pub fn diffusion_update_enc(pk: &PublicKey, priors: &[EncBelief], frac_bits: u32) -> Result<EncBelief> {
    let covs: Vec<&Matrix> = priors.iter().map(|b| &b.p).collect();
    let (p, weights) = diffusion_weights(&covs)?;
    let n = p.nrows();
    let mut acc: Option<EncVector> = None;
    for (b, w) in priors.iter().zip(&weights) {
        check_state(n, b.x.len(), &b.p)?;
        let term = mat_enc_mul(pk, w, &b.x, frac_bits)?;
        acc = Some(match acc {
            None => term,
            Some(a) => enc_vec_add(pk, &a, &term)?,
        });
    }
    Ok(EncBelief {
        x: acc.expect("at least one prior"),
        p,
    })
}

/// Ground-truth states `x_0..=x_K` and readings `measurements[k-1][i]` for steps `1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub measurements: Vec<Vec<Vector>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.measurements.len()
    }
}

pub fn simulate_plant(model: &SystemModel, x0: &Vector, steps: usize, coins: &mut CoinStream) -> Result<Trajectory> {
    model.check_dims()?;
    check_state(model.n(), x0.len(), &Matrix::zeros(model.n(), model.n()))?;
    let lq = cholesky_or_zero(&model.q)?;
    let lr = model
        .sensors
        .iter()
        .map(|s| cholesky_or_zero(&s.r))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut states = vec![x0.clone()];
    let mut measurements = Vec::with_capacity(steps);
    for _ in 0..steps {
        let w = Vector::from_fn(model.n(), |_, _| coins.next_gaussian());
        let x = &model.f * states.last().expect("non-empty") + &lq * w;
        let ys = model
            .sensors
            .iter()
            .zip(&lr)
            .map(|(s, l)| {
                let v = Vector::from_fn(s.h.nrows(), |_, _| coins.next_gaussian());
                &s.h * &x + l * v
            })
            .collect();
        states.push(x);
        measurements.push(ys);
    }
    Ok(Trajectory { states, measurements })
}

/// Centralized filter that Protocol 1 must reproduce: posteriors for steps `1..=K`.
pub fn reference_parallel(model: &SystemModel, init: &Belief, measurements: &[Vec<Vector>]) -> Result<Vec<Belief>> {
    let mut b = init.clone();
    let mut out = Vec::with_capacity(measurements.len());
    for ys in measurements {
        let prior = time_update(model, &b)?;
        let readings: Vec<Option<Vector>> = ys.iter().cloned().map(Some).collect();
        b = measurement_update_parallel(&prior, &stack(model, &readings)?)?.0;
        out.push(b.clone());
    }
    Ok(out)
}

/// Same recursion with the covariance-form update.
pub fn reference_classical(model: &SystemModel, init: &Belief, measurements: &[Vec<Vector>]) -> Result<Vec<Belief>> {
    let mut b = init.clone();
    let mut out = Vec::with_capacity(measurements.len());
    for ys in measurements {
        let prior = time_update(model, &b)?;
        let readings: Vec<Option<Vector>> = ys.iter().cloned().map(Some).collect();
        b = classical_update(&prior, &stack(model, &readings)?)?.0;
        out.push(b.clone());
    }
    Ok(out)
}

/// Group-then-diffuse-then-predict filter that Protocol 2 must reproduce.
/// Returns the predicted global estimate after each step.
pub fn reference_diffusion(
    model: &SystemModel,
    groups: &[Vec<usize>],
    init: &Belief,
    measurements: &[Vec<Vector>],
) -> Result<Vec<Belief>> {
    let mut b = init.clone();
    let mut out = Vec::with_capacity(measurements.len());
    for ys in measurements {
        let priors = groups
            .iter()
            .map(|members| {
                let sensors: Vec<(&SensorModel, &Vector)> =
                    members.iter().map(|&i| (&model.sensors[i], &ys[i])).collect();
                group_measurement_update(&b, &sensors).map(|(g, _)| g)
            })
            .collect::<Result<Vec<_>>>()?;
        b = time_update(model, &diffusion_update(&priors)?)?;
        out.push(b.clone());
    }
    Ok(out)
}

/// Horizontal concatenation of the gains of the given sensors.
pub fn stacked_gains(gains: &[Matrix], members: &[usize]) -> Result<Matrix> {
    let blocks: Vec<Matrix> = members.iter().map(|&i| gains[i].clone()).collect();
    Ok(hstack(&blocks)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coins::Purpose;
    use crate::test_keys;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    fn scalar(v: f64) -> Matrix {
        m(1, 1, &[v])
    }

    fn v(data: &[f64]) -> Vector {
        Vector::from_row_slice(data)
    }

    fn random_spd(n: usize, coins: &mut CoinStream) -> Matrix {
        let a = Matrix::from_fn(n, n, |_, _| coins.next_gaussian());
        symmetrize(&(&a * a.transpose() + Matrix::identity(n, n) * 0.5))
    }

    pub(crate) fn random_model(n: usize, p: usize, sensors: usize, coins: &mut CoinStream) -> SystemModel {
        let f = Matrix::identity(n, n) + Matrix::from_fn(n, n, |_, _| 0.1 * coins.next_gaussian());
        let q = random_spd(n, coins) * 0.01;
        let sensors = (0..sensors)
            .map(|_| SensorModel {
                h: Matrix::from_fn(p, n, |_, _| coins.next_gaussian()),
                r: random_spd(p, coins) * 0.1,
            })
            .collect();
        SystemModel { f, q, sensors }
    }

    fn scalar_model(f: f64, q: f64, r: f64) -> SystemModel {
        SystemModel {
            f: scalar(f),
            q: scalar(q),
            sensors: vec![SensorModel {
                h: scalar(1.0),
                r: scalar(r),
            }],
        }
    }

    #[test]
    fn identity_time_update_is_a_no_op() {
        let model = SystemModel {
            f: Matrix::identity(2, 2),
            q: Matrix::zeros(2, 2),
            sensors: vec![],
        };
        let b = Belief {
            x: v(&[1.0, -2.0]),
            p: m(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        };
        assert_eq!(time_update(&model, &b).unwrap(), b);
    }

    #[test]
    fn scalar_time_update() {
        let model = scalar_model(2.0, 1.0, 1.0);
        let b = time_update(&model, &Belief { x: v(&[3.0]), p: scalar(1.0) }).unwrap();
        assert_eq!(b.x[0], 6.0);
        assert_eq!(b.p[(0, 0)], 5.0);
    }

    #[test]
    fn encrypted_time_update_matches_plaintext() {
        let (pk, sk) = test_keys::k512();
        let mut coins = CoinStream::new(41, Purpose::Noise);
        let model = random_model(4, 2, 1, &mut coins);
        let b = Belief {
            x: Vector::from_fn(4, |_, _| coins.uniform(-10.0, 10.0)),
            p: random_spd(4, &mut coins),
        };
        let mut enc_coins = CoinStream::new(41, Purpose::Encryption);
        let eb = EncBelief {
            x: EncVector::encrypt(&pk, &b.x, 40, &mut enc_coins).unwrap(),
            p: b.p.clone(),
        };
        let plain = time_update(&model, &b).unwrap();
        let enc = time_update_enc(&pk, &model, &eb, 40).unwrap();
        assert!((enc.x.decrypt(&sk).unwrap() - plain.x).amax() <= 1e-9);
        assert_eq!(enc.p, plain.p);
    }

    #[test]
    fn stack_orders_by_sensor_and_reports_gaps() {
        let model = SystemModel {
            f: Matrix::identity(2, 2),
            q: Matrix::zeros(2, 2),
            sensors: vec![
                SensorModel {
                    h: m(1, 2, &[1.0, 0.0]),
                    r: scalar(2.0),
                },
                SensorModel {
                    h: m(1, 2, &[0.0, 1.0]),
                    r: scalar(3.0),
                },
            ],
        };
        let st = stack(&model, &[Some(v(&[5.0])), Some(v(&[7.0]))]).unwrap();
        assert_eq!(st.y, v(&[5.0, 7.0]));
        assert_eq!(st.h, Matrix::identity(2, 2));
        assert_eq!(st.r, m(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert_eq!(
            stack(&model, &[Some(v(&[5.0])), None]),
            Err(KalmanError::IncompleteRound { missing: vec![1] })
        );
        assert!(matches!(
            stack(&model, &[Some(v(&[5.0, 1.0])), Some(v(&[7.0]))]),
            Err(KalmanError::Dimension(_))
        ));
        let single = SystemModel {
            sensors: vec![model.sensors[0].clone()],
            ..model.clone()
        };
        let st = stack(&single, &[Some(v(&[5.0]))]).unwrap();
        assert_eq!((st.y, st.h), (v(&[5.0]), model.sensors[0].h.clone()));
    }

    #[test]
    fn scalar_measurement_update_has_half_gain() {
        let model = scalar_model(1.0, 0.0, 1.0);
        let prior = Belief { x: v(&[2.0]), p: scalar(1.0) };
        let st = stack(&model, &[Some(v(&[4.0]))]).unwrap();
        let (post, gains) = measurement_update_parallel(&prior, &st).unwrap();
        assert_eq!(post.p[(0, 0)], 0.5);
        assert_eq!(gains.per_sensor[0][(0, 0)], 0.5);
        assert_eq!(post.x[0], 3.0);
    }

    #[test]
    fn uninformative_measurement_changes_nothing() {
        let model = scalar_model(1.0, 0.0, 1e12);
        let prior = Belief { x: v(&[2.0]), p: scalar(1.5) };
        let st = stack(&model, &[Some(v(&[1e3]))]).unwrap();
        let (post, _) = measurement_update_parallel(&prior, &st).unwrap();
        assert!(((post.x[0] - 2.0) / 2.0).abs() <= 1e-6);
        assert!(((post.p[(0, 0)] - 1.5) / 1.5).abs() <= 1e-6);
    }

    #[test]
    fn information_form_equals_classical_form() {
        let mut coins = CoinStream::new(5, Purpose::Noise);
        for _ in 0..50 {
            let model = random_model(6, 3, 4, &mut coins);
            let prior = Belief {
                x: Vector::from_fn(6, |_, _| coins.next_gaussian()),
                p: random_spd(6, &mut coins),
            };
            let ys: Vec<Option<Vector>> = (0..4).map(|_| Some(Vector::from_fn(3, |_, _| coins.next_gaussian()))).collect();
            let st = stack(&model, &ys).unwrap();
            let (info, gains) = measurement_update_parallel(&prior, &st).unwrap();
            let (classic, classic_gain) = classical_update(&prior, &st).unwrap();
            assert!((&info.p - &classic.p).amax() <= 1e-8);
            assert!((&gains.gain - classic_gain).amax() <= 1e-8);
            assert!((&info.x - &classic.x).amax() <= 1e-8);
            assert!(matlib::min_eigenvalue(&info.p) >= -1e-9);
            assert_eq!(info.p, info.p.transpose());
        }
    }

    #[test]
    fn encrypted_measurement_update_matches_plaintext() {
        let (pk, sk) = test_keys::k512();
        let mut coins = CoinStream::new(6, Purpose::Noise);
        let mut enc_coins = CoinStream::new(6, Purpose::Encryption);
        let model = random_model(6, 3, 4, &mut coins);
        let prior = Belief {
            x: Vector::from_fn(6, |_, _| coins.uniform(-5.0, 5.0)),
            p: random_spd(6, &mut coins),
        };
        let ys: Vec<Vector> = (0..4).map(|_| Vector::from_fn(3, |_, _| coins.uniform(-5.0, 5.0))).collect();
        let st = stack(&model, &ys.iter().cloned().map(Some).collect::<Vec<_>>()).unwrap();
        let enc_ys: Vec<Option<EncVector>> = ys
            .iter()
            .map(|y| Some(EncVector::encrypt(&pk, y, 40, &mut enc_coins).unwrap()))
            .collect();
        let est = stack(&model, &enc_ys).unwrap();
        let eprior = EncBelief {
            x: EncVector::encrypt(&pk, &prior.x, 40, &mut enc_coins).unwrap(),
            p: prior.p.clone(),
        };
        let (plain, _) = measurement_update_parallel(&prior, &st).unwrap();
        let (enc, _) = measurement_update_parallel_enc(&pk, &eprior, &est, 40).unwrap();
        assert!((enc.x.decrypt(&sk).unwrap() - plain.x).amax() <= 1e-8);
        assert_eq!(enc.p, plain.p);
    }

    #[test]
    fn group_update_cases() {
        let prev = Belief { x: v(&[0.0]), p: scalar(1.0) };
        assert_eq!(group_measurement_update(&prev, &[]), Err(KalmanError::NoSensors));
        let s = SensorModel {
            h: scalar(1.0),
            r: scalar(1.0),
        };
        let (two, gains) = group_measurement_update(&prev, &[(&s, &v(&[3.0])), (&s, &v(&[6.0]))]).unwrap();
        assert!((two.p[(0, 0)] - 1.0 / 3.0).abs() <= 1e-15);
        assert!((two.x[0] - 3.0).abs() <= 1e-12);
        assert_eq!(gains.len(), 2);
        let (one, _) = group_measurement_update(&prev, &[(&s, &v(&[4.0]))]).unwrap();
        let st = stack(&scalar_model(1.0, 0.0, 1.0), &[Some(v(&[4.0]))]).unwrap();
        let (parallel, _) = measurement_update_parallel(&prev, &st).unwrap();
        assert!((one.x[0] - parallel.x[0]).abs() <= 1e-15);
        assert!((one.p[(0, 0)] - parallel.p[(0, 0)]).abs() <= 1e-15);
    }

    #[test]
    fn diffusion_cases() {
        let one = Belief {
            x: v(&[1.0, 2.0]),
            p: m(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        };
        let fused = diffusion_update(std::slice::from_ref(&one)).unwrap();
        assert!((&fused.x - &one.x).amax() <= 1e-12);
        assert!((&fused.p - &one.p).amax() <= 1e-12);
        let same = diffusion_update(&[one.clone(), one.clone(), one.clone()]).unwrap();
        assert!((&same.x - &one.x).amax() <= 1e-12);

        let a = Belief { x: v(&[1.0]), p: scalar(2.0) };
        let b = Belief { x: v(&[3.0]), p: scalar(2.0) };
        let fused = diffusion_update(&[a, b]).unwrap();
        assert_eq!((fused.x[0], fused.p[(0, 0)]), (2.0, 1.0));
    }

    #[test]
    fn encrypted_diffusion_matches_plaintext() {
        let (pk, sk) = test_keys::k512();
        let mut coins = CoinStream::new(8, Purpose::Noise);
        let mut enc_coins = CoinStream::new(8, Purpose::Encryption);
        let priors: Vec<Belief> = (0..3)
            .map(|_| Belief {
                x: Vector::from_fn(3, |_, _| coins.uniform(-10.0, 10.0)),
                p: random_spd(3, &mut coins),
            })
            .collect();
        let enc: Vec<EncBelief> = priors
            .iter()
            .map(|b| EncBelief {
                x: EncVector::encrypt(&pk, &b.x, 40, &mut enc_coins).unwrap(),
                p: b.p.clone(),
            })
            .collect();
        let plain = diffusion_update(&priors).unwrap();
        let fused = diffusion_update_enc(&pk, &enc, 40).unwrap();
        assert!((fused.x.decrypt(&sk).unwrap() - plain.x).amax() <= 1e-10);
        assert_eq!(fused.p, plain.p);
    }

    #[test]
    fn noiseless_plant_follows_the_model() {
        let model = SystemModel {
            f: m(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            q: Matrix::zeros(2, 2),
            sensors: vec![SensorModel {
                h: m(1, 2, &[1.0, 0.0]),
                r: Matrix::zeros(1, 1),
            }],
        };
        let x0 = v(&[0.0, 1.0]);
        let mut coins = CoinStream::new(1, Purpose::Noise);
        let traj = simulate_plant(&model, &x0, 5, &mut coins).unwrap();
        let mut x = x0.clone();
        for k in 0..5 {
            x = &model.f * x;
            assert_eq!(traj.states[k + 1], x);
            assert_eq!(traj.measurements[k][0], &model.sensors[0].h * &x);
        }
        let again = simulate_plant(&model, &x0, 5, &mut CoinStream::new(1, Purpose::Noise)).unwrap();
        assert_eq!(traj, again);
    }

    #[test]
    fn process_noise_has_the_model_covariance() {
        let q = m(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let model = SystemModel {
            f: Matrix::zeros(2, 2),
            q: q.clone(),
            sensors: vec![],
        };
        let mut coins = CoinStream::new(2, Purpose::Noise);
        let traj = simulate_plant(&model, &Vector::zeros(2), 100_000, &mut coins).unwrap();
        let mut cov = Matrix::zeros(2, 2);
        for x in &traj.states[1..] {
            cov += x * x.transpose();
        }
        cov /= 100_000.0;
        for (est, truth) in cov.iter().zip(q.iter()) {
            assert!((est - truth).abs() <= 0.05 * truth.abs(), "{cov}");
        }
    }

    #[test]
    fn validation_rejects_bad_covariances() {
        let mut model = scalar_model(1.0, 1.0, 1.0);
        assert!(model.validate().is_ok());
        model.sensors[0].r = scalar(-1.0);
        assert!(matches!(model.validate(), Err(KalmanError::Covariance(_))));
        let mut model = scalar_model(1.0, -1.0, 1.0);
        assert!(matches!(model.validate(), Err(KalmanError::Covariance(_))));
        model.q = m(1, 2, &[1.0, 1.0]);
        assert!(matches!(model.validate(), Err(KalmanError::Dimension(_))));
    }

    #[test]
    fn reference_filters_agree() {
        let mut coins = CoinStream::new(9, Purpose::Noise);
        let model = random_model(4, 2, 3, &mut coins);
        let init = Belief {
            x: Vector::zeros(4),
            p: Matrix::identity(4, 4),
        };
        let traj = simulate_plant(&model, &Vector::from_element(4, 1.0), 30, &mut coins).unwrap();
        let a = reference_parallel(&model, &init, &traj.measurements).unwrap();
        let b = reference_classical(&model, &init, &traj.measurements).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((&x.x - &y.x).amax() <= 1e-8);
        }
    }
}
