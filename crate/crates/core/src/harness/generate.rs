//! Random scenarios for sweeps and attack matrices.

use crate::coins::{CoinStream, Purpose};
use crate::harness::scenario::{DataSource, ProtocolOptions, Scenario, Seeds, Visibility};
use crate::kalman::{Belief, SensorModel, SystemModel};
use crate::matlib::{Matrix, Vector};

/// Shape of a random scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub p: usize,
    pub sensors: usize,
    /// Number of groups; sensor `i` joins group `i % groups`.
    pub groups: Option<usize>,
    pub steps: usize,
    pub key_bits: u64,
}

fn uniform(coins: &mut CoinStream, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| coins.uniform(-1.0, 1.0))
}

/// `A Aᵀ / k + floor·I` for a random `A`; well away from singular.
fn random_spd(coins: &mut CoinStream, k: usize, floor: f64) -> Matrix {
    let a = uniform(coins, k, k);
    (&a * a.transpose()) / k as f64 + Matrix::identity(k, k) * floor
}

/// A stable, generically invertible model with dense observation matrices.
///
/// Every matrix is drawn from `seed`, so two calls with the same arguments
/// return the same scenario. The seeds for plant noise, keys and simulation
/// are derived from `seed` as well.
pub fn random_scenario(shape: Shape, seed: u64) -> Scenario {
    let Shape { n, p, sensors, groups, steps, key_bits } = shape;
    let mut coins = CoinStream::new(seed, Purpose::Noise);
    let f = Matrix::identity(n, n) * 0.95 + uniform(&mut coins, n, n) * 0.05;
    let q = random_spd(&mut coins, n, 0.1) * 0.01;
    let sensor_models = (0..sensors)
        .map(|_| SensorModel {
            h: uniform(&mut coins, p, n),
            r: random_spd(&mut coins, p, 0.5) * 0.1,
        })
        .collect();
    let x0 = Vector::from_fn(n, |_, _| coins.uniform(-1.0, 1.0));
    let groups = groups.map(|j| (0..j).map(|g| (0..sensors).filter(|i| i % j == g).collect()).collect());
    Scenario {
        name: format!("random-{seed}"),
        model: SystemModel {
            f,
            q,
            sensors: sensor_models,
        },
        groups,
        x0: x0.clone(),
        init: Belief {
            x: x0,
            p: Matrix::identity(n, n) * 0.5,
        },
        steps,
        key_bits,
        frac_bits: crate::encoding::DEFAULT_FRAC_BITS,
        visibility: Visibility::default(),
        seeds: Seeds::from_base(seed),
        data: DataSource::Synthetic { noiseless: false },
        options: ProtocolOptions::default(),
    }
}

/// Zeroes the last row of `F`, leaving it singular.
pub fn make_f_singular(s: &mut Scenario) {
    let n = s.n();
    s.model.f.row_mut(n - 1).fill(0.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlib::{default_rtol, rank};

    fn shape() -> Shape {
        Shape {
            n: 6,
            p: 3,
            sensors: 4,
            groups: Some(2),
            steps: 3,
            key_bits: 256,
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let a = random_scenario(shape(), 9);
        assert_eq!(a, random_scenario(shape(), 9));
        assert_ne!(a, random_scenario(shape(), 10));
        a.to_file().validate().unwrap();
        assert_eq!(a.groups_or_singletons(), vec![vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn singular_f_loses_rank() {
        let mut s = random_scenario(shape(), 1);
        assert_eq!(rank(&s.model.f, default_rtol(&s.model.f)).unwrap(), 6);
        make_f_singular(&mut s);
        assert_eq!(rank(&s.model.f, default_rtol(&s.model.f)).unwrap(), 5);
    }
}
