//! Seeded, purpose-separated randomness.
//!
//! Every random draw in the crate (key generation, encryption nonces, plant
//! noise, simulator resampling) comes from a [`CoinStream`]. A stream is a
//! ChaCha20 generator keyed by a 64-bit seed, with the purpose tag and a party
//! index selecting an independent ChaCha stream, so runs replay exactly.

use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// What a stream of coins is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Purpose {
    Keygen,
    Encryption,
    Noise,
    Simulator,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Keygen => 1,
            Purpose::Encryption => 2,
            Purpose::Noise => 3,
            Purpose::Simulator => 4,
        }
    }
}

/// A deterministic random source with an optional log of big-integer draws.
///
/// The log lets a protocol party record the coins it tossed (encryption
/// nonces, primality witnesses) into its transcript.
#[derive(Debug, Clone)]
pub struct CoinStream {
    rng: ChaCha20Rng,
    purpose: Purpose,
    log: Option<Vec<BigUint>>,
}

impl CoinStream {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        Self::for_party(seed, purpose, 0)
    }

    /// Independent stream for one party; `party` selects the ChaCha stream id.
    pub fn for_party(seed: u64, purpose: Purpose, party: u32) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream((purpose.tag() << 32) | u64::from(party));
        CoinStream {
            rng,
            purpose,
            log: None,
        }
    }

    pub fn purpose(&self) -> Purpose {
        self.purpose
    }

    /// Start recording big-integer draws.
    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    /// Take the draws recorded since the last call.
    pub fn drain_log(&mut self) -> Vec<BigUint> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform integer with exactly `bits` random bits (top bit not forced).
    pub fn next_bits(&mut self, bits: u64) -> BigUint {
        let out = self.raw_bits(bits);
        self.record(&out);
        out
    }

    fn raw_bits(&mut self, bits: u64) -> BigUint {
        let nbytes = bits.div_ceil(8) as usize;
        let mut buf = vec![0u8; nbytes];
        self.rng.fill_bytes(&mut buf);
        let excess = nbytes as u64 * 8 - bits;
        if excess > 0 {
            buf[0] &= 0xffu8 >> excess;
        }
        BigUint::from_bytes_be(&buf)
    }

    /// Uniform integer in `[0, bound)` by rejection sampling.
    pub fn next_below(&mut self, bound: &BigUint) -> BigUint {
        assert!(bound > &BigUint::ZERO, "empty sampling range");
        let bits = bound.bits();
        loop {
            let candidate = self.raw_bits(bits);
            if &candidate < bound {
                self.record(&candidate);
                return candidate;
            }
        }
    }

    pub fn next_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn next_gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    fn record(&mut self, value: &BigUint) {
        if let Some(log) = self.log.as_mut() {
            log.push(value.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = CoinStream::new(7, Purpose::Encryption);
        let mut b = CoinStream::new(7, Purpose::Encryption);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn purposes_are_independent() {
        let mut a = CoinStream::new(7, Purpose::Encryption);
        let mut b = CoinStream::new(7, Purpose::Noise);
        assert_ne!(a.next_u64(), b.next_u64());
        let mut c = CoinStream::for_party(7, Purpose::Encryption, 1);
        let mut d = CoinStream::for_party(7, Purpose::Encryption, 2);
        assert_ne!(c.next_u64(), d.next_u64());
    }

    #[test]
    fn below_respects_bound_and_logs() {
        let mut coins = CoinStream::new(1, Purpose::Keygen).with_log();
        let bound = BigUint::from(35u32);
        for _ in 0..200 {
            assert!(coins.next_below(&bound) < bound);
        }
        assert_eq!(coins.drain_log().len(), 200);
        assert!(coins.drain_log().is_empty());
    }
}
