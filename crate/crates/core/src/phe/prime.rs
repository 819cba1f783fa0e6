//! Probable-prime generation for key material.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::coins::CoinStream;

/// Miller–Rabin rounds for candidates too large for trial division.
pub const MILLER_RABIN_ROUNDS: usize = 40;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Deterministic trial division; only meant for values below 2^32.
pub fn is_prime_small(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Probabilistic primality test. Witnesses are drawn from `coins`.
pub fn is_probable_prime(n: &BigUint, coins: &mut CoinStream) -> bool {
    if n.bits() <= 32 {
        let v = n.iter_u64_digits().next().unwrap_or(0);
        return is_prime_small(v);
    }
    for &p in SMALL_PRIMES.iter() {
        if (n % p).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let three = BigUint::from(3u32);
    let witness_range = n - &three; // witnesses in [2, n-2]

    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = coins.next_below(&witness_range) + 2u32;
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
            if x == one {
                return false;
            }
        }
        return false;
    }
    true
}

/// Random probable prime with exactly `bits` bits (top bit set).
///
/// Returns `None` when `bits < 2` or after `max_attempts` rejected candidates.
pub fn random_prime(bits: u64, coins: &mut CoinStream, max_attempts: usize) -> Option<BigUint> {
    if bits < 2 {
        return None;
    }
    let top = BigUint::one() << (bits - 1);
    for _ in 0..max_attempts {
        let mut candidate = coins.next_bits(bits) | &top;
        if bits > 2 && candidate.is_even() {
            candidate += 1u32;
            if candidate.bits() > bits {
                continue;
            }
        }
        if is_probable_prime(&candidate, coins) {
            return Some(candidate);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coins::Purpose;

    #[test]
    fn trial_division_matches_known_primes() {
        let primes: Vec<u64> = (0..60).filter(|&n| is_prime_small(n)).collect();
        assert_eq!(
            primes,
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59]
        );
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division_above_2_32() {
        let mut coins = CoinStream::new(3, Purpose::Keygen);
        let p = BigUint::from((1u64 << 32) + 15);
        let c = BigUint::from((1u64 << 32) + 17);
        assert_eq!(is_probable_prime(&p, &mut coins), is_prime_small((1u64 << 32) + 15));
        assert_eq!(is_probable_prime(&c, &mut coins), is_prime_small((1u64 << 32) + 17));
        // strong pseudoprime to bases 2, 3, 5, 7 times a prime
        let composite = BigUint::from(3_215_031_751u64) * BigUint::from(1_000_003u64);
        assert!(!is_probable_prime(&composite, &mut coins));
        // strong pseudoprime to every prime base up to 23
        let spsp = BigUint::from(3_825_123_056_546_413_051u64);
        assert!(!is_probable_prime(&spsp, &mut coins));
    }

    #[test]
    fn random_prime_has_requested_size() {
        let mut coins = CoinStream::new(11, Purpose::Keygen);
        for bits in [4u64, 9, 33, 128] {
            let p = random_prime(bits, &mut coins, 10_000).unwrap();
            assert_eq!(p.bits(), bits);
        }
    }
}
