//! Paillier additively homomorphic encryption with generator `g = n + 1`.
//!
//! Ciphertexts carry a fingerprint of the modulus they were produced under so
//! that mixing keys is caught instead of silently producing garbage.

pub mod prime;

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coins::{CoinStream, Purpose};

/// Smallest accepted modulus size for generated keys.
pub const MIN_KEY_BITS: u64 = 8;
/// Key size used by the test suite and quick runs.
pub const TEST_KEY_BITS: u64 = 512;
/// Default key size.
pub const DEFAULT_KEY_BITS: u64 = 2048;

const KEYGEN_ATTEMPTS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PheError {
    #[error("cannot generate a {bits}-bit key: {reason}")]
    Keygen { bits: u64, reason: String },
    #[error("plaintext out of range [0, n)")]
    PlaintextRange,
    #[error("ciphertext produced under a different public key")]
    KeyMismatch,
    #[error("malformed ciphertext: {0}")]
    Ciphertext(&'static str),
}

/// 64-bit tag derived from the modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyFingerprint(pub u64);

impl KeyFingerprint {
    fn of(n: &BigUint) -> Self {
        KeyFingerprint(n.iter_u64_digits().next().unwrap_or(0))
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({} bits, {:?})", self.bits(), self.fingerprint())
    }
}

impl PublicKey {
    /// Builds a key from a modulus. `n` must be odd and at least 15.
    pub fn from_modulus(n: BigUint) -> Result<Self, PheError> {
        if n < BigUint::from(15u32) || n.is_even() {
            return Err(PheError::Keygen {
                bits: n.bits(),
                reason: "modulus must be an odd two-prime product >= 15".into(),
            });
        }
        let n_squared = &n * &n;
        Ok(PublicKey { n, n_squared })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn g(&self) -> BigUint {
        &self.n + 1u32
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    pub fn fingerprint(&self) -> KeyFingerprint {
        KeyFingerprint::of(&self.n)
    }

    /// Draws an encryption nonce `r` in `[1, n)` coprime to `n`.
    pub fn draw_nonce(&self, coins: &mut CoinStream) -> BigUint {
        loop {
            let r = coins.next_below(&self.n);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    /// The deterministic encryption of zero, `1`. Useful as an accumulator seed.
    pub fn zero_ciphertext(&self) -> RawCiphertext {
        RawCiphertext {
            value: BigUint::one(),
            key: self.fingerprint(),
        }
    }

    /// Wraps a raw residue as a ciphertext under this key after range checks.
    pub fn ciphertext_from_value(&self, value: BigUint) -> Result<RawCiphertext, PheError> {
        if value.is_zero() || value >= self.n_squared {
            return Err(PheError::Ciphertext("value outside [1, n^2)"));
        }
        Ok(RawCiphertext {
            value,
            key: self.fingerprint(),
        })
    }

    fn check(&self, c: &RawCiphertext) -> Result<(), PheError> {
        if c.key != self.fingerprint() {
            return Err(PheError::KeyMismatch);
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateKey {
    p: BigUint,
    q: BigUint,
    lambda: BigUint,
    mu: BigUint,
    // CRT decryption constants
    p_squared: BigUint,
    q_squared: BigUint,
    hp: BigUint,
    hq: BigUint,
    q_inv_p: BigUint,
    public: PublicKey,
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrivateKey(for {:?})", self.public)
    }
}

impl PrivateKey {
    /// Assembles a key pair from two distinct primes.
    pub fn from_primes(p: BigUint, q: BigUint) -> Result<Self, PheError> {
        let bits = (&p * &q).bits();
        let fail = |reason: &str| PheError::Keygen {
            bits,
            reason: reason.to_string(),
        };
        if p == q {
            return Err(fail("p and q must differ"));
        }
        let mut witness = CoinStream::new(0, Purpose::Keygen);
        if !prime::is_probable_prime(&p, &mut witness) || !prime::is_probable_prime(&q, &mut witness)
        {
            return Err(fail("p and q must be prime"));
        }
        let n = &p * &q;
        let one = BigUint::one();
        let pm1 = &p - &one;
        let qm1 = &q - &one;
        if !n.gcd(&(&pm1 * &qm1)).is_one() {
            return Err(fail("gcd(n, phi(n)) != 1"));
        }
        let public = PublicKey::from_modulus(n.clone())?;
        let lambda = pm1.lcm(&qm1);
        let mu = lambda
            .modinv(&n)
            .ok_or_else(|| fail("lambda not invertible mod n"))?;

        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let g = public.g();
        let hp = l_function(&g.modpow(&pm1, &p_squared), &p)
            .modinv(&p)
            .ok_or_else(|| fail("degenerate CRT constant"))?;
        let hq = l_function(&g.modpow(&qm1, &q_squared), &q)
            .modinv(&q)
            .ok_or_else(|| fail("degenerate CRT constant"))?;
        let q_inv_p = q.modinv(&p).ok_or_else(|| fail("q not invertible mod p"))?;

        Ok(PrivateKey {
            p,
            q,
            lambda,
            mu,
            p_squared,
            q_squared,
            hp,
            hq,
            q_inv_p,
            public,
        })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn primes(&self) -> (&BigUint, &BigUint) {
        (&self.p, &self.q)
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }
}

/// `L(u) = (u - 1) / d`.
fn l_function(u: &BigUint, d: &BigUint) -> BigUint {
    (u - 1u32) / d
}

/// A Paillier ciphertext: a unit of `Z*_{n^2}`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawCiphertext {
    value: BigUint,
    key: KeyFingerprint,
}

impl fmt::Debug for RawCiphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hex = self.value.to_str_radix(16);
        let head = &hex[..hex.len().min(12)];
        write!(f, "RawCiphertext({head}..)")
    }
}

impl RawCiphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn fingerprint(&self) -> KeyFingerprint {
        self.key
    }
}

/// Generates a key pair whose modulus has exactly `bit_length` bits.
pub fn keygen(bit_length: u64, coins: &mut CoinStream) -> Result<(PublicKey, PrivateKey), PheError> {
    if bit_length < MIN_KEY_BITS {
        return Err(PheError::Keygen {
            bits: bit_length,
            reason: format!("need at least {MIN_KEY_BITS} bits"),
        });
    }
    let p_bits = bit_length / 2;
    let q_bits = bit_length - p_bits;
    let prime_attempts = 64 * bit_length as usize + 1024;
    for _ in 0..KEYGEN_ATTEMPTS {
        let Some(p) = prime::random_prime(p_bits, coins, prime_attempts) else {
            continue;
        };
        let Some(q) = prime::random_prime(q_bits, coins, prime_attempts) else {
            continue;
        };
        if p == q || (&p * &q).bits() != bit_length {
            continue;
        }
        if let Ok(sk) = PrivateKey::from_primes(p, q) {
            return Ok((sk.public.clone(), sk));
        }
    }
    Err(PheError::Keygen {
        bits: bit_length,
        reason: "no suitable prime pair found".into(),
    })
}

/// Encrypts `m` in `[0, n)` with a fresh nonce from `coins`.
pub fn encrypt(pk: &PublicKey, m: &BigUint, coins: &mut CoinStream) -> Result<RawCiphertext, PheError> {
    if m >= &pk.n {
        return Err(PheError::PlaintextRange);
    }
    let r = pk.draw_nonce(coins);
    Ok(encrypt_with_nonce(pk, m, &r))
}

/// `c = (1 + m n) r^n mod n^2`. The caller guarantees `m < n` and `gcd(r, n) = 1`.
pub fn encrypt_with_nonce(pk: &PublicKey, m: &BigUint, r: &BigUint) -> RawCiphertext {
    let gm = (BigUint::one() + m * &pk.n) % &pk.n_squared;
    let rn = r.modpow(&pk.n, &pk.n_squared);
    RawCiphertext {
        value: (gm * rn) % &pk.n_squared,
        key: pk.fingerprint(),
    }
}

fn check_residue(sk: &PrivateKey, c: &RawCiphertext) -> Result<(), PheError> {
    sk.public.check(c)?;
    if c.value.is_zero() || c.value >= sk.public.n_squared {
        return Err(PheError::Ciphertext("value outside [1, n^2)"));
    }
    if !c.value.gcd(&sk.public.n).is_one() {
        return Err(PheError::Ciphertext("not a unit modulo n^2"));
    }
    Ok(())
}

/// Decrypts via the Chinese remainder theorem.
pub fn decrypt(sk: &PrivateKey, c: &RawCiphertext) -> Result<BigUint, PheError> {
    check_residue(sk, c)?;
    let one = BigUint::one();
    let mp = (l_function(
        &c.value.modpow(&(&sk.p - &one), &sk.p_squared),
        &sk.p,
    ) * &sk.hp)
        % &sk.p;
    let mq = (l_function(
        &c.value.modpow(&(&sk.q - &one), &sk.q_squared),
        &sk.q,
    ) * &sk.hq)
        % &sk.q;
    // m = mq + q * ((mp - mq) * q^-1 mod p)
    let diff = (&mp + &sk.p - (&mq % &sk.p)) % &sk.p;
    let h = (diff * &sk.q_inv_p) % &sk.p;
    Ok(mq + h * &sk.q)
}

/// Textbook decryption `L(c^lambda mod n^2) * mu mod n`.
pub fn decrypt_textbook(sk: &PrivateKey, c: &RawCiphertext) -> Result<BigUint, PheError> {
    check_residue(sk, c)?;
    let n = &sk.public.n;
    let u = c.value.modpow(&sk.lambda, &sk.public.n_squared);
    Ok((l_function(&u, n) * &sk.mu) % n)
}

/// Homomorphic addition: decrypts to `(m1 + m2) mod n`.
pub fn add(pk: &PublicKey, c1: &RawCiphertext, c2: &RawCiphertext) -> Result<RawCiphertext, PheError> {
    pk.check(c1)?;
    pk.check(c2)?;
    Ok(RawCiphertext {
        value: (&c1.value * &c2.value) % &pk.n_squared,
        key: c1.key,
    })
}

/// Homomorphic negation: decrypts to `(-m) mod n`.
pub fn neg(pk: &PublicKey, c: &RawCiphertext) -> Result<RawCiphertext, PheError> {
    pk.check(c)?;
    let value = c
        .value
        .modinv(&pk.n_squared)
        .ok_or(PheError::Ciphertext("not a unit modulo n^2"))?;
    Ok(RawCiphertext { value, key: c.key })
}

/// Homomorphic subtraction: decrypts to `(m1 - m2) mod n`.
pub fn sub(pk: &PublicKey, c1: &RawCiphertext, c2: &RawCiphertext) -> Result<RawCiphertext, PheError> {
    add(pk, c1, &neg(pk, c2)?)
}

/// Plaintext-scalar multiplication: decrypts to `(k m) mod n`.
pub fn cmul(pk: &PublicKey, k: &BigUint, c: &RawCiphertext) -> Result<RawCiphertext, PheError> {
    pk.check(c)?;
    let k = k % &pk.n;
    Ok(RawCiphertext {
        value: c.value.modpow(&k, &pk.n_squared),
        key: c.key,
    })
}

/// Multiplies by a fresh encryption of zero; the plaintext is unchanged.
pub fn re_randomize(pk: &PublicKey, c: &RawCiphertext, coins: &mut CoinStream) -> Result<RawCiphertext, PheError> {
    pk.check(c)?;
    let r = pk.draw_nonce(coins);
    let rn = r.modpow(&pk.n, &pk.n_squared);
    Ok(RawCiphertext {
        value: (&c.value * rn) % &pk.n_squared,
        key: c.key,
    })
}
