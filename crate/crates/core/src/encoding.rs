//! Fixed-point encoding of signed reals into Paillier plaintexts.
//!
//! A real `x` is stored as a mantissa `m` in `[0, n)` and a binary exponent
//! `e`, with value `signed(m) / 2^e`. Mantissas above `n / 2` represent
//! negative numbers. Every ciphertext carries its exponent; additions align
//! the lower-exponent operand by a plaintext multiplication with `2^Δ`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{Float, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coins::CoinStream;
use crate::phe::{self, PheError, PrivateKey, PublicKey, RawCiphertext};

/// Default number of fractional bits.
pub const DEFAULT_FRAC_BITS: u32 = 40;
/// Headroom kept between the largest exponent and the key size.
pub const GUARD_BITS: u64 = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("value does not fit in the plaintext space at this precision")]
    EncodeOverflow,
    #[error("cannot encode a non-finite value")]
    NonFinite,
    #[error("exponent {exponent} exceeds the budget of {budget} bits")]
    ExponentBudgetExceeded { exponent: u64, budget: u64 },
    #[error(transparent)]
    Phe(#[from] PheError),
}

/// Largest exponent a ciphertext under `pk` may carry.
pub fn exponent_budget(pk: &PublicKey) -> u64 {
    pk.bits().saturating_sub(GUARD_BITS)
}

fn check_budget(pk: &PublicKey, exponent: u64) -> Result<(), EncodingError> {
    let budget = exponent_budget(pk);
    if exponent > budget {
        return Err(EncodingError::ExponentBudgetExceeded { exponent, budget });
    }
    Ok(())
}

/// A plaintext mantissa with its binary exponent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoded {
    pub mantissa: BigUint,
    pub exponent: u32,
}

/// An encrypted fixed-point number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    pub raw: RawCiphertext,
    pub exponent: u32,
}

/// Interprets a mantissa in `[0, n)` as a signed integer.
pub fn signed(mantissa: &BigUint, pk: &PublicKey) -> BigInt {
    let n = pk.n();
    if mantissa.clone() * 2u32 < *n {
        BigInt::from(mantissa.clone())
    } else {
        BigInt::from(mantissa.clone()) - BigInt::from(n.clone())
    }
}

/// Maps a signed integer into `[0, n)`, rejecting `|v| >= n / 2`.
pub fn wrap_signed(value: &BigInt, pk: &PublicKey) -> Result<BigUint, EncodingError> {
    let magnitude = value.magnitude();
    if magnitude * 2u32 >= *pk.n() {
        return Err(EncodingError::EncodeOverflow);
    }
    Ok(match value.sign() {
        Sign::Minus => pk.n() - magnitude,
        _ => magnitude.clone(),
    })
}

/// `round(x * 2^frac_bits)` computed exactly from the binary representation of `x`.
pub fn scale_round(x: f64, frac_bits: u32) -> Result<BigInt, EncodingError> {
    if !x.is_finite() {
        return Err(EncodingError::NonFinite);
    }
    if x == 0.0 {
        return Ok(BigInt::zero());
    }
    let (mantissa, exp, sign) = Float::integer_decode(x);
    let shift = i64::from(exp) + i64::from(frac_bits);
    let m = BigUint::from(mantissa);
    let magnitude = if shift >= 0 {
        m << (shift as u64)
    } else {
        let s = (-shift) as u64;
        let truncated = &m >> s;
        let half_bit = (&m >> (s - 1)) & BigUint::from(1u32);
        if half_bit.is_zero() {
            truncated
        } else {
            truncated + 1u32
        }
    };
    let sign = if sign < 0 { Sign::Minus } else { Sign::Plus };
    Ok(BigInt::from_biguint(sign, magnitude))
}

/// `x * 2^k` without overflowing the intermediate power.
fn ldexp(mut x: f64, mut k: i64) -> f64 {
    while k > 1000 {
        x *= 2f64.powi(1000);
        k -= 1000;
    }
    while k < -1000 {
        x *= 2f64.powi(-1000);
        k += 1000;
    }
    x * 2f64.powi(k as i32)
}

/// Converts `value / 2^exponent` to the nearest `f64`.
pub fn to_real(value: &BigInt, exponent: u32) -> f64 {
    let bits = value.bits();
    let (v, extra) = if bits > 960 {
        let shift = bits - 960;
        (value >> shift, shift as i64)
    } else {
        (value.clone(), 0)
    };
    let f = v.to_f64().unwrap_or(f64::NAN);
    ldexp(f, extra - i64::from(exponent))
}

pub fn encode(x: f64, frac_bits: u32, pk: &PublicKey) -> Result<Encoded, EncodingError> {
    let scaled = scale_round(x, frac_bits)?;
    Ok(Encoded {
        mantissa: wrap_signed(&scaled, pk)?,
        exponent: frac_bits,
    })
}

pub fn decode(e: &Encoded, pk: &PublicKey) -> f64 {
    to_real(&signed(&e.mantissa, pk), e.exponent)
}

pub fn encrypt_encoded(pk: &PublicKey, e: &Encoded, coins: &mut CoinStream) -> Result<Ciphertext, EncodingError> {
    check_budget(pk, u64::from(e.exponent))?;
    Ok(Ciphertext {
        raw: phe::encrypt(pk, &e.mantissa, coins)?,
        exponent: e.exponent,
    })
}

pub fn encrypt_real(pk: &PublicKey, x: f64, frac_bits: u32, coins: &mut CoinStream) -> Result<Ciphertext, EncodingError> {
    encrypt_encoded(pk, &encode(x, frac_bits, pk)?, coins)
}

pub fn decrypt_encoded(sk: &PrivateKey, c: &Ciphertext) -> Result<Encoded, EncodingError> {
    Ok(Encoded {
        mantissa: phe::decrypt(sk, &c.raw)?,
        exponent: c.exponent,
    })
}

pub fn decrypt_real(sk: &PrivateKey, c: &Ciphertext) -> Result<f64, EncodingError> {
    Ok(decode(&decrypt_encoded(sk, c)?, sk.public_key()))
}

/// Multiplies by a signed integer scalar; negative scalars go through one inversion.
pub fn cmul_signed(pk: &PublicKey, k: &BigInt, c: &RawCiphertext) -> Result<RawCiphertext, PheError> {
    let product = phe::cmul(pk, k.magnitude(), c)?;
    if k.sign() == Sign::Minus {
        phe::neg(pk, &product)
    } else {
        Ok(product)
    }
}

/// Raises the exponent of `c` to `target` by multiplying with `2^(target - e)`.
pub fn align(pk: &PublicKey, c: &Ciphertext, target: u32) -> Result<Ciphertext, EncodingError> {
    if target < c.exponent {
        return Err(EncodingError::EncodeOverflow);
    }
    if target == c.exponent {
        return Ok(c.clone());
    }
    check_budget(pk, u64::from(target))?;
    let factor = BigUint::from(1u32) << (target - c.exponent);
    Ok(Ciphertext {
        raw: phe::cmul(pk, &factor, &c.raw)?,
        exponent: target,
    })
}

pub fn enc_add(pk: &PublicKey, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, EncodingError> {
    let target = a.exponent.max(b.exponent);
    let a = align(pk, a, target)?;
    let b = align(pk, b, target)?;
    Ok(Ciphertext {
        raw: phe::add(pk, &a.raw, &b.raw)?,
        exponent: target,
    })
}

pub fn enc_sub(pk: &PublicKey, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, EncodingError> {
    let target = a.exponent.max(b.exponent);
    let a = align(pk, a, target)?;
    let b = align(pk, b, target)?;
    Ok(Ciphertext {
        raw: phe::sub(pk, &a.raw, &b.raw)?,
        exponent: target,
    })
}

/// Multiplies by an encoded plaintext; exponents add.
pub fn enc_cmul(pk: &PublicKey, k: &Encoded, c: &Ciphertext) -> Result<Ciphertext, EncodingError> {
    let exponent = u64::from(k.exponent) + u64::from(c.exponent);
    check_budget(pk, exponent)?;
    let scalar = signed(&k.mantissa, pk);
    Ok(Ciphertext {
        raw: cmul_signed(pk, &scalar, &c.raw)?,
        exponent: exponent as u32,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coins::Purpose;
    use crate::test_keys;

    #[test]
    fn zero_encodes_to_zero_mantissa() {
        let (pk, _) = test_keys::toy();
        for f in [0, 3, 40] {
            let e = encode(0.0, f, &pk).unwrap();
            assert!(e.mantissa.is_zero());
        }
    }

    #[test]
    fn negative_wraps_into_upper_half() {
        let (pk, _) = test_keys::toy();
        let e = encode(-1.5, 1, &pk).unwrap();
        assert_eq!(e.mantissa, BigUint::from(32u32));
        assert_eq!(e.exponent, 1);
        assert_eq!(decode(&e, &pk), -1.5);
        assert_eq!(decode(&encode(8.5, 1, &pk).unwrap(), &pk), 8.5);
        assert_eq!(encode(9.0, 1, &pk), Err(EncodingError::EncodeOverflow));
        assert_eq!(encode(f64::NAN, 1, &pk), Err(EncodingError::NonFinite));
    }

    #[test]
    fn rounding_is_to_nearest() {
        let (pk, _) = test_keys::k512();
        assert_eq!(scale_round(0.3, 0).unwrap(), BigInt::from(0));
        assert_eq!(scale_round(0.5, 0).unwrap(), BigInt::from(1));
        assert_eq!(scale_round(-2.5, 0).unwrap(), BigInt::from(-3));
        assert_eq!(scale_round(1e300, 4).unwrap(), BigInt::from(0) + scale_round(1e300, 0).unwrap() * 16);
        let e = encode(1.0 / 3.0, 10, &pk).unwrap();
        assert!((decode(&e, &pk) - 1.0 / 3.0).abs() <= 2f64.powi(-11));
    }

    #[test]
    fn round_trip_error_bound() {
        let (pk, sk) = test_keys::k512();
        let mut coins = CoinStream::new(9, Purpose::Noise);
        let mut enc = CoinStream::new(9, Purpose::Encryption);
        let mut worst = 0f64;
        for i in 0..10_000 {
            let x = coins.uniform(-1e3, 1e3);
            let e = encode(x, 40, &pk).unwrap();
            worst = worst.max((decode(&e, &pk) - x).abs());
            if i % 500 == 0 {
                let c = encrypt_encoded(&pk, &e, &mut enc).unwrap();
                assert!((decrypt_real(&sk, &c).unwrap() - x).abs() <= 2f64.powi(-41));
            }
        }
        assert!(worst <= 2f64.powi(-41), "worst {worst}");
    }

    #[test]
    fn add_aligns_exponents() {
        let (pk, sk) = test_keys::k512();
        let mut coins = CoinStream::new(1, Purpose::Encryption);
        let a = encrypt_real(&pk, 1.25, 2, &mut coins).unwrap();
        let b = encrypt_real(&pk, -3.03125, 5, &mut coins).unwrap();
        let s = enc_add(&pk, &a, &b).unwrap();
        assert_eq!(s.exponent, 5);
        assert_eq!(decrypt_real(&sk, &s).unwrap(), 1.25 - 3.03125);
        let zero = encrypt_real(&pk, 0.0, 40, &mut coins).unwrap();
        let x = encrypt_real(&pk, 17.75, 40, &mut coins).unwrap();
        assert_eq!(decrypt_real(&sk, &enc_add(&pk, &zero, &x).unwrap()).unwrap(), 17.75);
        let d = enc_sub(&pk, &x, &x).unwrap();
        assert_eq!(decrypt_real(&sk, &d).unwrap(), 0.0);
    }

    #[test]
    fn hundred_term_sum_matches_plaintext_accumulator() {
        let (pk, sk) = test_keys::k512();
        let mut noise = CoinStream::new(2, Purpose::Noise);
        let mut coins = CoinStream::new(2, Purpose::Encryption);
        // exact accumulator over the quantized inputs
        let mut quantized = BigInt::zero();
        let mut real_sum = 0.0f64;
        let mut acc = encrypt_real(&pk, 0.0, 40, &mut coins).unwrap();
        for _ in 0..100 {
            let x = noise.uniform(-1e3, 1e3);
            quantized += scale_round(x, 40).unwrap();
            real_sum += x;
            let c = encrypt_real(&pk, x, 40, &mut coins).unwrap();
            acc = enc_add(&pk, &acc, &c).unwrap();
        }
        let got = decrypt_real(&sk, &acc).unwrap();
        assert!((got - to_real(&quantized, 40)).abs() <= 2f64.powi(-39));
        // each input contributes at most 2^-41 of quantization error
        assert!((got - real_sum).abs() <= 100.0 * 2f64.powi(-41) + 1e-10);
    }

    #[test]
    fn scalar_multiplication_tracks_exponents() {
        let (pk, sk) = test_keys::k512();
        let mut coins = CoinStream::new(3, Purpose::Encryption);
        let c = encrypt_real(&pk, 3.5, 1, &mut coins).unwrap();
        let one = encode(1.0, 0, &pk).unwrap();
        let same = enc_cmul(&pk, &one, &c).unwrap();
        assert_eq!(same.exponent, 1);
        assert_eq!(decrypt_real(&sk, &same).unwrap(), 3.5);
        let two = encode(2.0, 0, &pk).unwrap();
        assert_eq!(decrypt_real(&sk, &enc_cmul(&pk, &two, &c).unwrap()).unwrap(), 7.0);
        let minus = encode(-0.75, 40, &pk).unwrap();
        let p = enc_cmul(&pk, &minus, &c).unwrap();
        assert_eq!(p.exponent, 41);
        assert_eq!(decrypt_real(&sk, &p).unwrap(), -2.625);
    }

    #[test]
    fn chained_multiplies_hit_the_budget() {
        let (pk, _) = test_keys::k512();
        let mut coins = CoinStream::new(4, Purpose::Encryption);
        let k = encode(1.0, 40, &pk).unwrap();
        let mut c = encrypt_real(&pk, 1.0, 40, &mut coins).unwrap();
        let budget = exponent_budget(&pk);
        let mut steps = 0;
        let err = loop {
            match enc_cmul(&pk, &k, &c) {
                Ok(next) => {
                    c = next;
                    steps += 1;
                }
                Err(e) => break e,
            }
        };
        assert_eq!(steps, (budget / 40 - 1) as usize);
        assert!(matches!(err, EncodingError::ExponentBudgetExceeded { .. }));
    }

    #[test]
    fn decode_handles_huge_exponents() {
        let v = BigInt::from(3) << 1500u32;
        assert_eq!(to_real(&v, 1500), 3.0);
        assert_eq!(to_real(&(BigInt::from(-5) << 2000u32), 2001), -2.5);
    }
}
