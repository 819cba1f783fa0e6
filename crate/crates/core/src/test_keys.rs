//! Shared key material for unit tests.

use std::sync::OnceLock;

use num_bigint::BigUint;

use crate::coins::{CoinStream, Purpose};
use crate::phe::{self, PrivateKey, PublicKey};

pub fn toy() -> (PublicKey, PrivateKey) {
    let sk = PrivateKey::from_primes(BigUint::from(5u32), BigUint::from(7u32)).unwrap();
    (sk.public_key().clone(), sk)
}

pub fn k512() -> (PublicKey, PrivateKey) {
    static KEYS: OnceLock<(PublicKey, PrivateKey)> = OnceLock::new();
    KEYS.get_or_init(|| phe::keygen(512, &mut CoinStream::new(512, Purpose::Keygen)).unwrap())
        .clone()
}
