//! Key generation, encryption and the two homomorphic operations.

use num_bigint::BigUint;
use phekf::coins::{CoinStream, Purpose};
use phekf::phe;

fn main() {
    let (pk, sk) = phe::keygen(512, &mut CoinStream::new(1, Purpose::Keygen)).unwrap();
    let mut coins = CoinStream::new(2, Purpose::Encryption);

    let a = phe::encrypt(&pk, &BigUint::from(1200u32), &mut coins).unwrap();
    let b = phe::encrypt(&pk, &BigUint::from(34u32), &mut coins).unwrap();
    let sum = phe::add(&pk, &a, &b).unwrap();
    let scaled = phe::cmul(&pk, &BigUint::from(3u32), &a).unwrap();

    println!("{}-bit modulus", pk.bits());
    println!("D(E(1200) * E(34)) = {}", phe::decrypt(&sk, &sum).unwrap());
    println!("D(E(1200)^3)       = {}", phe::decrypt(&sk, &scaled).unwrap());
}
