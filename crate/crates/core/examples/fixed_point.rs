//! Real numbers under Paillier: signed fixed point with a tracked exponent.

use phekf::coins::{CoinStream, Purpose};
use phekf::encoding::{self, exponent_budget};
use phekf::matlib::{mat_enc_mul, EncVector, Matrix, Vector};
use phekf::run::keys_for;

fn main() {
    let (pk, sk) = keys_for(512, 1).unwrap();
    let mut coins = CoinStream::new(3, Purpose::Encryption);
    let f = 40;

    let x = encoding::encrypt_real(&pk, -2.75, f, &mut coins).unwrap();
    let y = encoding::encrypt_real(&pk, 0.125, f, &mut coins).unwrap();
    let sum = encoding::enc_add(&pk, &x, &y).unwrap();
    println!("-2.75 + 0.125 = {}", encoding::decrypt_real(&sk, &sum).unwrap());

    // Every plaintext-matrix product adds f to the exponent.
    let a = Matrix::from_row_slice(2, 2, &[1.0, 0.01, 0.0, 1.0]);
    let mut v = EncVector::encrypt(&pk, &Vector::from_row_slice(&[1.0, -0.5]), f, &mut coins).unwrap();
    println!("budget {} bits", exponent_budget(&pk));
    for step in 1..=12 {
        match mat_enc_mul(&pk, &a, &v, f) {
            Ok(next) => v = next,
            Err(e) => {
                println!("step {step}: {e}");
                break;
            }
        }
        println!("step {step}: exponent {}, value {:?}", v.max_exponent(), v.decrypt(&sk).unwrap().as_slice());
    }
}
