//! Privacy-preserving multi-party Kalman filtering over Paillier encryption.
pub mod coins;
pub mod encoding;
pub mod harness;
pub mod kalman;
pub mod matlib;
pub mod phe;
pub mod privacy;
pub mod protocol1;
pub mod protocol2;
pub mod run;
pub mod wire;
#[cfg(test)]
mod test_keys;
