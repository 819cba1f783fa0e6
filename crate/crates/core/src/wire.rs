//! Canonical byte encoding for keys and ciphertexts.
//!
//! Layout: the 3-byte magic `PHK`, a version byte, a kind byte, then the
//! body. Integers are a big-endian `u32` byte length followed by big-endian
//! magnitude bytes. Fixed-point exponents are unsigned LEB128 varints.

use num_bigint::BigUint;
use thiserror::Error;

use crate::encoding::Ciphertext;
use crate::matlib::EncVector;
use crate::phe::{PrivateKey, PublicKey, RawCiphertext};

pub const MAGIC: [u8; 3] = *b"PHK";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    PublicKey = 1,
    PrivateKey = 2,
    RawCiphertext = 3,
    Ciphertext = 4,
    EncVector = 5,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic tag")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u8),
    #[error("expected kind {expected:?}, found byte {found}")]
    Kind { expected: Kind, found: u8 },
    #[error("input truncated")]
    Truncated,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("malformed varint")]
    Varint,
    #[error("invalid value: {0}")]
    Invalid(String),
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(kind: Kind) -> Self {
        let mut buf = MAGIC.to_vec();
        buf.push(VERSION);
        buf.push(kind as u8);
        Writer(buf)
    }

    fn uint(&mut self, v: &BigUint) {
        let bytes = if v.bits() == 0 { Vec::new() } else { v.to_bytes_be() };
        self.0.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        self.0.extend_from_slice(&bytes);
    }

    fn varint(&mut self, mut v: u64) {
        loop {
            let byte = (v & 0x7f) as u8;
            v >>= 7;
            if v == 0 {
                self.0.push(byte);
                return;
            }
            self.0.push(byte | 0x80);
        }
    }

    fn raw(&mut self, c: &RawCiphertext) {
        self.uint(c.value());
    }

    fn ciphertext(&mut self, c: &Ciphertext) {
        self.raw(&c.raw);
        self.varint(u64::from(c.exponent));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], kind: Kind) -> Result<Self, WireError> {
        if buf.len() < 5 {
            return Err(WireError::Truncated);
        }
        if buf[..3] != MAGIC {
            return Err(WireError::Magic);
        }
        if buf[3] != VERSION {
            return Err(WireError::Version(buf[3]));
        }
        if buf[4] != kind as u8 {
            return Err(WireError::Kind {
                expected: kind,
                found: buf[4],
            });
        }
        Ok(Reader { buf, pos: 5 })
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(len).ok_or(WireError::Truncated)?;
        let out = self.buf.get(self.pos..end).ok_or(WireError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn uint(&mut self) -> Result<BigUint, WireError> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes"));
        let bytes = self.take(len as usize)?;
        if bytes.first() == Some(&0) {
            return Err(WireError::Invalid("non-canonical leading zero".into()));
        }
        Ok(BigUint::from_bytes_be(bytes))
    }

    fn varint(&mut self) -> Result<u64, WireError> {
        let mut out = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = self.take(1)?[0];
            let bits = u64::from(byte & 0x7f);
            if shift == 63 && bits > 1 {
                return Err(WireError::Varint);
            }
            out |= bits << shift;
            if byte & 0x80 == 0 {
                if byte == 0 && shift > 0 {
                    return Err(WireError::Varint);
                }
                return Ok(out);
            }
        }
        Err(WireError::Varint)
    }

    fn raw(&mut self, pk: &PublicKey) -> Result<RawCiphertext, WireError> {
        let value = self.uint()?;
        pk.ciphertext_from_value(value)
            .map_err(|e| WireError::Invalid(e.to_string()))
    }

    fn ciphertext(&mut self, pk: &PublicKey) -> Result<Ciphertext, WireError> {
        let raw = self.raw(pk)?;
        let exponent = u32::try_from(self.varint()?).map_err(|_| WireError::Invalid("exponent too large".into()))?;
        Ok(Ciphertext { raw, exponent })
    }

    fn finish(self) -> Result<(), WireError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}

pub fn encode_public_key(pk: &PublicKey) -> Vec<u8> {
    let mut w = Writer::new(Kind::PublicKey);
    w.uint(pk.n());
    w.0
}

pub fn decode_public_key(buf: &[u8]) -> Result<PublicKey, WireError> {
    let mut r = Reader::new(buf, Kind::PublicKey)?;
    let n = r.uint()?;
    r.finish()?;
    PublicKey::from_modulus(n).map_err(|e| WireError::Invalid(e.to_string()))
}

pub fn encode_private_key(sk: &PrivateKey) -> Vec<u8> {
    let mut w = Writer::new(Kind::PrivateKey);
    let (p, q) = sk.primes();
    w.uint(p);
    w.uint(q);
    w.0
}

pub fn decode_private_key(buf: &[u8]) -> Result<PrivateKey, WireError> {
    let mut r = Reader::new(buf, Kind::PrivateKey)?;
    let p = r.uint()?;
    let q = r.uint()?;
    r.finish()?;
    PrivateKey::from_primes(p, q).map_err(|e| WireError::Invalid(e.to_string()))
}

pub fn encode_raw(c: &RawCiphertext) -> Vec<u8> {
    let mut w = Writer::new(Kind::RawCiphertext);
    w.raw(c);
    w.0
}

pub fn decode_raw(buf: &[u8], pk: &PublicKey) -> Result<RawCiphertext, WireError> {
    let mut r = Reader::new(buf, Kind::RawCiphertext)?;
    let c = r.raw(pk)?;
    r.finish()?;
    Ok(c)
}

pub fn encode_ciphertext(c: &Ciphertext) -> Vec<u8> {
    let mut w = Writer::new(Kind::Ciphertext);
    w.ciphertext(c);
    w.0
}

pub fn decode_ciphertext(buf: &[u8], pk: &PublicKey) -> Result<Ciphertext, WireError> {
    let mut r = Reader::new(buf, Kind::Ciphertext)?;
    let c = r.ciphertext(pk)?;
    r.finish()?;
    Ok(c)
}

pub fn encode_enc_vector(v: &EncVector) -> Vec<u8> {
    let mut w = Writer::new(Kind::EncVector);
    w.varint(v.len() as u64);
    for c in v.iter() {
        w.ciphertext(c);
    }
    w.0
}

pub fn decode_enc_vector(buf: &[u8], pk: &PublicKey) -> Result<EncVector, WireError> {
    let mut r = Reader::new(buf, Kind::EncVector)?;
    let len = r.varint()?;
    let mut out = Vec::new();
    for _ in 0..len {
        out.push(r.ciphertext(pk)?);
    }
    r.finish()?;
    Ok(EncVector(out))
}
