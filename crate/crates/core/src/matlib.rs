//! Dense real linear algebra and plaintext-matrix by encrypted-vector maps.
//!
//! Real matrices are `nalgebra` dynamic matrices; this module adds the
//! tolerances and error reporting the filters and attack solvers rely on.

use nalgebra::{DMatrix, DVector};
use num_bigint::{BigInt, Sign};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{self, Ciphertext, EncodingError};
use crate::phe::{self, PublicKey};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Condition-number ceiling for [`inv`].
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("matrix is not symmetric positive-definite")]
    NotPositiveDefinite,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

fn dims(m: &Matrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

pub fn ensure_finite(m: &Matrix) -> Result<(), LinalgError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::Numerical("non-finite entry".into()))
    }
}

/// Largest absolute entry.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn default_rtol(m: &Matrix) -> f64 {
    f64::EPSILON * m.nrows().max(m.ncols()) as f64
}

/// Thin SVD by one-sided Jacobi rotations: returns `(W, sigma, V)` with
/// `m = W V^T`, where column `i` of `W` has norm `sigma[i]`.
///
/// nalgebra's bidiagonal SVD returns inaccurate factors for rank-deficient
/// inputs (reconstruction errors near 1e-3), so rank decisions and
/// pseudoinverses go through this instead.
fn jacobi_svd(m: &Matrix) -> Result<(Matrix, Vector, Matrix), LinalgError> {
    ensure_finite(m)?;
    let n = m.ncols();
    let mut w = m.clone();
    let mut v = Matrix::identity(n, n);
    // Columns this small are zero up to roundoff; rotating them never settles.
    let negligible = (f64::EPSILON * m.norm()).powi(2);
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || alpha.min(beta) <= negligible || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for r in 0..mat.nrows() {
                        let (a, b) = (mat[(r, p)], mat[(r, q)]);
                        mat[(r, p)] = c * a - s * b;
                        mat[(r, q)] = s * a + c * b;
                    }
                }
            }
        }
        if !rotated {
            let sigma = Vector::from_fn(n, |i, _| w.column(i).norm());
            return Ok((w, sigma, v));
        }
    }
    Err(LinalgError::Numerical("Jacobi SVD did not converge".into()))
}

fn singular_values(m: &Matrix) -> Result<Vector, LinalgError> {
    ensure_finite(m)?;
    if m.is_empty() {
        return Ok(Vector::zeros(0));
    }
    let tall = if m.nrows() < m.ncols() { m.transpose() } else { m.clone() };
    Ok(jacobi_svd(&tall)?.1)
}

fn is_diagonal(m: &Matrix) -> bool {
    m.is_square()
        && m
            .iter()
            .enumerate()
            .all(|(idx, v)| idx % m.nrows() == idx / m.nrows() || *v == 0.0)
}

/// Moore–Penrose pseudoinverse. Singular values at or below
/// `rtol * sigma_max` are treated as zero.
pub fn pinv(m: &Matrix, rtol: f64) -> Result<Matrix, LinalgError> {
    ensure_finite(m)?;
    if is_diagonal(m) {
        let sigma_max = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let cutoff = rtol * sigma_max;
        let diag = m
            .diagonal()
            .map(|v| if v.abs() > cutoff && v != 0.0 { 1.0 / v } else { 0.0 });
        return Ok(Matrix::from_diagonal(&diag));
    }
    if m.nrows() < m.ncols() {
        return Ok(pinv(&m.transpose(), rtol)?.transpose());
    }
    if m.is_empty() {
        return Ok(Matrix::zeros(m.ncols(), m.nrows()));
    }
    let (w, sigma, v) = jacobi_svd(m)?;
    let cutoff = rtol * sigma.max();
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (v.column(i) * w.column(i).transpose()) / (s * s);
        }
    }
    Ok(out)
}

/// Numerical rank with the same cutoff rule as [`pinv`].
pub fn rank(m: &Matrix, rtol: f64) -> Result<usize, LinalgError> {
    let sv = singular_values(m)?;
    if sv.is_empty() {
        return Ok(0);
    }
    let sigma_max = sv.max();
    if sigma_max == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > rtol * sigma_max).count())
}

/// 2-norm condition number via singular values; infinite when singular.
pub fn condition(m: &Matrix) -> Result<f64, LinalgError> {
    let sv = singular_values(m)?;
    if sv.is_empty() {
        return Ok(1.0);
    }
    let min = sv.min();
    Ok(if min == 0.0 { f64::INFINITY } else { sv.max() / min })
}

/// Inverse of a square, well-conditioned matrix.
pub fn inv(m: &Matrix) -> Result<Matrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "inverse of non-square {}",
            dims(m)
        )));
    }
    if is_diagonal(m) {
        if m.diagonal().iter().any(|&v| v == 0.0) {
            return Err(LinalgError::Singular {
                condition: f64::INFINITY,
            });
        }
        let d = m.diagonal();
        let cond = d.amax() / d.amin();
        if cond >= MAX_CONDITION {
            return Err(LinalgError::Singular { condition: cond });
        }
        return Ok(Matrix::from_diagonal(&d.map(|v| 1.0 / v)));
    }
    let cond = condition(m)?;
    if !(cond < MAX_CONDITION) {
        return Err(LinalgError::Singular { condition: cond });
    }
    m.clone()
        .try_inverse()
        .ok_or(LinalgError::Singular { condition: cond })
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub fn inv_spd(m: &Matrix) -> Result<Matrix, LinalgError> {
    let cond = condition(m)?;
    if !(cond < MAX_CONDITION) {
        return Err(LinalgError::Singular { condition: cond });
    }
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or(LinalgError::NotPositiveDefinite)?;
    Ok(symmetrize(&chol.inverse()))
}

/// Lower-triangular `L` with `L L^T = S`.
pub fn cholesky(s: &Matrix) -> Result<Matrix, LinalgError> {
    ensure_finite(s)?;
    if !s.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "cholesky of non-square {}",
            dims(s)
        )));
    }
    let scale = max_abs(s).max(1.0);
    if max_abs(&(s - s.transpose())) > 1e-9 * scale {
        return Err(LinalgError::NotPositiveDefinite);
    }
    nalgebra::Cholesky::new(s.clone())
        .map(|c| c.l())
        .ok_or(LinalgError::NotPositiveDefinite)
}

/// Cholesky factor that also accepts the all-zero matrix (noise-free models).
pub fn cholesky_or_zero(s: &Matrix) -> Result<Matrix, LinalgError> {
    if s.iter().all(|&v| v == 0.0) {
        return Ok(Matrix::zeros(s.nrows(), s.ncols()));
    }
    cholesky(s)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    nalgebra::SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Block-diagonal matrix built from square blocks.
pub fn block_diag(blocks: &[Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical stack of matrices with equal column counts.
pub fn vstack(blocks: &[Matrix]) -> Result<Matrix, LinalgError> {
    let Some(first) = blocks.first() else {
        return Err(LinalgError::DimensionMismatch("empty stack".into()));
    };
    let cols = first.ncols();
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(LinalgError::DimensionMismatch("ragged vertical stack".into()));
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    Ok(out)
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn hstack(blocks: &[Matrix]) -> Result<Matrix, LinalgError> {
    let transposed: Vec<Matrix> = blocks.iter().map(|b| b.transpose()).collect();
    Ok(vstack(&transposed)?.transpose())
}

/// Vector of ciphertexts under one key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncVector(pub Vec<Ciphertext>);

impl EncVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Ciphertext> {
        self.0.iter()
    }

    /// Largest exponent among the entries.
    pub fn max_exponent(&self) -> u32 {
        self.0.iter().map(|c| c.exponent).max().unwrap_or(0)
    }

    pub fn encrypt(
        pk: &PublicKey,
        v: &Vector,
        frac_bits: u32,
        coins: &mut crate::coins::CoinStream,
    ) -> Result<Self, EncodingError> {
        v.iter()
            .map(|&x| encoding::encrypt_real(pk, x, frac_bits, coins))
            .collect::<Result<Vec<_>, _>>()
            .map(EncVector)
    }

    pub fn decrypt(&self, sk: &phe::PrivateKey) -> Result<Vector, EncodingError> {
        let values = self
            .0
            .iter()
            .map(|c| encoding::decrypt_real(sk, c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Vector::from_vec(values))
    }

    /// Brings every entry to the largest exponent present.
    pub fn aligned(&self, pk: &PublicKey) -> Result<Self, EncodingError> {
        self.aligned_to(pk, self.max_exponent())
    }

    pub fn aligned_to(&self, pk: &PublicKey, target: u32) -> Result<Self, EncodingError> {
        self.0
            .iter()
            .map(|c| encoding::align(pk, c, target))
            .collect::<Result<Vec<_>, _>>()
            .map(EncVector)
    }
}

/// `A * v` for plaintext `A` and encrypted `v`.
///
/// Entries of `A` are encoded with `frac_bits` fractional bits; the result has
/// the uniform exponent `exp(v) + frac_bits`. Positive and negative scalar
/// contributions are accumulated separately so each row needs one inversion.
pub fn mat_enc_mul(pk: &PublicKey, a: &Matrix, v: &EncVector, frac_bits: u32) -> Result<EncVector, LinalgError> {
    if a.ncols() != v.len() {
        return Err(LinalgError::DimensionMismatch(format!(
            "{} matrix times length-{} vector",
            dims(a),
            v.len()
        )));
    }
    ensure_finite(a)?;
    let v = v.aligned(pk)?;
    let exponent = u64::from(v.max_exponent()) + u64::from(frac_bits);
    let budget = encoding::exponent_budget(pk);
    if exponent > budget {
        return Err(EncodingError::ExponentBudgetExceeded { exponent, budget }.into());
    }
    let scalars: Vec<BigInt> = a
        .iter()
        .map(|&x| encoding::scale_round(x, frac_bits))
        .collect::<Result<_, _>>()?;
    let half_n = pk.n() >> 1u32;
    let mut out = Vec::with_capacity(a.nrows());
    for row in 0..a.nrows() {
        let mut positive = pk.zero_ciphertext();
        let mut negative = pk.zero_ciphertext();
        for col in 0..a.ncols() {
            // column-major storage
            let k = &scalars[col * a.nrows() + row];
            if k.magnitude() > &half_n {
                return Err(EncodingError::EncodeOverflow.into());
            }
            match k.sign() {
                Sign::NoSign => {}
                Sign::Plus => {
                    let term = phe::cmul(pk, k.magnitude(), &v.0[col].raw).map_err(EncodingError::from)?;
                    positive = phe::add(pk, &positive, &term).map_err(EncodingError::from)?;
                }
                Sign::Minus => {
                    let term = phe::cmul(pk, k.magnitude(), &v.0[col].raw).map_err(EncodingError::from)?;
                    negative = phe::add(pk, &negative, &term).map_err(EncodingError::from)?;
                }
            }
        }
        let raw = if negative == pk.zero_ciphertext() {
            positive
        } else {
            phe::sub(pk, &positive, &negative).map_err(EncodingError::from)?
        };
        out.push(Ciphertext {
            raw,
            exponent: exponent as u32,
        });
    }
    Ok(EncVector(out))
}

fn check_lengths(a: &EncVector, b: &EncVector) -> Result<(), LinalgError> {
    if a.len() != b.len() {
        return Err(LinalgError::DimensionMismatch(format!(
            "encrypted vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Entrywise homomorphic addition with a uniform result exponent.
pub fn enc_vec_add(pk: &PublicKey, a: &EncVector, b: &EncVector) -> Result<EncVector, LinalgError> {
    check_lengths(a, b)?;
    let target = a.max_exponent().max(b.max_exponent());
    let out = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| {
            encoding::enc_add(pk, &encoding::align(pk, x, target)?, &encoding::align(pk, y, target)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncVector(out))
}

/// Entrywise homomorphic subtraction with a uniform result exponent.
pub fn enc_vec_sub(pk: &PublicKey, a: &EncVector, b: &EncVector) -> Result<EncVector, LinalgError> {
    check_lengths(a, b)?;
    let target = a.max_exponent().max(b.max_exponent());
    let out = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| {
            encoding::enc_sub(pk, &encoding::align(pk, x, target)?, &encoding::align(pk, y, target)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncVector(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coins::{CoinStream, Purpose};
    use crate::test_keys;

    fn random_matrix(rows: usize, cols: usize, coins: &mut CoinStream) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| coins.next_gaussian())
    }

    /// `U diag(s) V^T` with orthonormal factors and singular values in [0.5, 2].
    fn random_rank_matrix(rows: usize, cols: usize, r: usize, coins: &mut CoinStream) -> Matrix {
        let u = random_matrix(rows, r, coins).qr().q();
        let v = random_matrix(cols, r, coins).qr().q();
        let s = Vector::from_fn(r, |_, _| coins.uniform(0.5, 2.0));
        u * Matrix::from_diagonal(&s) * v.transpose()
    }

    fn penrose_residuals(m: &Matrix, g: &Matrix) -> [f64; 4] {
        [
            max_abs(&(m * g * m - m)),
            max_abs(&(g * m * g - g)),
            max_abs(&((m * g).transpose() - m * g)),
            max_abs(&((g * m).transpose() - g * m)),
        ]
    }

    #[test]
    fn pinv_trivial_cases() {
        let i = Matrix::identity(4, 4);
        assert_eq!(pinv(&i, default_rtol(&i)).unwrap(), i);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let expect = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.0]));
        assert_eq!(pinv(&d, default_rtol(&d)).unwrap(), expect);
    }

    #[test]
    fn pinv_full_column_rank_is_left_inverse() {
        let mut coins = CoinStream::new(1, Purpose::Noise);
        let m = random_matrix(5, 3, &mut coins);
        let g = pinv(&m, default_rtol(&m)).unwrap();
        assert!(max_abs(&(&g * &m - Matrix::identity(3, 3))) <= 1e-9);
    }

    #[test]
    fn penrose_conditions_on_mixed_rank() {
        let mut coins = CoinStream::new(2, Purpose::Noise);
        for trial in 0..1000 {
            let rows = 1 + (coins.next_u64() % 7) as usize;
            let cols = 1 + (coins.next_u64() % 7) as usize;
            let r = 1 + (coins.next_u64() as usize) % rows.min(cols);
            let m = random_rank_matrix(rows, cols, r, &mut coins);
            let g = pinv(&m, 1e-10).unwrap();
            for (k, res) in penrose_residuals(&m, &g).iter().enumerate() {
                assert!(*res <= 1e-9, "trial {trial}: condition {k} residual {res}");
            }
            assert_eq!(rank(&m, 1e-10).unwrap(), r, "trial {trial}");
            assert_eq!(rank(&(&g * &m), 1e-10).unwrap(), r);
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&Matrix::zeros(3, 2), 1e-8).unwrap(), 0);
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(rank(&m, 1e-8).unwrap(), 1);
    }

    #[test]
    fn zero_row_converges() {
        let mut coins = CoinStream::new(5, Purpose::Noise);
        for _ in 0..50 {
            let mut m = Matrix::from_fn(6, 6, |_, _| coins.uniform(-1.0, 1.0));
            m.row_mut(5).fill(0.0);
            assert_eq!(rank(&m, default_rtol(&m)).unwrap(), 5);
            let p = pinv(&m, default_rtol(&m)).unwrap();
            assert!((&m * &p * &m - &m).amax() < 1e-12);
        }
    }

    #[test]
    fn inverse_and_cholesky() {
        let i = Matrix::identity(3, 3);
        assert_eq!(inv(&i).unwrap(), i);
        assert_eq!(cholesky(&i).unwrap(), i);
        let d = Matrix::from_row_slice(1, 1, &[4.0]);
        assert_eq!(inv(&d).unwrap()[(0, 0)], 0.25);
        let mut coins = CoinStream::new(3, Purpose::Noise);
        let a = random_matrix(4, 4, &mut coins);
        let s = &a * a.transpose() + Matrix::identity(4, 4);
        let l = cholesky(&s).unwrap();
        assert!(max_abs(&(&l * l.transpose() - &s)) <= 1e-9);
        assert!(max_abs(&(&s * inv(&s).unwrap() - Matrix::identity(4, 4))) <= 1e-9);
        assert!(max_abs(&(&s * inv_spd(&s).unwrap() - Matrix::identity(4, 4))) <= 1e-9);
    }

    #[test]
    fn singular_and_indefinite_inputs_fail() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(inv(&m), Err(LinalgError::Singular { .. })));
        assert!(matches!(inv(&Matrix::zeros(2, 2)), Err(LinalgError::Singular { .. })));
        let indefinite = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(cholesky(&indefinite), Err(LinalgError::NotPositiveDefinite));
        let asym = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert_eq!(cholesky(&asym), Err(LinalgError::NotPositiveDefinite));
    }

    #[test]
    fn encrypted_matvec_matches_plaintext() {
        let (pk, sk) = test_keys::k512();
        let mut noise = CoinStream::new(4, Purpose::Noise);
        let mut coins = CoinStream::new(4, Purpose::Encryption);
        let a = random_matrix(4, 4, &mut noise);
        let v = Vector::from_fn(4, |_, _| noise.uniform(-100.0, 100.0));
        let ev = EncVector::encrypt(&pk, &v, 40, &mut coins).unwrap();
        let out = mat_enc_mul(&pk, &a, &ev, 40).unwrap();
        assert!(out.iter().all(|c| c.exponent == 80));
        let got = out.decrypt(&sk).unwrap();
        assert!((got - &a * &v).amax() <= 1e-9);

        let ident = mat_enc_mul(&pk, &Matrix::identity(4, 4), &ev, 40).unwrap();
        assert!((ident.decrypt(&sk).unwrap() - &v).amax() <= 1e-11);
        let zero = mat_enc_mul(&pk, &Matrix::zeros(4, 4), &ev, 40).unwrap();
        assert!(zero.decrypt(&sk).unwrap().iter().all(|&x| x == 0.0));
        assert!(matches!(
            mat_enc_mul(&pk, &Matrix::zeros(3, 2), &ev, 40),
            Err(LinalgError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn encrypted_vector_add_sub() {
        let (pk, sk) = test_keys::k512();
        let mut noise = CoinStream::new(5, Purpose::Noise);
        let mut coins = CoinStream::new(5, Purpose::Encryption);
        let a = Vector::from_fn(5, |_, _| noise.uniform(-10.0, 10.0));
        let b = Vector::from_fn(5, |_, _| noise.uniform(-10.0, 10.0));
        let ea = EncVector::encrypt(&pk, &a, 40, &mut coins).unwrap();
        let eb = EncVector::encrypt(&pk, &b, 20, &mut coins).unwrap();
        let zero = EncVector::encrypt(&pk, &Vector::zeros(5), 40, &mut coins).unwrap();
        let a_rounded = ea.decrypt(&sk).unwrap();
        assert!((&a_rounded - &a).amax() <= 2f64.powi(-41));
        assert!((enc_vec_add(&pk, &ea, &zero).unwrap().decrypt(&sk).unwrap() - &a_rounded).amax() == 0.0);
        assert!(enc_vec_sub(&pk, &ea, &ea).unwrap().decrypt(&sk).unwrap().amax() == 0.0);
        let b_rounded = eb.decrypt(&sk).unwrap();
        let sum = enc_vec_add(&pk, &ea, &eb).unwrap();
        assert!(sum.iter().all(|c| c.exponent == 40));
        assert!((sum.decrypt(&sk).unwrap() - (&a_rounded + &b_rounded)).amax() <= 1e-14);
        let diff = enc_vec_sub(&pk, &ea, &eb).unwrap().decrypt(&sk).unwrap();
        assert!((diff - (&a_rounded - &b_rounded)).amax() <= 1e-14);
        let short = EncVector(ea.0[..2].to_vec());
        assert!(matches!(enc_vec_add(&pk, &ea, &short), Err(LinalgError::DimensionMismatch(_))));
    }
}
