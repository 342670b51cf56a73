//! Seeded random matrices for tests, verification and benchmarks.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries drawn independently from `U[lo, hi)`.
pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix<f64> {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    DenseMatrix::from_raw(rows, cols, data)
}

/// Real and imaginary parts drawn independently from `U[lo, hi)`.
pub fn uniform_complex_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix<Complex64> {
    let data = (0..rows * cols)
        .map(|_| Complex64::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi)))
        .collect();
    DenseMatrix::from_raw(rows, cols, data)
}

pub fn uniform_vector<R: Rng>(rng: &mut R, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

/// FNV-1a over the little-endian bytes of every entry (real then imaginary part).
pub fn checksum<S: crate::Scalar>(values: &[S]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut feed = |x: f64| {
        for b in x.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    };
    for v in values {
        feed(v.re());
        if S::KIND == crate::ScalarKind::Complex128 {
            feed(v.im());
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_matrix() {
        let a = uniform_matrix(&mut seeded_rng(7), 3, 4, -1.0, 1.0);
        let b = uniform_matrix(&mut seeded_rng(7), 3, 4, -1.0, 1.0);
        assert_eq!(a, b);
        assert_ne!(a, uniform_matrix(&mut seeded_rng(8), 3, 4, -1.0, 1.0));
    }

    #[test]
    fn checksum_is_fnv1a() {
        // FNV-1a of the empty input is the offset basis.
        assert_eq!(checksum::<f64>(&[]), 0xcbf2_9ce4_8422_2325);
        assert_ne!(checksum(&[1.0f64]), checksum(&[-1.0f64]));
        assert_ne!(checksum(&[0.0f64]), checksum(&[-0.0f64]));
    }
}
