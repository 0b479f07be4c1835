//! Seeded complex Gaussian draws.
//!
//! All randomness goes through ChaCha8 so that a `(seed, stream)` pair
//! pins every draw regardless of how work is scheduled.

use nalgebra::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::spectrum::{CMatrix, CVector, C64};

/// Generator for trial/sample `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One CN(0, 1) draw: real and imaginary parts each N(0, 1/2).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| complex_normal(rng))
}

pub fn complex_normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    // column-major fill keeps the draw order independent of nalgebra internals
    let data: Vec<C64> = (0..rows * cols).map(|_| complex_normal(rng)).collect();
    CMatrix::from_vec(rows, cols, data)
}

/// i.i.d. circularly symmetric unit-variance complex Gaussian matrix.
pub fn random_gaussian_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    complex_normal_matrix(&mut rng, rows, cols)
}

/// `rows × cols` matrix with orthonormal columns (`cols <= rows`), from the
/// QR factor of a seeded Gaussian matrix with the phases of `R`'s diagonal
/// absorbed so the result is Haar distributed.
pub fn random_orthonormal_columns(rows: usize, cols: usize, seed: u64) -> CMatrix {
    assert!(
        cols <= rows,
        "cannot fit {cols} orthonormal columns in {rows} rows"
    );
    if cols == 0 {
        return CMatrix::zeros(rows, 0);
    }
    let g = random_gaussian_matrix(rows, cols, seed);
    let qr = QR::new(g);
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..cols {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let col = q.column(c) * phase;
        q.column_mut(c).copy_from(&col);
    }
    q
}

pub fn random_unitary(n: usize, seed: u64) -> CMatrix {
    random_orthonormal_columns(n, n, seed)
}

/// Full-rank covariance `B^H B / rows` with `B` a seeded `rows × m`
/// Gaussian matrix.
pub fn random_covariance(m: usize, rows: usize, seed: u64) -> CMatrix {
    let b = random_gaussian_matrix(rows, m, seed);
    let g = b.adjoint() * &b / C64::new(rows as f64, 0.0);
    crate::spectrum::hermitian_part(&g)
}
