//! Complex matrix aliases and small helpers shared by the signal-processing modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// One draw of CN(0, var): real and imaginary parts are N(0, var/2).
pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

pub fn cn_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    // column-major fill keeps the draw order stable across nalgebra versions
    let mut m = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = cn(rng, var);
        }
    }
    m
}

pub fn cn_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, var: f64) -> CVec {
    CVec::from_iterator(len, (0..len).map(|_| cn(rng, var)))
}

pub fn fro2(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm2(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn hpd_inverse(m: &CMat) -> Option<CMat> {
    m.clone().cholesky().map(|ch| ch.inverse())
}

/// Largest absolute deviation from Hermitian symmetry, relative to the largest entry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

/// Moore-Penrose style minimum-norm solution `A^H (A A^H)^{-1} y` for a wide or square `A`.
/// Falls back to diagonal loading when the Gram matrix is singular.
pub fn min_norm_solve(a: &CMat, y: &CVec) -> CVec {
    let gram = a * a.adjoint();
    let scale = (0..gram.nrows()).map(|i| gram[(i, i)].re).fold(0.0, f64::max).max(1e-300);
    let solve = |g: CMat| g.cholesky().map(|ch| ch.solve(y));
    let z = match solve(gram.clone()) {
        Some(z) if z.iter().all(|v| v.re.is_finite() && v.im.is_finite()) => z,
        _ => {
            let loaded = gram + CMat::identity(a.nrows(), a.nrows()) * c(1e-9 * scale);
            solve(loaded.clone()).unwrap_or_else(|| {
                loaded
                    .lu()
                    .solve(y)
                    .unwrap_or_else(|| CVec::zeros(a.nrows()))
            })
        }
    };
    a.adjoint() * z
}
