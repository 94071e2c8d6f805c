#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type CMatrix = DMatrix<Complex64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A)
}

/// Box-free circular complex Gaussian, independent of the crate's sampler.
pub fn cn<R: Rng>(r: &mut R, power: f64) -> Complex64 {
    let s = (power / 2.0).sqrt();
    let a: f64 = r.sample(StandardNormal);
    let b: f64 = r.sample(StandardNormal);
    Complex64::new(s * a, s * b)
}

pub fn white<R: Rng>(r: &mut R, rows: usize, cols: usize, power: f64) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| cn(r, power))
}

/// Random Hermitian PD matrix `A A^H / m + floor I`, rescaled to `tr = m`.
pub fn random_psd<R: Rng>(r: &mut R, m: usize, floor: f64) -> CMatrix {
    let a = white(r, m, m, 1.0);
    let c = &a * a.adjoint() / Complex64::new(m as f64, 0.0) + CMatrix::identity(m, m) * Complex64::new(floor, 0.0);
    let tr: f64 = c.diagonal().iter().map(|z| z.re).sum();
    let c = c * Complex64::new(m as f64 / tr, 0.0);
    (&c + c.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Lower Cholesky factor used by the oracles to sample `CN(0, C)` columns.
pub fn chol(c: &CMatrix) -> CMatrix {
    c.clone().cholesky().expect("positive definite").l()
}

/// Direct-inversion route: `tr((sigma2^-1 I + C^-1)^-1)`.
pub fn trace_by_inversion(c: &CMatrix, sigma2: f64) -> f64 {
    let m = c.nrows();
    let inv = c.clone().try_inverse().expect("invertible C");
    let a = CMatrix::identity(m, m) * Complex64::new(1.0 / sigma2, 0.0) + inv;
    a.try_inverse().unwrap().diagonal().iter().map(|z| z.re).sum()
}

pub fn naive_sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
