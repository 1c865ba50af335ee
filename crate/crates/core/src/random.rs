//! Seeded random states and operators.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{hermitize, ComplexMatrix, DensityMatrix};
use num_complex::Complex64;

fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    })
}

/// Wishart-style sample `G G† / Tr[G G†]` with a square complex Gaussian `G`;
/// full rank with probability one.
pub fn random_density_matrix<R: Rng + ?Sized>(factor_dims: &[usize], rng: &mut R) -> DensityMatrix {
    let d: usize = factor_dims.iter().product();
    let g = complex_gaussian(d, d, rng);
    let w = hermitize(&(&g * g.adjoint()));
    let tr = w.trace().re;
    DensityMatrix::new(hermitize(&w.unscale(tr)), factor_dims.to_vec())
        .expect("Wishart sample is a valid state")
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    hermitize(&complex_gaussian(d, d, rng))
}

/// Haar-ish unitary from the QR factor of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    complex_gaussian(d, d, rng).qr().q()
}
