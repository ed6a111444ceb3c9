#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

pub type CMat = DMatrix<Complex64>;

fn c(a: &DMatrix<f64>) -> CMat {
    a.map(|x| Complex64::new(x, 0.0))
}

/// [C₁e^{−sh}; C₀](sI − A₀ − e^{−sh}A₁)⁻¹B by direct inversion.
pub fn g_direct(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    h: f64,
    b: &DMatrix<f64>,
    c1: &DMatrix<f64>,
    c0: &DMatrix<f64>,
    s: Complex64,
) -> CMat {
    let n = a0.nrows();
    let e = (-s * h).exp();
    let delta = CMat::identity(n, n) * s - c(a0) - c(a1) * e;
    let inv = delta.try_inverse().expect("nonsingular");
    let mut out = CMat::zeros(c1.nrows() + c0.nrows(), b.ncols());
    let x = inv * c(b);
    out.rows_mut(0, c1.nrows()).copy_from(&(c(c1) * e * &x));
    out.rows_mut(c1.nrows(), c0.nrows())
        .copy_from(&(c(c0) * &x));
    out
}

pub fn largest_sv(m: &CMat) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// λ_max of (M + Mᴴ)/2.
pub fn he_max(m: &CMat) -> f64 {
    let he = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    he.symmetric_eigenvalues().max()
}

pub fn rand_mat<R: Rng>(rng: &mut R, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-scale..scale))
}

pub fn rand_cvec<R: Rng>(rng: &mut R, n: usize) -> DVector<Complex64> {
    DVector::from_fn(n, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Principal branch of Lambert W at a complex point by Halley iteration.
pub fn lambert_w0(z: Complex64) -> Complex64 {
    let mut w = (Complex64::new(1.0, 0.0) + z * std::f64::consts::E * 2.0).sqrt() - 1.0;
    if z.norm() > 0.3 {
        w = z.ln() - z.ln().ln();
    }
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (wp1 * 2.0));
        w -= step;
        if step.norm() < 1e-16 * (1.0 + w.norm()) {
            break;
        }
    }
    w
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
