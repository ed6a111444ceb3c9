//! Dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

pub fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn adjoint(a: &CMatrix) -> CMatrix {
    a.adjoint()
}

/// Largest singular value. Zero for empty matrices.
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    SVD::new(a.clone(), false, false).singular_values.max()
}

pub fn norm2_c(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    SVD::new(a.clone(), false, false).singular_values.max()
}

pub fn sigma_min_c(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    SVD::new(a.clone(), false, false).singular_values.min()
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn lambda_min(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(0.0)
}

pub fn lambda_max(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).last().copied().unwrap_or(0.0)
}

/// Eigenvalues of the Hermitian part (M + Mᴴ)/2, ascending.
pub fn hermitian_part_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let h = (a + a.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()).scale(0.5)
}

/// ‖A − Aᵀ‖_F / max(‖A‖_F, tiny).
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.norm();
    if n == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / n
}

/// Stack blocks vertically. Blocks may have zero rows but must agree on columns.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn solve_c(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    a.clone().lu().solve(b)
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::LinearAlgebra("real Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Complex Schur form A = U T Uᴴ with T upper triangular.
pub struct ComplexSchur {
    pub u: CMatrix,
    pub t: CMatrix,
}

impl ComplexSchur {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let schur = Schur::try_new(to_complex(a), SCHUR_EPS, SCHUR_MAX_ITER).ok_or_else(|| {
            Error::LinearAlgebra("complex Schur decomposition did not converge".into())
        })?;
        let (u, mut t) = schur.unpack();
        let n = t.nrows();
        for j in 0..n {
            for i in j + 1..n {
                t[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        Ok(Self { u, t })
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }

    /// Solves Aᵀ X + X A + C = 0 for symmetric real C. Requires λ_i + conj(λ_j) ≠ 0.
    pub fn solve_lyapunov(&self, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.t.nrows();
        let f = self.u.adjoint() * to_complex(c) * &self.u;
        let t = &self.t;
        let mut y = CMatrix::zeros(n, n);
        // Column j of Tᴴ Y + Y T = −F: (Tᴴ + t_jj I) y_j = −f_j − Σ_{k<j} t_kj y_k.
        let mut rhs = DVector::<Complex64>::zeros(n);
        for j in 0..n {
            for i in 0..n {
                let mut s = -f[(i, j)];
                for k in 0..j {
                    s -= t[(k, j)] * y[(i, k)];
                }
                rhs[i] = s;
            }
            let tjj = t[(j, j)];
            // Tᴴ is lower triangular: forward substitution.
            for i in 0..n {
                let mut s = rhs[i];
                for k in 0..i {
                    s -= t[(k, i)].conj() * y[(k, j)];
                }
                let d = t[(i, i)].conj() + tjj;
                if d.norm() < 1e-300 {
                    return Err(Error::LinearAlgebra("Lyapunov operator is singular".into()));
                }
                y[(i, j)] = s / d;
            }
        }
        let x = &self.u * y * self.u.adjoint();
        Ok(symmetrize(&x.map(|z| z.re)))
    }
}

/// Solves Aᵀ X + X A + C = 0 with one step of iterative refinement.
pub fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let schur = ComplexSchur::new(a)?;
    let mut x = schur.solve_lyapunov(c)?;
    let r = lyapunov_residual(a, &x, c);
    if r.norm() > 0.0 {
        x += schur.solve_lyapunov(&r)?;
    }
    Ok(x)
}

pub fn lyapunov_residual(a: &DMatrix<f64>, x: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(a.transpose() * x + x * a + c))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().cholesky().map(|c| c.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let c = DMatrix::from_element(1, 1, 2.0);
        let x = lyapunov(&a, &c).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_nonnormal_residual() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 50.0, 0.0, 0.0, -2.0, 30.0, 1.0, 0.0, -3.0]);
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let x = lyapunov(&a, &c).unwrap();
        let r = lyapunov_residual(&a, &x, &c);
        assert!(r.norm() <= 1e-10 * x.norm(), "{}", r.norm());
    }

    #[test]
    fn complex_schur_is_triangular() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let s = ComplexSchur::new(&a).unwrap();
        let back = &s.u * &s.t * s.u.adjoint();
        assert!((back - to_complex(&a)).norm() < 1e-12);
        let mut ev: Vec<f64> = s.eigenvalues().iter().map(|z| z.im).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vstack_handles_empty_blocks() {
        let a = DMatrix::<f64>::zeros(0, 3);
        let b = DMatrix::<f64>::identity(3, 3);
        let s = vstack(&[&a, &b]);
        assert_eq!(s.shape(), (3, 3));
        assert_eq!(s, b);
    }
}
