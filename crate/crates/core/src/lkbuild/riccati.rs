use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexSchur};

#[derive(Clone, Debug)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Spectral abscissa of A + S P.
    pub closed_loop_abscissa: f64,
}

/// Relative residual of Aᵀ P + P A + Q + P S P.
pub fn care_residual(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    q: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let lin = a.transpose() * p + p * a;
    let quad = p * s * p;
    let r = &lin + q + &quad;
    let scale = lin.norm() + q.norm() + quad.norm();
    if scale == 0.0 {
        0.0
    } else {
        r.norm() / scale
    }
}

/// Newton–Kleinman for the stabilizing solution of Aᵀ P + P A + Q + P S P = 0 with S ⪰ 0, started at P = 0.
/// A must be Hurwitz.
pub fn solve_care(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    q: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<CareSolution> {
    let fail =
        |reason: String, iterations| Err(Error::AreNoStabilizingSolution { reason, iterations });
    let mut p = DMatrix::zeros(a.nrows(), a.ncols());
    let mut prev_residual = f64::INFINITY;
    for k in 0..max_iter {
        let ak = a + s * &p;
        let schur = ComplexSchur::new(&ak)?;
        let abscissa = schur
            .eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if !(abscissa < 0.0) {
            return fail(
                format!("iterate {k} has closed-loop spectral abscissa {abscissa:e}"),
                k,
            );
        }
        let rhs = q - &p * s * &p;
        let mut next = schur.solve_lyapunov(&rhs)?;
        let corr = linalg::lyapunov_residual(&ak, &next, &rhs);
        next += schur.solve_lyapunov(&corr)?;
        if next.iter().any(|x| !x.is_finite()) {
            return fail(format!("iterate {k} is not finite"), k);
        }
        let step = (&next - &p).norm();
        p = next;
        let residual = care_residual(a, s, q, &p);
        let stagnated = step <= 1e-13 * p.norm().max(f64::MIN_POSITIVE)
            || (k > 3 && residual >= 0.5 * prev_residual);
        if residual <= tol || (stagnated && residual <= 1e2 * tol.max(1e-12)) {
            let closed_loop_abscissa = linalg::spectral_abscissa(&(a + s * &p))?;
            if !(closed_loop_abscissa < 0.0) {
                return fail(
                    format!(
                        "converged solution is not stabilizing (abscissa {closed_loop_abscissa:e})"
                    ),
                    k + 1,
                );
            }
            return Ok(CareSolution {
                p,
                residual,
                iterations: k + 1,
                closed_loop_abscissa,
            });
        }
        if stagnated && k > 8 {
            return fail(
                format!("Newton iteration stagnated at relative residual {residual:e}"),
                k + 1,
            );
        }
        prev_residual = residual;
    }
    fail(
        format!("no convergence within {max_iter} Newton steps"),
        max_iter,
    )
}
