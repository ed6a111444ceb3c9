//! Delay Lyapunov matrices and the complete-type robustness bound.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::spectrum;
use crate::sysmodel::TdsSystem;

/// U(τ) on [−h, h] for ẋ = A₀x(t) + A₁x(t−h) and weight W.
///
/// On [0, h] the pair Y(τ) = U(τ), Z(τ) = U(τ−h) solves a linear ODE of size 2n², so
/// U is stored as its initial value and the generator of that ODE.
#[derive(Clone, Debug)]
pub struct DelayLyapunovMatrix {
    n: usize,
    h: f64,
    generator: DMatrix<f64>,
    initial: DVector<f64>,
}

fn unvec(v: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, v)
}

impl DelayLyapunovMatrix {
    pub fn new(sys: &TdsSystem, w: &DMatrix<f64>) -> Result<Self> {
        let n = sys.n();
        if w.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "W is {}x{}, expected {n}x{n}",
                w.nrows(),
                w.ncols()
            )));
        }
        let nn = n * n;
        let id = DMatrix::<f64>::identity(n, n);
        let a0t = sys.a0().transpose();
        let a1t = sys.a1().transpose();
        let mut m = DMatrix::zeros(2 * nn, 2 * nn);
        m.view_mut((0, 0), (nn, nn)).copy_from(&a0t.kronecker(&id));
        m.view_mut((0, nn), (nn, nn)).copy_from(&a1t.kronecker(&id));
        m.view_mut((nn, 0), (nn, nn))
            .copy_from(&(-id.kronecker(&a1t)));
        m.view_mut((nn, nn), (nn, nn))
            .copy_from(&(-id.kronecker(&a0t)));
        let e = (&m * sys.h()).exp();

        // Y(0) = Z(h) and U(0)A₀ + A₀ᵀU(0) + U(−h)A₁ + A₁ᵀU(h) = −W.
        let mut lhs = DMatrix::zeros(2 * nn, 2 * nn);
        let mut rhs = DVector::zeros(2 * nn);
        let ihh = DMatrix::<f64>::identity(nn, nn);
        let e_y = e.rows(0, nn).into_owned();
        let e_z = e.rows(nn, nn).into_owned();
        let mut top = -e_z;
        top.view_mut((0, 0), (nn, nn)).add_assign(&ihh);
        lhs.rows_mut(0, nn).copy_from(&top);
        let mut bottom = id.kronecker(&sys.a1().transpose()) * e_y;
        let lyap = a0t.kronecker(&id) + id.kronecker(&a0t);
        bottom.view_mut((0, 0), (nn, nn)).add_assign(&lyap);
        bottom
            .view_mut((0, nn), (nn, nn))
            .add_assign(&a1t.kronecker(&id));
        lhs.rows_mut(nn, nn).copy_from(&bottom);
        rhs.rows_mut(nn, nn)
            .copy_from(&(-DVector::from_column_slice(w.as_slice())));

        let lu = lhs.lu();
        let initial = lu.solve(&rhs).ok_or_else(|| {
            Error::LinearAlgebra("delay Lyapunov boundary problem is singular".into())
        })?;
        if initial.iter().any(|x| !x.is_finite()) {
            return Err(Error::LinearAlgebra(
                "delay Lyapunov matrix is not finite".into(),
            ));
        }
        Ok(Self {
            n,
            h: sys.h(),
            generator: m,
            initial,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// U(τ) for τ ∈ [−h, h], using U(−τ) = U(τ)ᵀ.
    pub fn at(&self, tau: f64) -> DMatrix<f64> {
        let t = tau.abs().min(self.h);
        let y = if t == 0.0 {
            unvec(&self.initial.as_slice()[..self.n * self.n], self.n)
        } else {
            let u = (&self.generator * t).exp() * &self.initial;
            unvec(&u.as_slice()[..self.n * self.n], self.n)
        };
        if tau < 0.0 {
            y.transpose()
        } else {
            y
        }
    }

    /// Ψ(0) = U(0), symmetrized.
    pub fn psi0(&self) -> DMatrix<f64> {
        linalg::symmetrize(&self.at(0.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompleteTypeBound {
    pub gamma: f64,
    pub lambda_max_psi0: f64,
    pub a1_norm: f64,
    /// The three candidates λ_min(W_i)/c_i before taking the minimum and dividing by λ_max(Ψ(0)).
    pub candidates: [f64; 3],
}

/// Robustness bound of the complete-type functional with weights W₀, W₁, W₂.
/// Ψ is computed with W = W₀ + W₁ + hW₂.
pub fn complete_type_gamma(
    sys: &TdsSystem,
    w0: &DMatrix<f64>,
    w1: &DMatrix<f64>,
    w2: &DMatrix<f64>,
) -> Result<CompleteTypeBound> {
    let (stable, report) = spectrum::is_exponentially_stable(sys, 32)?;
    if !stable {
        return Err(Error::UnstableNominal {
            rightmost: report.rightmost_real_part,
        });
    }
    for (name, w) in [("W0", w0), ("W1", w1), ("W2", w2)] {
        if linalg::relative_asymmetry(w) > 1e-8 {
            return Err(Error::Asymmetric {
                name,
                asymmetry: linalg::relative_asymmetry(w),
            });
        }
        if !(linalg::lambda_min(w) > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive definite"
            )));
        }
    }
    let h = sys.h();
    let w = w0 + w1 + w2 * h;
    let psi0 = DelayLyapunovMatrix::new(sys, &w)?.psi0();
    let lambda_max_psi0 = linalg::lambda_max(&psi0);
    let a1_norm = linalg::norm2(sys.a1());
    let candidates = [
        linalg::lambda_min(w0) / (2.0 + h * a1_norm),
        linalg::lambda_min(w1) / (1.0 + h * a1_norm),
        if a1_norm > 0.0 {
            linalg::lambda_min(w2) / a1_norm
        } else {
            f64::INFINITY
        },
    ];
    let gamma = candidates.iter().copied().fold(f64::INFINITY, f64::min) / lambda_max_psi0;
    Ok(CompleteTypeBound {
        gamma,
        lambda_max_psi0,
        a1_norm,
        candidates,
    })
}
