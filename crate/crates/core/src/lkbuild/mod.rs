//! Construction of the functional from a collocated Riccati equation, and its evaluation.

mod discretization;
mod functional;
mod riccati;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use discretization::{discretize_generator, Discretization};
pub use functional::{
    defining_equation_residual, defining_equation_sides, positivity_probe, FunctionalMeta,
    LkFunctional, PositivityReport,
};
pub use riccati::{care_residual, solve_care, CareSolution};

use crate::error::{Error, Result};
use crate::sysmodel::{
    q_pair, transformation_one, PerturbationStructure, SectorRestriction, TdsSystem,
};

pub const NEWTON_MAX_ITER: usize = 50;
pub const DEFAULT_ARE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreSolveReport {
    pub residual: f64,
    pub newton_iters: usize,
    pub closed_loop_stable: bool,
    pub closed_loop_abscissa: f64,
    /// Dimension of the discretized state: n·(N+1) node values.
    pub n_state: usize,
}

/// Solves the collocated Riccati equation for the transformed system and extracts the kernels.
pub fn build_functional(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    sec: &SectorRestriction,
    disc: &Discretization,
    tol: f64,
) -> Result<(LkFunctional, AreSolveReport)> {
    if disc.h() != sys.h() {
        return Err(Error::InvalidParameter(format!(
            "discretization delay {} differs from system delay {}",
            disc.h(),
            sys.h()
        )));
    }
    let t = transformation_one(sys, ps, sec)?;
    let q = q_pair(ps, &t.sector)?;
    let n = sys.n();
    let nn = disc.order();
    let size = n * (nn + 1);
    let a = discretize_generator(&t.system, disc);
    let mut q_big = DMatrix::zeros(size, size);
    q_big
        .view_mut((nn * n, nn * n), (n, n))
        .copy_from(&(&q.q0 + &q.q1));
    let mut s_big = DMatrix::zeros(size, size);
    let s = ps.b() * sec.neg_pi_aa_inv()? * ps.b().transpose();
    s_big.view_mut((nn * n, nn * n), (n, n)).copy_from(&s);

    let sol = solve_care(&a, &s_big, &q_big, tol, NEWTON_MAX_ITER)?;
    let meta = FunctionalMeta {
        system: sys.clone(),
        structure: ps.clone(),
        sector: sec.clone(),
    };
    let lk = LkFunctional::from_quadratic_form(&sol.p, q.q1, disc.clone(), meta)?;
    let report = AreSolveReport {
        residual: sol.residual,
        newton_iters: sol.iterations,
        closed_loop_stable: sol.closed_loop_abscissa < 0.0,
        closed_loop_abscissa: sol.closed_loop_abscissa,
        n_state: size,
    };
    Ok((lk, report))
}
