//! Rightmost characteristic roots and imaginary-axis checks.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqbounds::{sweep, SweepConfig};
use crate::linalg;
use crate::lkbuild::{discretize_generator, Discretization};
use crate::sysmodel::{char_matrix, char_matrix_derivative, TdsSystem};

/// Real part below which a rightmost root counts as stable.
pub const STABILITY_THRESHOLD: f64 = -1e-8;
/// σ_min(Δ(iω)) above which the axis is considered root-free.
pub const CLEARANCE_TOL: f64 = 1e-8;
const ROOT_RESIDUAL_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub value: Complex64,
    pub polished: bool,
    /// σ_min(Δ(s)) / max(1, ‖Δ(s)‖₂).
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootReport {
    /// Sorted by descending real part.
    pub roots: Vec<Root>,
    pub rightmost_real_part: f64,
    pub imag_axis_clearance: f64,
    pub discretization_order: usize,
}

impl RootReport {
    pub fn values(&self) -> Vec<Complex64> {
        self.roots.iter().map(|r| r.value).collect()
    }
}

fn root_residual(sys: &TdsSystem, s: Complex64) -> f64 {
    let d = char_matrix(sys, s);
    let sv = nalgebra::SVD::new(d, false, false).singular_values;
    sv.min() / sv.max().max(1.0)
}

/// Newton iteration on det Δ(s) = 0 using d/ds log det Δ = tr(Δ⁻¹Δ′).
pub fn polish_root(sys: &TdsSystem, s0: Complex64) -> (Complex64, bool) {
    let mut s = s0;
    let radius = 0.5 * (1.0 + s0.norm());
    for _ in 0..NEWTON_MAX_ITER {
        let d = char_matrix(sys, s);
        let Some(x) = linalg::solve_c(&d, &char_matrix_derivative(sys, s)) else {
            return (s, true);
        };
        let tr = x.trace();
        if tr.norm() == 0.0 || !tr.is_finite() {
            return (s, root_residual(sys, s) <= ROOT_RESIDUAL_TOL);
        }
        let step = tr.inv();
        s -= step;
        if !s.is_finite() || (s - s0).norm() > radius {
            return (s0, false);
        }
        if step.norm() <= 1e-14 * (1.0 + s.norm()) {
            break;
        }
    }
    let ok = root_residual(sys, s) <= ROOT_RESIDUAL_TOL;
    (s, ok)
}

fn sort_roots(v: &mut [Root]) {
    v.sort_by(|a, b| {
        b.value
            .re
            .total_cmp(&a.value.re)
            .then(b.value.im.total_cmp(&a.value.im))
    });
}

/// The `count` rightmost characteristic roots from a collocation of order `order`, Newton-polished.
pub fn rightmost_roots(sys: &TdsSystem, order: usize, count: usize) -> Result<RootReport> {
    if order < 8 {
        return Err(Error::InvalidParameter(format!(
            "spectral order must be >= 8, got {order}"
        )));
    }
    let disc = Discretization::new(order, sys.h())?;
    let mut eig = linalg::eigenvalues(&discretize_generator(sys, &disc))?;
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let mut roots: Vec<Root> = Vec::new();
    for &e in eig.iter().take(count.max(1)) {
        let (s, polished) = polish_root(sys, e);
        let s = if polished && s.im.abs() <= 1e-12 * (1.0 + s.re.abs()) {
            Complex64::new(s.re, 0.0)
        } else {
            s
        };
        if roots
            .iter()
            .any(|r| (r.value - s).norm() <= 1e-8 * (1.0 + s.norm()))
        {
            continue;
        }
        roots.push(Root {
            value: s,
            polished,
            residual: root_residual(sys, s),
        });
    }
    sort_roots(&mut roots);
    let rightmost_real_part = roots.first().map_or(f64::NEG_INFINITY, |r| r.value.re);
    let imag_axis_clearance = imag_axis_clearance(sys, &SweepConfig::for_system(sys))?;
    Ok(RootReport {
        roots,
        rightmost_real_part,
        imag_axis_clearance,
        discretization_order: order,
    })
}

/// Stable iff the rightmost polished root has real part below −1e-8.
pub fn is_exponentially_stable(sys: &TdsSystem, order: usize) -> Result<(bool, RootReport)> {
    let rep = rightmost_roots(sys, order, 8)?;
    let stable = rep.rightmost_real_part < STABILITY_THRESHOLD
        && rep.roots.first().is_some_and(|r| r.polished);
    Ok((stable, rep))
}

/// min over ω ≥ 0 of σ_min(Δ(iω)), using σ_min ≥ ω − ‖A₀‖ − ‖A₁‖ beyond the grid.
pub fn imag_axis_clearance(sys: &TdsSystem, cfg: &SweepConfig) -> Result<f64> {
    let a = sys.norm_sum();
    let r = sweep::sup_over_frequency(
        |w| {
            Ok(-linalg::sigma_min_c(&char_matrix(
                sys,
                Complex64::new(0.0, w),
            )))
        },
        |w| Some(-(w - a)),
        f64::NEG_INFINITY,
        cfg,
    )?;
    Ok(-r.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_free_root() {
        let sys = TdsSystem::scalar(-1.0, 0.0, 1.0).unwrap();
        let rep = rightmost_roots(&sys, 16, 4).unwrap();
        assert!((rep.roots[0].value - Complex64::new(-1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn unstable_ode() {
        let sys = TdsSystem::scalar(1.0, 0.0, 1.0).unwrap();
        assert!(!is_exponentially_stable(&sys, 16).unwrap().0);
    }

    #[test]
    fn clearance_of_first_order_lag() {
        let sys = TdsSystem::scalar(-1.0, 0.0, 1.0).unwrap();
        let c = imag_axis_clearance(&sys, &SweepConfig::for_system(&sys)).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }
}
