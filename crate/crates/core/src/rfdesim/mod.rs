//! Method-of-steps simulation of the perturbed equation and trajectory-level checks of the functional.

mod nonlinearity;

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use nonlinearity::{GainFn, MapFn, Nonlinearity, NonlinearityKind};

use crate::error::{Error, Result};
use crate::lkbuild::LkFunctional;
use crate::randfn::History;
use crate::sysmodel::{PerturbationStructure, SectorRestriction, TdsSystem};

const BLOW_UP: f64 = 1e12;

/// Dense solution on [−h, t_end]: the initial function, then cubic Hermite pieces per step.
#[derive(Clone)]
pub struct Trajectory {
    step: f64,
    t_end: f64,
    h: f64,
    n: usize,
    xs: Vec<DVector<f64>>,
    fs: Vec<DVector<f64>>,
    history: Arc<dyn History>,
}

impl std::fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trajectory")
            .field("step", &self.step)
            .field("t_end", &self.t_end)
            .field("h", &self.h)
            .field("n", &self.n)
            .field("steps", &(self.xs.len().saturating_sub(1)))
            .finish()
    }
}

impl Trajectory {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh points t_k = k·step.
    pub fn mesh(&self) -> impl Iterator<Item = (f64, &DVector<f64>)> {
        self.xs
            .iter()
            .enumerate()
            .map(move |(k, x)| (k as f64 * self.step, x))
    }

    fn piece(&self, t: f64) -> (usize, f64) {
        let last = self.xs.len() - 2;
        let k = ((t / self.step).floor() as usize).min(last);
        (k, (t - k as f64 * self.step) / self.step)
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        if t < 0.0 || self.xs.len() < 2 {
            return if t <= 0.0 {
                self.history.value(t.max(-self.h))
            } else {
                self.xs[0].clone()
            };
        }
        let (k, s) = self.piece(t);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &self.xs[k] * h00
            + &self.fs[k] * (h10 * self.step)
            + &self.xs[k + 1] * h01
            + &self.fs[k + 1] * (h11 * self.step)
    }

    pub fn derivative(&self, t: f64) -> DVector<f64> {
        if t < 0.0 || self.xs.len() < 2 {
            return if t < 0.0 {
                self.history.derivative(t.max(-self.h))
            } else {
                self.fs[0].clone()
            };
        }
        let (k, s) = self.piece(t);
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / self.step;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / self.step;
        let d11 = 3.0 * s2 - 2.0 * s;
        &self.xs[k] * d00 + &self.fs[k] * d10 + &self.xs[k + 1] * d01 + &self.fs[k + 1] * d11
    }

    /// Times at which x_t is smooth enough for the finite-difference checks: x jumps in
    /// derivative at 0 and in second derivative at h, so segments must clear [−h, h] by two steps.
    pub fn check_window(&self) -> (f64, f64) {
        (2.0 * self.h + 2.0 * self.step, self.t_end - self.step)
    }

    /// `count` evenly spaced times across [`Self::check_window`].
    pub fn check_times(&self, count: usize) -> Vec<f64> {
        let (a, b) = self.check_window();
        if count == 0 || !(b > a) {
            return Vec::new();
        }
        if count == 1 {
            return vec![a];
        }
        (0..count)
            .map(|i| a + (b - a) * i as f64 / (count - 1) as f64)
            .collect()
    }

    /// Samples of the segment x_t at the given offsets θ ∈ [−h, 0].
    pub fn segment(&self, t: f64, thetas: &[f64]) -> Vec<DVector<f64>> {
        thetas.iter().map(|&th| self.value(t + th)).collect()
    }
}

fn perturbed_rhs(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    nl: &Nonlinearity,
    t: f64,
    x: &DVector<f64>,
    xd: &DVector<f64>,
) -> DVector<f64> {
    let zeta = ps.apply_c(xd, x);
    sys.rhs(x, xd) - ps.b() * nl.eval(t, &zeta)
}

/// Classical RK4 with history lookup through the dense output.
pub fn integrate(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    nl: &Nonlinearity,
    phi0: Arc<dyn History>,
    step: f64,
    t_end: f64,
) -> Result<Trajectory> {
    ps.check_system(sys)?;
    if nl.p() != ps.p() || nl.m() != ps.m() {
        return Err(Error::DimensionMismatch(format!(
            "nonlinearity maps R^{} -> R^{}, structure needs R^{} -> R^{}",
            nl.p(),
            nl.m(),
            ps.p(),
            ps.m()
        )));
    }
    let h = sys.h();
    if !(step > 0.0 && step <= h / 4.0) {
        return Err(Error::InvalidParameter(format!(
            "step must lie in (0, h/4], got {step}"
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    let steps = (t_end / step).round().max(1.0) as usize;
    let x0 = phi0.value(0.0);
    let mut traj = Trajectory {
        step,
        t_end: steps as f64 * step,
        h,
        n: sys.n(),
        xs: vec![x0.clone()],
        fs: Vec::with_capacity(steps + 1),
        history: phi0,
    };
    traj.fs
        .push(perturbed_rhs(sys, ps, nl, 0.0, &x0, &traj.value(-h)));
    traj.xs.reserve(steps);
    for k in 0..steps {
        let t = k as f64 * step;
        let x = traj.xs[k].clone();
        // Delayed arguments fall on [−h, t_k], which is already resolved.
        let lookup = |tau: f64, traj: &Trajectory| {
            if tau - h <= 0.0 || traj.xs.len() >= 2 {
                traj.value(tau - h)
            } else {
                traj.xs[0].clone()
            }
        };
        let k1 = traj.fs[k].clone();
        let xd_half = lookup(t + 0.5 * step, &traj);
        let xd_full = lookup(t + step, &traj);
        let k2 = perturbed_rhs(
            sys,
            ps,
            nl,
            t + 0.5 * step,
            &(&x + &k1 * (0.5 * step)),
            &xd_half,
        );
        let k3 = perturbed_rhs(
            sys,
            ps,
            nl,
            t + 0.5 * step,
            &(&x + &k2 * (0.5 * step)),
            &xd_half,
        );
        let k4 = perturbed_rhs(sys, ps, nl, t + step, &(&x + &k3 * step), &xd_full);
        let next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0);
        let norm = next.norm();
        if !(norm <= BLOW_UP) {
            return Err(Error::BlowUp { t: t + step, norm });
        }
        traj.xs.push(next);
        let t1 = t + step;
        let xd = traj.value(t1 - h);
        let f1 = perturbed_rhs(sys, ps, nl, t1, &traj.xs[k + 1], &xd);
        traj.fs.push(f1);
    }
    Ok(traj)
}

fn check_time(traj: &Trajectory, t: f64) -> Result<()> {
    if !(t >= -1e-12 && t <= traj.t_end + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "time {t} outside [0, {}]",
            traj.t_end
        )));
    }
    Ok(())
}

/// V(x_t) at each requested time.
pub fn functional_along(
    lk: &LkFunctional,
    traj: &Trajectory,
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let nodes = lk.discretization().nodes();
    times
        .iter()
        .map(|&t| {
            check_time(traj, t)?;
            Ok((t, lk.evaluate(&traj.segment(t, nodes))?))
        })
        .collect()
}

/// Central difference of V(x_t) with spacing δ = step, Richardson-extrapolated with δ/2.
pub fn fd_derivative(lk: &LkFunctional, traj: &Trajectory, t: f64) -> Result<f64> {
    let nodes = lk.discretization().nodes();
    let d = traj.step;
    check_time(traj, t - d)?;
    check_time(traj, t + d)?;
    let v = |s: f64| lk.evaluate(&traj.segment(s, nodes));
    let d1 = (v(t + d)? - v(t - d)?) / (2.0 * d);
    let d2 = (v(t + 0.5 * d)? - v(t - 0.5 * d)?) / d;
    Ok((4.0 * d2 - d1) / 3.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSplit {
    /// D_fV(x_t): derivative along the nominal flow.
    pub nominal: f64,
    /// 2 v(x_t)ᵀ g(x_t).
    pub perturbation: f64,
    /// Richardson finite difference of V(x_t).
    pub finite_difference: f64,
    pub value: f64,
}

/// Both sides of D_(f+g)V = D_fV + 2vᵀg at time t.
pub fn derivative_split(
    lk: &LkFunctional,
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    nl: &Nonlinearity,
    traj: &Trajectory,
    t: f64,
) -> Result<DerivativeSplit> {
    let disc = lk.discretization();
    let nn = disc.order();
    let h = sys.h();
    let phi = traj.segment(t, disc.nodes());
    let mut vel: Vec<DVector<f64>> = disc
        .nodes()
        .iter()
        .map(|&th| {
            let s = t + th;
            if s < 0.0 {
                traj.history.derivative(s)
            } else {
                perturbed_rhs(sys, ps, nl, s, &traj.value(s), &traj.value(s - h))
            }
        })
        .collect();
    vel[nn] = sys.rhs(&phi[nn], &phi[0]);
    let nominal = lk.derivative_along(&phi, &vel)?;
    let zeta = ps.apply_c(&phi[0], &phi[nn]);
    let g = -(ps.b() * nl.eval(t, &zeta));
    let perturbation = 2.0 * lk.evaluate_vec(&phi)?.dot(&g);
    Ok(DerivativeSplit {
        nominal,
        perturbation,
        finite_difference: fd_derivative(lk, traj, t)?,
        value: lk.evaluate(&phi)?,
    })
}

/// max over `times` of |FD − (D_fV + 2vᵀg)| / (1 + |D_fV + 2vᵀg|).
pub fn perturbation_derivative_check(
    lk: &LkFunctional,
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    nl: &Nonlinearity,
    traj: &Trajectory,
    times: &[f64],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for &t in times {
        let d = derivative_split(lk, sys, ps, nl, traj, t)?;
        let analytic = d.nominal + d.perturbation;
        worst = worst.max((d.finite_difference - analytic).abs() / (1.0 + analytic.abs()));
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// max of FD slope / (1 + V), clipped at 0.
    pub max_slope_violation: f64,
    /// max of (FD slope + k₃‖𝒞x_t‖²) / (1 + V), clipped at 0, when k₃ is given.
    pub max_bound_violation: Option<f64>,
    /// max of (V(t_{i+1}) − V(t_i)) / (1 + V(t_i)), clipped at 0.
    pub max_increase: f64,
    pub initial_value: f64,
    pub final_value: f64,
}

/// Checks that V(x_t) is nonincreasing, and optionally the slope bound −k₃‖𝒞x_t‖².
pub fn monotonicity_check(
    lk: &LkFunctional,
    ps: &PerturbationStructure,
    traj: &Trajectory,
    times: &[f64],
    k3: Option<f64>,
) -> Result<MonotonicityReport> {
    let values = functional_along(lk, traj, times)?;
    let mut rep = MonotonicityReport {
        max_slope_violation: 0.0,
        max_bound_violation: k3.map(|_| 0.0),
        max_increase: 0.0,
        initial_value: values.first().map_or(0.0, |v| v.1),
        final_value: values.last().map_or(0.0, |v| v.1),
    };
    for w in values.windows(2) {
        rep.max_increase = rep
            .max_increase
            .max((w[1].1 - w[0].1) / (1.0 + w[0].1.abs()));
    }
    let h = traj.h;
    for &(t, v) in &values {
        let slope = fd_derivative(lk, traj, t)?;
        let scale = 1.0 + v.abs();
        rep.max_slope_violation = rep.max_slope_violation.max(slope / scale);
        if let (Some(k3), Some(b)) = (k3, rep.max_bound_violation.as_mut()) {
            let zeta = ps.apply_c(&traj.value(t - h), &traj.value(t));
            *b = b.max((slope + k3 * zeta.norm_squared()) / scale);
        }
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorMembership {
    pub fraction_inside: f64,
    pub worst_margin: f64,
    pub samples: usize,
}

/// Samples ζ in the ball of the given radius (ζ = 0 first) and evaluates w(ζ, a(ζ)) − ℓ(ζ) with ℓ = k₃‖ζ‖².
pub fn sector_membership<R: Rng + ?Sized>(
    nl: &Nonlinearity,
    sec: &SectorRestriction,
    samples: usize,
    radius: f64,
    offset_k3: Option<f64>,
    rng: &mut R,
) -> Result<SectorMembership> {
    if nl.p() != sec.p() || nl.m() != sec.m() {
        return Err(Error::DimensionMismatch(
            "nonlinearity and sector dimensions differ".into(),
        ));
    }
    let p = sec.p();
    let k3 = offset_k3.unwrap_or(0.0);
    let mut inside = 0usize;
    let mut worst = f64::INFINITY;
    for k in 0..samples.max(1) {
        let (t, zeta) = if k == 0 {
            (0.0, DVector::zeros(p))
        } else {
            let dir = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
            let dn = dir.norm();
            let r = radius * rng.gen_range(0.0f64..=1.0).powf(1.0 / p as f64);
            let z = if dn > 0.0 {
                dir * (r / dn)
            } else {
                DVector::zeros(p)
            };
            (rng.gen_range(0.0..10.0), z)
        };
        let a = nl.eval(t, &zeta);
        let margin = sec.w(&zeta, &a) - k3 * zeta.norm_squared();
        // Relative slack for rounding in the quadratic form.
        let tol = 1e-12 * (1.0 + zeta.norm_squared() + a.norm_squared());
        if margin >= -tol {
            inside += 1;
        }
        worst = worst.min(margin);
    }
    Ok(SectorMembership {
        fraction_inside: inside as f64 / samples.max(1) as f64,
        worst_margin: worst,
        samples: samples.max(1),
    })
}
