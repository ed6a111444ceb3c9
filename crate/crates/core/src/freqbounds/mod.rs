//! Frequency-domain bounds: γ_max, ρ_min, k₁,min and the W(iω) ≻ 0 test.

pub(crate) mod sweep;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::spectrum;
use crate::sysmodel::{
    self, sector_preset, transfer_g, transformation_one, transformation_two, w_from_g,
    PerturbationStructure, SectorPreset, SectorRestriction, TdsSystem,
};
use sweep::sup_over_frequency;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub omega_max: f64,
    pub grid_points: usize,
    pub refine_tol: f64,
    pub max_refine_iters: usize,
    /// Collocation order used by the stability checks.
    pub stability_order: usize,
}

impl SweepConfig {
    pub fn for_system(sys: &TdsSystem) -> Self {
        Self {
            omega_max: 10.0 * (sys.norm_sum() + 1.0 + 2.0 * PI / sys.h()),
            grid_points: 4096,
            refine_tol: 1e-6,
            max_refine_iters: 100,
            stability_order: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_max > 0.0 && self.omega_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "omega_max must be > 0, got {}",
                self.omega_max
            )));
        }
        if self.grid_points < 64 {
            return Err(Error::InvalidParameter(format!(
                "grid_points must be >= 64, got {}",
                self.grid_points
            )));
        }
        if !(self.refine_tol > 0.0 && self.refine_tol <= 1e-2) {
            return Err(Error::InvalidParameter(format!(
                "refine_tol must lie in (0, 1e-2], got {}",
                self.refine_tol
            )));
        }
        if self.stability_order < 8 {
            return Err(Error::InvalidParameter(format!(
                "stability_order must be >= 8, got {}",
                self.stability_order
            )));
        }
        Ok(())
    }

    fn check_tail(&self, sys: &TdsSystem) -> Result<()> {
        let threshold = sys.norm_sum();
        if self.omega_max <= threshold {
            return Err(Error::TailBoundInvalid {
                omega: self.omega_max,
                threshold,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    GammaMax,
    RhoMin,
    K1Min,
    WDefinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl AssumptionCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Denied,
    Inconclusive,
    AssumptionFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    /// Bound value, or the minimum of λ_min(W(iω)) for `WDefinite`. Non-finite values mean a degenerate bound.
    pub value: f64,
    pub critical_omega: f64,
    /// For `WDefinite`: the minimum of λ_min(W) over the refined grid. For the bounds: the grid estimate before refinement.
    pub margin: f64,
    pub assumptions: Vec<AssumptionCheck>,
    pub tail_cutoff: f64,
    pub flags: Vec<String>,
    pub refine_tol: f64,
}

impl Certificate {
    pub fn assumptions_hold(&self) -> bool {
        self.assumptions.iter().all(|a| a.passed)
    }

    pub fn verdict(&self) -> Verdict {
        if !self.assumptions_hold() {
            return Verdict::AssumptionFailed;
        }
        if self.kind != CertificateKind::WDefinite {
            return Verdict::Certified;
        }
        if self.margin > self.refine_tol {
            Verdict::Certified
        } else if self.margin < -self.refine_tol {
            Verdict::Denied
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

fn io_gain_bound(ps: &PerturbationStructure) -> f64 {
    linalg::norm2(&ps.stacked_c()) * linalg::norm2(ps.b())
}

/// Upper bound on ‖G(iν)‖₂ for ν ≥ ω, if ω exceeds ‖A₀‖+‖A₁‖.
fn gain_tail(sys: &TdsSystem, k: f64, omega: f64) -> Option<f64> {
    let a = sys.norm_sum();
    (omega > a).then(|| k / (omega - a))
}

/// Lower bound on λ_min(W(iν)) valid for all |ν| ≥ ω.
pub fn tail_bound(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    sec: &SectorRestriction,
    omega: f64,
) -> Result<f64> {
    let g = gain_tail(sys, io_gain_bound(ps), omega).ok_or(Error::TailBoundInvalid {
        omega,
        threshold: sys.norm_sum(),
    })?;
    Ok(linalg::lambda_min(&(-sec.pi_aa()))
        - 2.0 * linalg::norm2(sec.pi_za()) * g
        - linalg::norm2(sec.pi_zz()) * g * g)
}

fn stability_check(name: &str, sys: &TdsSystem, cfg: &SweepConfig) -> AssumptionCheck {
    match spectrum::is_exponentially_stable(sys, cfg.stability_order) {
        Ok((stable, rep)) => AssumptionCheck::new(
            name,
            stable,
            format!("rightmost real part {:e}", rep.rightmost_real_part),
        ),
        Err(e) => AssumptionCheck::new(name, false, e.to_string()),
    }
}

fn axis_check(name: &str, sys: &TdsSystem, cfg: &SweepConfig) -> AssumptionCheck {
    match spectrum::imag_axis_clearance(sys, cfg) {
        Ok(c) => AssumptionCheck::new(
            name,
            c > spectrum::CLEARANCE_TOL,
            format!("min sigma_min(Delta(i omega)) = {c:e}"),
        ),
        Err(e) => AssumptionCheck::new(name, false, e.to_string()),
    }
}

/// max over ω ≥ 0 of ‖G(iω)‖₂ and its argmax.
pub fn hinf_norm(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    cfg: &SweepConfig,
) -> Result<(f64, f64)> {
    let r = hinf_sweep(sys, ps, cfg)?;
    Ok((r.value, r.omega))
}

fn hinf_sweep(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    cfg: &SweepConfig,
) -> Result<sweep::SupResult> {
    cfg.validate()?;
    cfg.check_tail(sys)?;
    ps.check_system(sys)?;
    let k = io_gain_bound(ps);
    sup_over_frequency(
        |w| {
            Ok(linalg::norm2_c(&transfer_g(
                sys,
                ps,
                Complex64::new(0.0, w),
            )?))
        },
        |w| gain_tail(sys, k, w),
        0.0,
        cfg,
    )
}

fn flags_of(r: &sweep::SupResult) -> Vec<String> {
    let mut f = Vec::new();
    if r.in_limit {
        f.push("attained_in_limit".to_string());
    }
    if !r.tail_resolved {
        f.push("tail_unresolved".to_string());
    }
    f
}

/// γ_max = 1/‖G‖_∞.
pub fn gamma_max(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    cfg: &SweepConfig,
) -> Result<Certificate> {
    let r = hinf_sweep(sys, ps, cfg)?;
    let mut flags = flags_of(&r);
    if r.value == 0.0 {
        flags.push("degenerate_bound".into());
    }
    Ok(Certificate {
        kind: CertificateKind::GammaMax,
        value: 1.0 / r.value,
        critical_omega: r.omega,
        margin: 1.0 / r.grid_value,
        assumptions: vec![stability_check("nominal_exponentially_stable", sys, cfg)],
        tail_cutoff: r.tail_cutoff,
        flags,
        refine_tol: cfg.refine_tol,
    })
}

fn square(ps: &PerturbationStructure) -> Result<()> {
    if ps.p() != ps.m() {
        return Err(Error::DimensionMismatch(format!(
            "requires p = m, got p = {}, m = {}",
            ps.p(),
            ps.m()
        )));
    }
    Ok(())
}

/// ρ_min = sup_ω λ_max(He(−G(iω))).
pub fn rho_min(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    cfg: &SweepConfig,
) -> Result<Certificate> {
    cfg.validate()?;
    cfg.check_tail(sys)?;
    ps.check_system(sys)?;
    square(ps)?;
    let k = io_gain_bound(ps);
    let r = sup_over_frequency(
        |w| {
            let g = transfer_g(sys, ps, Complex64::new(0.0, w))?;
            Ok(*linalg::hermitian_part_eigenvalues(&(-g)).last().unwrap())
        },
        |w| gain_tail(sys, k, w),
        0.0,
        cfg,
    )?;
    let rho = if r.value > 0.0 {
        r.value * (1.0 + 10.0 * cfg.refine_tol)
    } else {
        1.0
    };
    let transformed = sector_preset(&SectorPreset::OutputPassive { rho }, ps.p(), ps.m())
        .and_then(|sec| transformation_one(sys, ps, &sec));
    let first = match transformed {
        Ok(t) => stability_check("transformed_exponentially_stable", &t.system, cfg),
        Err(e) => AssumptionCheck::new("transformed_exponentially_stable", false, e.to_string()),
    };
    Ok(Certificate {
        kind: CertificateKind::RhoMin,
        value: r.value,
        critical_omega: r.omega,
        margin: r.grid_value,
        assumptions: vec![
            first,
            axis_check("nominal_no_imaginary_axis_roots", sys, cfg),
        ],
        tail_cutoff: r.tail_cutoff,
        flags: flags_of(&r),
        refine_tol: cfg.refine_tol,
    })
}

/// k₁,min = k₂ − 1/sup_ω λ_max(He(Gᴵᴵ(iω))) for K₂ = k₂I.
pub fn k1_min(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    k2: f64,
    cfg: &SweepConfig,
) -> Result<Certificate> {
    cfg.validate()?;
    cfg.check_tail(sys)?;
    ps.check_system(sys)?;
    square(ps)?;
    let t2 = transformation_two(sys, ps, k2 - 1.0, k2)?;
    let sys2 = &t2.system;
    cfg.check_tail(sys2)?;
    let k = io_gain_bound(ps);
    let r = sup_over_frequency(
        |w| {
            let g = transfer_g(sys2, ps, Complex64::new(0.0, w))?;
            Ok(*linalg::hermitian_part_eigenvalues(&g).last().unwrap())
        },
        |w| gain_tail(sys2, k, w),
        0.0,
        cfg,
    )?;
    let mut flags = flags_of(&r);
    let value = if r.value <= 0.0 {
        flags.push("degenerate_bound".into());
        f64::NEG_INFINITY
    } else {
        k2 - 1.0 / r.value
    };
    let k1_check = if value.is_finite() {
        value + 10.0 * cfg.refine_tol * value.abs().max(1.0)
    } else {
        k2 - 1.0
    };
    let k1_check = k1_check.min(k2 - 1e-12 * k2.abs().max(1.0));
    let mid = {
        let m = ps.m();
        let eye = nalgebra::DMatrix::<f64>::identity(m, m);
        sector_preset(
            &SectorPreset::GeneralSector {
                k1: &eye * k1_check,
                k2: &eye * k2,
            },
            m,
            m,
        )
        .and_then(|sec| transformation_one(sys, ps, &sec))
    };
    let first = match mid {
        Ok(t) => stability_check("midpoint_feedback_exponentially_stable", &t.system, cfg),
        Err(e) => AssumptionCheck::new(
            "midpoint_feedback_exponentially_stable",
            false,
            e.to_string(),
        ),
    };
    Ok(Certificate {
        kind: CertificateKind::K1Min,
        value,
        critical_omega: r.omega,
        margin: if r.grid_value > 0.0 {
            k2 - 1.0 / r.grid_value
        } else {
            f64::NEG_INFINITY
        },
        assumptions: vec![
            first,
            axis_check("transformed_no_imaginary_axis_roots", sys2, cfg),
        ],
        tail_cutoff: r.tail_cutoff,
        flags,
        refine_tol: cfg.refine_tol,
    })
}

/// Minimum of λ_min(W(iω)) over ω ≥ 0 with the assumption checks needed for existence.
pub fn certify_w(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    sec: &SectorRestriction,
    cfg: &SweepConfig,
) -> Result<Certificate> {
    let (cert, _) = certify_w_with_samples(sys, ps, sec, cfg)?;
    Ok(cert)
}

/// As [`certify_w`], also returning the evaluated (ω, λ_min(W(iω))) samples.
pub fn certify_w_with_samples(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    sec: &SectorRestriction,
    cfg: &SweepConfig,
) -> Result<(Certificate, Vec<(f64, f64)>)> {
    let r = w_margin_sweep(sys, ps, sec, cfg)?;
    let mut assumptions = vec![axis_check("nominal_no_imaginary_axis_roots", sys, cfg)];
    match transformation_one(sys, ps, sec) {
        Ok(t) => {
            assumptions.push(stability_check(
                "transformed_exponentially_stable",
                &t.system,
                cfg,
            ));
            let bd = match sysmodel::q_pair(ps, &t.sector) {
                Ok(_) => AssumptionCheck::new(
                    "block_diagonal_pi_zz",
                    true,
                    "off-diagonal blocks vanish".into(),
                ),
                Err(e) => AssumptionCheck::new("block_diagonal_pi_zz", false, e.to_string()),
            };
            assumptions.push(bd);
        }
        Err(e) => assumptions.push(AssumptionCheck::new(
            "transformed_exponentially_stable",
            false,
            e.to_string(),
        )),
    }
    let samples = r.samples.iter().map(|&(w, v)| (w, -v)).collect();
    let cert = Certificate {
        kind: CertificateKind::WDefinite,
        value: -r.value,
        critical_omega: r.omega,
        margin: -r.value,
        assumptions,
        tail_cutoff: r.tail_cutoff,
        flags: flags_of(&r),
        refine_tol: cfg.refine_tol,
    };
    Ok((cert, samples))
}

fn w_margin_sweep(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    sec: &SectorRestriction,
    cfg: &SweepConfig,
) -> Result<sweep::SupResult> {
    cfg.validate()?;
    cfg.check_tail(sys)?;
    ps.check_system(sys)?;
    sec.check_structure(ps)?;
    let limit = -linalg::lambda_min(&(-sec.pi_aa()));
    sup_over_frequency(
        |w| {
            let g = transfer_g(sys, ps, Complex64::new(0.0, w))?;
            Ok(-linalg::hermitian_part_eigenvalues(&w_from_g(&g, sec))[0])
        },
        |w| tail_bound(sys, ps, sec, w).ok().map(|b| -b),
        limit,
        cfg,
    )
}

/// Per-frequency sweep data (ω, λ_min(W(iω)), ‖G(iω)‖₂) on the base grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub omega: f64,
    pub lambda_min_w: f64,
    pub g_norm: f64,
}

pub fn sweep_table(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    sec: &SectorRestriction,
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    cfg.validate()?;
    sweep::base_grid(cfg.omega_max, cfg.grid_points)
        .par_iter()
        .map(
            |&omega| match transfer_g(sys, ps, Complex64::new(0.0, omega)) {
                Ok(g) => Ok(SweepRow {
                    omega,
                    lambda_min_w: linalg::hermitian_part_eigenvalues(&w_from_g(&g, sec))[0],
                    g_norm: linalg::norm2_c(&g),
                }),
                Err(Error::SingularCharMatrix { .. }) => Ok(SweepRow {
                    omega,
                    lambda_min_w: f64::NEG_INFINITY,
                    g_norm: f64::INFINITY,
                }),
                Err(e) => Err(e),
            },
        )
        .collect()
}
