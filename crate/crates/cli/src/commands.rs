use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tdsrobust::complete_type::complete_type_gamma;
use tdsrobust::freqbounds::{self, Certificate, Verdict};
use tdsrobust::lkbuild::{self, defining_equation_residual, positivity_probe, FunctionalMeta};
use tdsrobust::randfn::{ChebyshevHistory, History};
use tdsrobust::rfdesim::{self, Trajectory};
use tdsrobust::{
    spectrum, Discretization, LkFunctional, PerturbationStructure, SectorRestriction, TdsSystem,
};

use crate::config::{self, Gain, ProblemConfig, SectorSpec};
use crate::output::{header, write_csv};
use crate::report::{Outcome, Report};
use crate::{CliError, Command};

pub struct Context {
    pub config_path: PathBuf,
    pub config: ProblemConfig,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl Context {
    pub fn load(path: &Path, out: Option<PathBuf>, seed: u64) -> Result<Self, CliError> {
        Ok(Self {
            config_path: path.to_path_buf(),
            config: config::load(path)?,
            out,
            seed,
        })
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn out_file(&self, name: &str) -> Option<PathBuf> {
        self.out.as_ref().map(|d| d.join(name))
    }
}

pub fn dispatch(ctx: &Context, cmd: Command, report: &mut Report) -> Result<(), CliError> {
    match cmd {
        Command::Bounds { complete_type } => bounds(ctx, complete_type, report),
        Command::Certify => certify(ctx, report),
        Command::Construct => construct(ctx, report),
        Command::Verify => verify(ctx, report),
        Command::Ellipse => ellipse(ctx, report),
        Command::CompleteType => complete_type_cmd(ctx, report),
        Command::Spectrum => spectrum_cmd(ctx, report),
        Command::Simulate => simulate(ctx, report),
    }
}

fn core<T>(context: &str, r: tdsrobust::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::from_core(context, e))
}

fn certificate_value(c: &Certificate) -> Value {
    let mut v = serde_json::to_value(c).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        m.insert(
            "verdict".into(),
            serde_json::to_value(c.verdict()).unwrap_or(Value::Null),
        );
    }
    v
}

/// Outcome of a bound computation: assumptions first, then an unresolved tail.
fn bound_outcome(c: &Certificate) -> Outcome {
    if !c.assumptions_hold() {
        Outcome::AssumptionFailed
    } else if c.has_flag("tail_unresolved") {
        Outcome::Inconclusive
    } else {
        Outcome::Success
    }
}

fn verdict_outcome(v: Verdict) -> Outcome {
    match v {
        Verdict::Certified => Outcome::Certified,
        Verdict::Denied => Outcome::Denied,
        Verdict::Inconclusive => Outcome::Inconclusive,
        Verdict::AssumptionFailed => Outcome::AssumptionFailed,
    }
}

fn write_sweep(
    ctx: &Context,
    report: &mut Report,
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    sec: &SectorRestriction,
    cfg: &freqbounds::SweepConfig,
) -> Result<(), CliError> {
    let Some(path) = ctx.out_file("sweep.csv") else {
        return Ok(());
    };
    let rows = core("sweep", freqbounds::sweep_table(sys, ps, sec, cfg))?;
    let data: Vec<_> = rows
        .iter()
        .map(|r| vec![Some(r.omega), Some(r.lambda_min_w), Some(r.g_norm)])
        .collect();
    write_csv(&path, &header(&["omega", "lambda_min_w", "g_norm"]), &data)?;
    report.files.push(path.display().to_string());
    Ok(())
}

/// Scalar k₂ for the sector kinds bounded through k₁,min.
fn scalar_k2(ctx: &Context, k2: &Gain) -> Result<f64, CliError> {
    if let Some(k) = ctx.config.bounds.as_ref().and_then(|b| b.k2) {
        return Ok(k);
    }
    match k2 {
        Gain::Scalar(k) => Ok(*k),
        Gain::Matrix(_) => Err(CliError::Input(
            "bounds.k2: required when sector.k2 is a matrix".into(),
        )),
    }
}

/// Structure seen by ‖W a‖ ≤ γ‖L ζ‖ after substituting ã = W a and ζ̃ = L ζ.
fn elliptic_structure(
    ps: &PerturbationStructure,
    l: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<PerturbationStructure, CliError> {
    let (p1, p0) = (ps.p1(), ps.p0());
    let off = l.view((0, p1), (p1, p0)).norm() + l.view((p1, 0), (p0, p1)).norm();
    if off > 1e-12 * (1.0 + l.norm()) {
        return Err(CliError::Input(
            "sector.l: must be block diagonal conformally with (c1, c0)".into(),
        ));
    }
    let winv = w
        .clone()
        .try_inverse()
        .ok_or_else(|| CliError::Input("sector.w: must be invertible".into()))?;
    let c1 = l.view((0, 0), (p1, p1)) * ps.c1();
    let c0 = l.view((p1, p1), (p0, p0)) * ps.c0();
    core("sector", PerturbationStructure::new(ps.b() * winv, c1, c0))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn bounds(ctx: &Context, with_complete_type: bool, report: &mut Report) -> Result<(), CliError> {
    let sys = ctx.config.system()?;
    let ps = ctx.config.structure(sys.n())?;
    let cfg = ctx.config.sweep(&sys)?;
    let spec = ctx.config.sector.clone();
    let (bound, cert) = match &spec {
        None | Some(SectorSpec::NormBound { .. }) => (
            "gamma_max",
            core("gamma_max", freqbounds::gamma_max(&sys, &ps, &cfg))?,
        ),
        Some(SectorSpec::EllipticNormBound { l, w, .. }) => {
            let l = config::matrix("sector.l", l, Some(ps.p()))?;
            let w = config::matrix("sector.w", w, Some(ps.m()))?;
            let ps2 = elliptic_structure(&ps, &l, &w)?;
            (
                "gamma_max",
                core("gamma_max", freqbounds::gamma_max(&sys, &ps2, &cfg))?,
            )
        }
        Some(SectorSpec::OutputPassive { .. }) => (
            "rho_min",
            core("rho_min", freqbounds::rho_min(&sys, &ps, &cfg))?,
        ),
        Some(SectorSpec::NegativeOutputPassive { .. }) => (
            "rho_hat_min",
            core(
                "rho_min",
                freqbounds::rho_min(&sys, &ps.negated_input(), &cfg),
            )?,
        ),
        Some(
            SectorSpec::GeneralSector { k2, .. }
            | SectorSpec::LoopTransformedSector { k2, .. }
            | SectorSpec::CircleDisc { k2, .. },
        ) => {
            let k2 = scalar_k2(ctx, k2)?;
            report.put("k2", k2);
            (
                "k1_min",
                core("k1_min", freqbounds::k1_min(&sys, &ps, k2, &cfg))?,
            )
        }
        Some(SectorSpec::Raw { .. }) => {
            return Err(CliError::Input(
                "sector.kind: bounds need a preset sector, not raw matrices".into(),
            ));
        }
    };
    report.put("bound", bound);
    report.put("value", cert.value);
    report.put("sweep", cfg);
    report.set_outcome(bound_outcome(&cert));
    report.certificates.push(certificate_value(&cert));
    if with_complete_type {
        let [w0, w1, w2] = ctx.config.complete_type_weights(sys.n())?;
        let ct = core("complete_type", complete_type_gamma(&sys, &w0, &w1, &w2))?;
        report.put("complete_type", ct);
    }
    if ctx.config.sector.is_some() {
        let sec = ctx.config.sector(&ps)?;
        write_sweep(ctx, report, &sys, &ps, &sec, &cfg)?;
    }
    Ok(())
}

fn certify_inner(
    ctx: &Context,
    report: &mut Report,
) -> Result<(FunctionalMeta, Certificate), CliError> {
    let meta = ctx.config.meta()?;
    let cfg = ctx.config.sweep(&meta.system)?;
    let cert = core(
        "certify",
        freqbounds::certify_w(&meta.system, &meta.structure, &meta.sector, &cfg),
    )?;
    report.put("sector_kind", ctx.config.sector_spec()?.kind());
    report.put("margin", cert.margin);
    report.put("sweep", cfg);
    report.certificates.push(certificate_value(&cert));
    report.set_outcome(verdict_outcome(cert.verdict()));
    write_sweep(
        ctx,
        report,
        &meta.system,
        &meta.structure,
        &meta.sector,
        &cfg,
    )?;
    Ok((meta, cert))
}

fn certify(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    certify_inner(ctx, report).map(|_| ())
}

/// SHA-256 of the canonical JSON of the (system, structure, sector) triple.
pub fn meta_hash(meta: &FunctionalMeta) -> String {
    let s = serde_json::to_string(meta).expect("meta serializes");
    Sha256::digest(s.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn random_samples(
    rng: &mut ChaCha8Rng,
    disc: &Discretization,
    n: usize,
    count: usize,
) -> Vec<Vec<nalgebra::DVector<f64>>> {
    (0..count)
        .map(|_| {
            let degree = rng.gen_range(0..=disc.order() / 2);
            let f = ChebyshevHistory::random(rng, n, disc.h(), degree);
            disc.sample(|t| f.value(t))
        })
        .collect()
}

fn residual_summary(
    lk: &LkFunctional,
    meta: &FunctionalMeta,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    for phi in random_samples(rng, lk.discretization(), meta.system.n(), samples) {
        let r = core(
            "defining equation",
            defining_equation_residual(lk, &meta.system, &meta.structure, &meta.sector, &phi),
        )?;
        worst = worst.max(r);
    }
    Ok(worst)
}

fn construct(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let (meta, cert) = certify_inner(ctx, report)?;
    if cert.verdict() != Verdict::Certified {
        report
            .messages
            .push("existence test not passed; functional not constructed".into());
        return Ok(());
    }
    let dspec = ctx.config.discretization();
    let disc = core(
        "discretization",
        Discretization::new(dspec.order, meta.system.h()),
    )?;
    let (lk, are) = core(
        "riccati",
        lkbuild::build_functional(
            &meta.system,
            &meta.structure,
            &meta.sector,
            &disc,
            dspec.are_tol,
        ),
    )?;
    let vspec = ctx.config.verify.clone().unwrap_or_default();
    let mut rng = ctx.rng();
    let residual = residual_summary(&lk, &meta, vspec.residual_samples, &mut rng)?;
    let positivity = core(
        "positivity",
        positivity_probe(&lk, vspec.positivity_samples, vspec.radius, &mut rng),
    )?;
    report.put("are", &are);
    report.put("p_xx", to_rows(lk.p_xx()));
    report.put("q1_diag", to_rows(lk.q1_diag()));
    report.put("defining_residual_max", residual);
    report.put("positivity", positivity);
    report.put("upper_bound_constant", lk.upper_bound_constant());
    report.put("meta_sha256", meta_hash(&meta));
    let dir = ctx.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let path = dir.join("functional.json");
    let text = core("functional", lk.to_json())?;
    std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    report.files.push(path.display().to_string());
    report.set_outcome(if are.closed_loop_stable {
        Outcome::Success
    } else {
        Outcome::Inconclusive
    });
    Ok(())
}

fn load_functional(ctx: &Context) -> Result<(LkFunctional, PathBuf), CliError> {
    let path = ctx
        .config
        .functional_path(&ctx.config_path)
        .or_else(|| ctx.out_file("functional.json"))
        .ok_or_else(|| {
            CliError::Input(
                "functional: no functional file configured and no --out directory".into(),
            )
        })?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Input(format!("functional: {}: {e}", path.display())))?;
    let lk = LkFunctional::from_json(&text)
        .map_err(|e| CliError::Input(format!("functional: {}: {e}", path.display())))?;
    Ok((lk, path))
}

struct TrajectoryChecks {
    max_increase: f64,
    max_slope: f64,
    max_bound: Option<f64>,
    identity: f64,
}

/// Histories for simulation: random smooth functions scaled to the configured sup norm, or zero.
fn history(
    ctx_sim: &config::SimulationSpec,
    n: usize,
    h: f64,
    rng: &mut ChaCha8Rng,
) -> Arc<dyn History> {
    if ctx_sim.zero_history {
        return Arc::new(ChebyshevHistory::constant(nalgebra::DVector::zeros(n), h));
    }
    let f = ChebyshevHistory::random(rng, n, h, ctx_sim.history_degree);
    let s = f.sup_norm();
    let scale = if s > 0.0 {
        ctx_sim.history_scale / s
    } else {
        0.0
    };
    Arc::new(f.scaled(scale))
}

fn norm_bound_gamma(ctx: &Context) -> Option<f64> {
    match ctx.config.sector {
        Some(SectorSpec::NormBound { gamma }) => Some(gamma),
        _ => None,
    }
}

fn verify(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let meta = ctx.config.meta()?;
    let (lk, path) = load_functional(ctx)?;
    let expected = meta_hash(&meta);
    let found = meta_hash(lk.meta());
    report.put("functional", path.display().to_string());
    report.put("meta_sha256", &found);
    if expected != found {
        return Err(CliError::Input(format!(
            "functional: meta hash {found} does not match config hash {expected}"
        )));
    }
    let vspec = ctx.config.verify.clone().unwrap_or_default();
    let mut rng = ctx.rng();
    let mut violations = Vec::new();

    let residual = residual_summary(&lk, &meta, vspec.residual_samples, &mut rng)?;
    report.put("defining_residual_max", residual);
    if !(residual <= vspec.residual_tol) {
        violations.push(format!(
            "defining-equation residual {residual:e} exceeds {:e}",
            vspec.residual_tol
        ));
    }
    let pos = core(
        "positivity",
        positivity_probe(&lk, vspec.positivity_samples, vspec.radius, &mut rng),
    )?;
    report.put("positivity", pos);
    if !(pos.min_ratio_cubic > 0.0 && pos.min_ratio_razumikhin > 0.0 && pos.min_value >= 0.0) {
        violations.push("positivity probe found a nonpositive ratio".into());
    }

    if let Some(sim) = &ctx.config.simulation {
        let (sys, ps, sec) = (&meta.system, &meta.structure, &meta.sector);
        let mut inside = true;
        let mut checks = Vec::new();
        let mut worst_sector = f64::INFINITY;
        for _ in 0..sim.trajectories {
            let (nl, gain) = sim.nonlinearity.build(ps.p(), ps.m(), &mut rng)?;
            // With ‖a(ζ)‖ ≤ k‖ζ‖ and k < γ the functional decays at rate at least γ² − k².
            let k3 = match (norm_bound_gamma(ctx), gain) {
                (Some(g), Some(k)) if k < g => Some(g * g - k * k),
                _ => None,
            };
            let radius = vspec.radius.max(sim.history_scale) * 10.0;
            let mem = core(
                "sector membership",
                rfdesim::sector_membership(&nl, sec, vspec.sector_samples, radius, k3, &mut rng),
            )?;
            worst_sector = worst_sector.min(mem.worst_margin);
            if mem.fraction_inside < 1.0 {
                inside = false;
                continue;
            }
            let phi0 = history(sim, sys.n(), sys.h(), &mut rng);
            let traj = core(
                "integration",
                rfdesim::integrate(sys, ps, &nl, phi0, sim.step, sim.t_end),
            )?;
            let times = traj.check_times(sim.check_points);
            let mono = core(
                "monotonicity",
                rfdesim::monotonicity_check(&lk, ps, &traj, &times, k3),
            )?;
            let identity = core(
                "derivative identity",
                rfdesim::perturbation_derivative_check(&lk, sys, ps, &nl, &traj, &times),
            )?;
            checks.push(TrajectoryChecks {
                max_increase: mono.max_increase,
                max_slope: mono.max_slope_violation,
                max_bound: mono.max_bound_violation,
                identity,
            });
        }
        report.put("sector_worst_margin", worst_sector);
        report.put("sector_inside", inside);
        if !inside {
            violations.push(format!(
                "nonlinearity '{}' leaves the sector; trajectory checks skipped",
                sim.nonlinearity.name()
            ));
        } else {
            let fold =
                |f: &dyn Fn(&TrajectoryChecks) -> f64| checks.iter().map(f).fold(0.0f64, f64::max);
            let inc = fold(&|c| c.max_increase);
            let slope = fold(&|c| c.max_slope);
            let ident = fold(&|c| c.identity);
            let bound = checks.iter().filter_map(|c| c.max_bound).reduce(f64::max);
            report.put(
                "trajectories",
                json!({
                    "count": checks.len(),
                    "max_increase": inc,
                    "max_slope_violation": slope,
                    "max_offset_violation": bound,
                    "max_identity_mismatch": ident,
                }),
            );
            if inc > vspec.monotonicity_tol || slope > vspec.monotonicity_tol {
                violations.push(format!(
                    "functional increases along a trajectory (slope {slope:e}, step {inc:e})"
                ));
            }
            if bound.is_some_and(|b| b > vspec.monotonicity_tol) {
                violations.push("decay-rate bound violated along a trajectory".into());
            }
            if ident > vspec.identity_tol {
                violations.push(format!(
                    "derivative identity mismatch {ident:e} exceeds {:e}",
                    vspec.identity_tol
                ));
            }
        }
    }
    report.messages.extend(violations.iter().cloned());
    report.set_outcome(if violations.is_empty() {
        Outcome::Success
    } else {
        Outcome::Violation
    });
    Ok(())
}

fn ellipse(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let sys = ctx.config.system()?;
    let cfg = ctx.config.sweep(&sys)?;
    let spec = ctx.config.ellipse.clone().unwrap_or_default();
    let n = sys.n();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let points = spec.points.max(2);
    for [c1, c0] in &spec.scalings {
        if !(*c1 > 0.0 && *c0 > 0.0) {
            return Err(CliError::Input(
                "ellipse.scalings: c1 and c0 must be > 0".into(),
            ));
        }
        let ps = core(
            "ellipse",
            PerturbationStructure::new(eye.clone(), &eye * *c1, &eye * *c0),
        )?;
        let cert = core("gamma_max", freqbounds::gamma_max(&sys, &ps, &cfg))?;
        report.escalate(bound_outcome(&cert));
        let g = cert.value;
        curves.push(json!({ "c1": c1, "c0": c0, "gamma_max": g, "delta0_axis": c0 * g, "delta1_axis": c1 * g }));
        for k in 0..points {
            let t = std::f64::consts::FRAC_PI_2 * k as f64 / (points - 1) as f64;
            rows.push(vec![
                Some(*c1),
                Some(*c0),
                Some(g),
                Some(t),
                Some(c0 * g * t.cos()),
                Some(c1 * g * t.sin()),
            ]);
        }
    }
    report.put("ellipses", curves);
    if let Some(path) = ctx.out_file("ellipse.csv") {
        write_csv(
            &path,
            &header(&["c1", "c0", "gamma_max", "t", "delta0_norm", "delta1_norm"]),
            &rows,
        )?;
        report.files.push(path.display().to_string());
    }
    Ok(())
}

fn complete_type_cmd(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let sys = ctx.config.system()?;
    let [w0, w1, w2] = ctx.config.complete_type_weights(sys.n())?;
    let ct = core("complete_type", complete_type_gamma(&sys, &w0, &w1, &w2))?;
    report.put("gamma", ct.gamma);
    report.put("complete_type", ct);
    report.put(
        "weights",
        json!({ "w0": to_rows(&w0), "w1": to_rows(&w1), "w2": to_rows(&w2) }),
    );
    Ok(())
}

fn spectrum_cmd(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let sys = ctx.config.system()?;
    let spec = ctx.config.spectrum.clone().unwrap_or_default();
    let rep = core(
        "spectrum",
        spectrum::rightmost_roots(&sys, spec.order, spec.count),
    )?;
    let cfg = ctx.config.sweep(&sys)?;
    let clearance = core("clearance", spectrum::imag_axis_clearance(&sys, &cfg))?;
    report.put("rightmost_real_part", rep.rightmost_real_part);
    report.put(
        "exponentially_stable",
        rep.rightmost_real_part < spectrum::STABILITY_THRESHOLD,
    );
    report.put("imag_axis_clearance", clearance);
    report.put(
        "roots",
        rep.roots
            .iter()
            .map(|r| json!({ "re": r.value.re, "im": r.value.im, "polished": r.polished }))
            .collect::<Vec<_>>(),
    );
    if let Some(path) = ctx.out_file("roots.csv") {
        let rows: Vec<_> = rep
            .roots
            .iter()
            .map(|r| vec![Some(r.value.re), Some(r.value.im)])
            .collect();
        write_csv(&path, &header(&["re", "im"]), &rows)?;
        report.files.push(path.display().to_string());
    }
    Ok(())
}

fn trajectory_rows(
    traj: &Trajectory,
    lk: Option<&LkFunctional>,
) -> Result<Vec<Vec<Option<f64>>>, CliError> {
    let step = traj.step();
    let mut rows = Vec::new();
    for (t, x) in traj.mesh() {
        let mut row: Vec<Option<f64>> = std::iter::once(Some(t))
            .chain(x.iter().map(|v| Some(*v)))
            .collect();
        if let Some(lk) = lk {
            let v = core("functional", rfdesim::functional_along(lk, traj, &[t]))?[0].1;
            row.push(Some(v));
            let fd = (t >= step && t + step <= traj.t_end())
                .then(|| rfdesim::fd_derivative(lk, traj, t))
                .transpose();
            row.push(core("functional", fd)?);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn simulate(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let sys = ctx.config.system()?;
    let ps = ctx.config.structure(sys.n())?;
    let sim = ctx.config.simulation.clone().unwrap_or_default();
    let lk = match ctx.config.functional_path(&ctx.config_path) {
        Some(_) => Some(load_functional(ctx)?.0),
        None => None,
    };
    if let Some(lk) = &lk {
        if lk.meta().system != sys || lk.meta().structure != ps {
            return Err(CliError::Input(
                "functional: system or structure differs from the config".into(),
            ));
        }
    }
    let mut rng = ctx.rng();
    let mut summaries = Vec::new();
    for i in 0..sim.trajectories {
        let (nl, _) = sim.nonlinearity.build(ps.p(), ps.m(), &mut rng)?;
        let phi0 = history(&sim, sys.n(), sys.h(), &mut rng);
        let traj = core(
            "integration",
            rfdesim::integrate(&sys, &ps, &nl, phi0, sim.step, sim.t_end),
        )?;
        let final_norm = traj.value(traj.t_end()).norm();
        summaries
            .push(json!({ "index": i, "nonlinearity": nl.descriptor(), "final_norm": final_norm }));
        if let Some(path) = ctx.out_file(&format!("trajectory_{i}.csv")) {
            let mut names: Vec<String> = vec!["t".into()];
            names.extend((1..=sys.n()).map(|k| format!("x{k}")));
            if lk.is_some() {
                names.push("V".into());
                names.push("dV_fd".into());
            }
            write_csv(&path, &names, &trajectory_rows(&traj, lk.as_ref())?)?;
            report.files.push(path.display().to_string());
        }
    }
    report.put("trajectories", summaries);
    Ok(())
}
