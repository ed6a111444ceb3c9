//! Problem configuration files: JSON with matrices as row-major nested arrays.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use serde::Deserialize;
use tdsrobust::freqbounds::SweepConfig;
use tdsrobust::lkbuild::FunctionalMeta;
use tdsrobust::serde_matrix::from_rows;
use tdsrobust::sysmodel::sector_preset;
use tdsrobust::{Nonlinearity, PerturbationStructure, SectorPreset, SectorRestriction, TdsSystem};

use crate::CliError;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub structure: Option<StructureSpec>,
    #[serde(default)]
    pub sector: Option<SectorSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub discretization: Option<DiscretizationSpec>,
    #[serde(default)]
    pub verify: Option<VerifySpec>,
    #[serde(default)]
    pub simulation: Option<SimulationSpec>,
    #[serde(default)]
    pub ellipse: Option<EllipseSpec>,
    #[serde(default)]
    pub complete_type: Option<CompleteTypeSpec>,
    #[serde(default)]
    pub spectrum: Option<SpectrumSpec>,
    #[serde(default)]
    pub bounds: Option<BoundsSpec>,
    /// Functional file for `verify` and `simulate`, relative to the config file.
    #[serde(default)]
    pub functional: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a0: Rows,
    pub a1: Rows,
    pub h: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    pub b: Rows,
    #[serde(default)]
    pub c1: Rows,
    #[serde(default)]
    pub c0: Rows,
}

/// A scalar k (meaning kI) or a full matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Scalar(f64),
    Matrix(Rows),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SectorSpec {
    NormBound {
        gamma: f64,
    },
    EllipticNormBound {
        gamma: f64,
        l: Rows,
        w: Rows,
    },
    OutputPassive {
        rho: f64,
    },
    NegativeOutputPassive {
        rho_hat: f64,
    },
    GeneralSector {
        k1: Gain,
        k2: Gain,
    },
    LoopTransformedSector {
        k1: Gain,
        k2: Gain,
    },
    CircleDisc {
        k1: Gain,
        k2: Gain,
    },
    Raw {
        pi_zz: Rows,
        pi_za: Rows,
        pi_aa: Rows,
    },
}

impl NonlinearitySpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::LinearGain { .. } => "linear_gain",
            Self::Saturation { .. } => "saturation",
            Self::Cubic { .. } => "cubic",
        }
    }
}

impl SectorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::NormBound { .. } => "norm_bound",
            Self::EllipticNormBound { .. } => "elliptic_norm_bound",
            Self::OutputPassive { .. } => "output_passive",
            Self::NegativeOutputPassive { .. } => "negative_output_passive",
            Self::GeneralSector { .. } => "general_sector",
            Self::LoopTransformedSector { .. } => "loop_transformed_sector",
            Self::CircleDisc { .. } => "circle_disc",
            Self::Raw { .. } => "raw",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub omega_max: Option<f64>,
    pub grid_points: Option<usize>,
    pub refine_tol: Option<f64>,
    pub max_refine_iters: Option<usize>,
    pub stability_order: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSpec {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_are_tol")]
    pub are_tol: f64,
}

fn default_order() -> usize {
    24
}

fn default_are_tol() -> f64 {
    tdsrobust::lkbuild::DEFAULT_ARE_TOL
}

impl Default for DiscretizationSpec {
    fn default() -> Self {
        Self {
            order: default_order(),
            are_tol: default_are_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub residual_samples: usize,
    pub residual_tol: f64,
    pub positivity_samples: usize,
    pub radius: f64,
    pub sector_samples: usize,
    pub monotonicity_tol: f64,
    pub identity_tol: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            residual_samples: 100,
            residual_tol: 1e-6,
            positivity_samples: 1000,
            radius: 1.0,
            sector_samples: 1000,
            monotonicity_tol: 1e-5,
            identity_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    Zero,
    /// Either a fixed m×p gain, or a random direction scaled to spectral norm `norm`, drawn per trajectory.
    LinearGain {
        #[serde(default)]
        gain: Option<Rows>,
        #[serde(default)]
        norm: Option<f64>,
    },
    /// slope·clamp(Mζ, ±limit); M defaults to the leading m×p identity.
    Saturation {
        slope: f64,
        limit: f64,
        #[serde(default)]
        mix: Option<Rows>,
    },
    Cubic {
        coefficients: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub step: f64,
    pub t_end: f64,
    pub trajectories: usize,
    pub history_degree: usize,
    pub history_scale: f64,
    pub zero_history: bool,
    pub check_points: usize,
    pub nonlinearity: NonlinearitySpec,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            step: 0.01,
            t_end: 8.0,
            trajectories: 20,
            history_degree: 5,
            history_scale: 1.0,
            zero_history: false,
            check_points: 60,
            nonlinearity: NonlinearitySpec::Zero,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipseSpec {
    /// (c₁, c₀) pairs.
    pub scalings: Vec<[f64; 2]>,
    pub points: usize,
}

impl Default for EllipseSpec {
    fn default() -> Self {
        Self {
            scalings: vec![[1.0, 1.0], [1.0, 0.5], [0.5, 1.0], [0.1, 1.0], [1.0, 0.1]],
            points: 33,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteTypeSpec {
    pub w0: Option<Rows>,
    pub w1: Option<Rows>,
    pub w2: Option<Rows>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSpec {
    pub order: usize,
    pub count: usize,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        Self {
            order: 32,
            count: 10,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    /// k₂ for the sector kinds whose bound is k₁,min.
    pub k2: Option<f64>,
}

fn input(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{path}: {msg}"))
}

pub fn matrix(path: &str, rows: &Rows, ncols: Option<usize>) -> Result<DMatrix<f64>, CliError> {
    from_rows(rows, ncols).map_err(|e| input(path, e))
}

fn gain(path: &str, g: &Gain, m: usize) -> Result<DMatrix<f64>, CliError> {
    match g {
        Gain::Scalar(k) => Ok(DMatrix::identity(m, m) * *k),
        Gain::Matrix(r) => matrix(path, r, Some(m)),
    }
}

/// Parses a config string; errors carry the JSON path of the offending field.
pub fn parse(text: &str) -> Result<ProblemConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." {
            "config".to_string()
        } else {
            path
        };
        CliError::Input(format!("{path}: {}", e.into_inner()))
    })
}

pub fn load(path: &Path) -> Result<ProblemConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse(&text)
}

impl ProblemConfig {
    pub fn system(&self) -> Result<TdsSystem, CliError> {
        let a0 = matrix("system.a0", &self.system.a0, None)?;
        let a1 = matrix("system.a1", &self.system.a1, Some(a0.ncols()))?;
        TdsSystem::new(a0, a1, self.system.h).map_err(|e| input("system", e))
    }

    pub fn structure(&self, n: usize) -> Result<PerturbationStructure, CliError> {
        match &self.structure {
            None => Ok(PerturbationStructure::unstructured(n)),
            Some(s) => {
                let b = matrix("structure.b", &s.b, None)?;
                let c1 = matrix("structure.c1", &s.c1, Some(n))?;
                let c0 = matrix("structure.c0", &s.c0, Some(n))?;
                PerturbationStructure::new(b, c1, c0).map_err(|e| input("structure", e))
            }
        }
    }

    pub fn sector_spec(&self) -> Result<&SectorSpec, CliError> {
        self.sector
            .as_ref()
            .ok_or_else(|| input("sector", "missing"))
    }

    pub fn sector(&self, ps: &PerturbationStructure) -> Result<SectorRestriction, CliError> {
        let (p, m) = (ps.p(), ps.m());
        let spec = self.sector_spec()?;
        let preset = match spec {
            SectorSpec::NormBound { gamma } => {
                if gamma.is_nan() || *gamma < 0.0 {
                    return Err(input("sector.gamma", "must be >= 0"));
                }
                SectorPreset::NormBound { gamma: *gamma }
            }
            SectorSpec::EllipticNormBound { gamma, l, w } => SectorPreset::EllipticNormBound {
                gamma: *gamma,
                l: matrix("sector.l", l, Some(p))?,
                w: matrix("sector.w", w, Some(m))?,
            },
            SectorSpec::OutputPassive { rho } => {
                if !(*rho > 0.0) {
                    return Err(input("sector.rho", "must be > 0"));
                }
                SectorPreset::OutputPassive { rho: *rho }
            }
            SectorSpec::NegativeOutputPassive { rho_hat } => {
                if !(*rho_hat > 0.0) {
                    return Err(input("sector.rho_hat", "must be > 0"));
                }
                SectorPreset::NegativeOutputPassive { rho_hat: *rho_hat }
            }
            SectorSpec::GeneralSector { k1, k2 } => SectorPreset::GeneralSector {
                k1: gain("sector.k1", k1, m)?,
                k2: gain("sector.k2", k2, m)?,
            },
            SectorSpec::LoopTransformedSector { k1, k2 } => SectorPreset::LoopTransformedSector {
                k1: gain("sector.k1", k1, m)?,
                k2: gain("sector.k2", k2, m)?,
            },
            SectorSpec::CircleDisc { k1, k2 } => SectorPreset::CircleDisc {
                k1: gain("sector.k1", k1, m)?,
                k2: gain("sector.k2", k2, m)?,
            },
            SectorSpec::Raw {
                pi_zz,
                pi_za,
                pi_aa,
            } => {
                let sec = SectorRestriction::new(
                    matrix("sector.pi_zz", pi_zz, Some(p))?,
                    matrix("sector.pi_za", pi_za, Some(m))?,
                    matrix("sector.pi_aa", pi_aa, Some(m))?,
                )
                .map_err(|e| input("sector", e))?;
                sec.check_structure(ps).map_err(|e| input("sector", e))?;
                return Ok(sec);
            }
        };
        sector_preset(&preset, p, m).map_err(|e| input("sector", e))
    }

    pub fn sweep(&self, sys: &TdsSystem) -> Result<SweepConfig, CliError> {
        let mut cfg = SweepConfig::for_system(sys);
        if let Some(s) = &self.sweep {
            if let Some(v) = s.omega_max {
                cfg.omega_max = v;
            }
            if let Some(v) = s.grid_points {
                cfg.grid_points = v;
            }
            if let Some(v) = s.refine_tol {
                cfg.refine_tol = v;
            }
            if let Some(v) = s.max_refine_iters {
                cfg.max_refine_iters = v;
            }
            if let Some(v) = s.stability_order {
                cfg.stability_order = v;
            }
        }
        cfg.validate().map_err(|e| input("sweep", e))?;
        Ok(cfg)
    }

    pub fn discretization(&self) -> DiscretizationSpec {
        self.discretization.clone().unwrap_or_default()
    }

    pub fn meta(&self) -> Result<FunctionalMeta, CliError> {
        let system = self.system()?;
        let structure = self.structure(system.n())?;
        let sector = self.sector(&structure)?;
        Ok(FunctionalMeta {
            system,
            structure,
            sector,
        })
    }

    pub fn complete_type_weights(&self, n: usize) -> Result<[DMatrix<f64>; 3], CliError> {
        let spec = self.complete_type.clone().unwrap_or_default();
        let pick = |path: &str, w: &Option<Rows>| match w {
            None => Ok(DMatrix::identity(n, n)),
            Some(r) => matrix(path, r, Some(n)),
        };
        Ok([
            pick("complete_type.w0", &spec.w0)?,
            pick("complete_type.w1", &spec.w1)?,
            pick("complete_type.w2", &spec.w2)?,
        ])
    }

    /// Resolves the functional path against the config file's directory.
    pub fn functional_path(&self, config_path: &Path) -> Option<PathBuf> {
        self.functional.as_ref().map(|p| {
            if p.is_absolute() {
                p.clone()
            } else {
                config_path.parent().unwrap_or(Path::new(".")).join(p)
            }
        })
    }
}

/// Random m×p matrix with the given spectral norm.
pub fn random_gain<R: Rng + ?Sized>(rng: &mut R, m: usize, p: usize, norm: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, p, |_, _| rng.gen_range(-1.0..1.0));
    let s = tdsrobust::linalg::norm2(&g);
    if s > 0.0 {
        g * (norm / s)
    } else {
        g
    }
}

impl NonlinearitySpec {
    /// Instantiates the nonlinearity for one trajectory, with its gain bound ‖a(ζ)‖ ≤ k‖ζ‖ when known.
    pub fn build<R: Rng + ?Sized>(
        &self,
        p: usize,
        m: usize,
        rng: &mut R,
    ) -> Result<(Nonlinearity, Option<f64>), CliError> {
        let path = "simulation.nonlinearity";
        match self {
            Self::Zero => Ok((Nonlinearity::zero(p, m), Some(0.0))),
            Self::LinearGain {
                gain: Some(g),
                norm: None,
            } => {
                let g = matrix(&format!("{path}.gain"), g, Some(p))?;
                if g.shape() != (m, p) {
                    return Err(input(&format!("{path}.gain"), format!("must be {m}x{p}")));
                }
                let k = tdsrobust::linalg::norm2(&g);
                Ok((
                    Nonlinearity::linear_gain(g).map_err(|e| input(path, e))?,
                    Some(k),
                ))
            }
            Self::LinearGain {
                gain: None,
                norm: Some(k),
            } => {
                if !(*k >= 0.0) {
                    return Err(input(&format!("{path}.norm"), "must be >= 0"));
                }
                let g = random_gain(rng, m, p, *k);
                Ok((
                    Nonlinearity::linear_gain(g).map_err(|e| input(path, e))?,
                    Some(*k),
                ))
            }
            Self::LinearGain { .. } => {
                Err(input(path, "linear_gain needs exactly one of gain, norm"))
            }
            Self::Saturation { slope, limit, mix } => {
                let mix = match mix {
                    Some(r) => matrix(&format!("{path}.mix"), r, Some(p))?,
                    None => DMatrix::identity(m, p),
                };
                if mix.shape() != (m, p) {
                    return Err(input(&format!("{path}.mix"), format!("must be {m}x{p}")));
                }
                let k = slope * tdsrobust::linalg::norm2(&mix);
                Ok((
                    Nonlinearity::saturation(*slope, *limit, mix).map_err(|e| input(path, e))?,
                    Some(k),
                ))
            }
            Self::Cubic { coefficients } => {
                if coefficients.len() != m || m != p {
                    return Err(input(
                        &format!("{path}.coefficients"),
                        format!("needs p = m = {} entries", coefficients.len()),
                    ));
                }
                Ok((
                    Nonlinearity::cubic_diagonal(coefficients.clone())
                        .map_err(|e| input(path, e))?,
                    None,
                ))
            }
        }
    }
}
