//! System, perturbation structure and sector data, transfer functions and loop transformations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::serde_matrix::rows;

const SYMMETRY_TOL: f64 = 1e-8;
const BLOCK_DIAG_TOL: f64 = 1e-10;
const SINGULAR_TOL: f64 = 1e-12;

/// Nominal linear part ẋ = A₀x(t) + A₁x(t−h).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TdsSystemRepr", into = "TdsSystemRepr")]
pub struct TdsSystem {
    a0: DMatrix<f64>,
    a1: DMatrix<f64>,
    h: f64,
}

#[derive(Serialize, Deserialize)]
struct TdsSystemRepr {
    #[serde(with = "rows")]
    a0: DMatrix<f64>,
    #[serde(with = "rows")]
    a1: DMatrix<f64>,
    h: f64,
}

impl TryFrom<TdsSystemRepr> for TdsSystem {
    type Error = Error;
    fn try_from(r: TdsSystemRepr) -> Result<Self> {
        TdsSystem::new(r.a0, r.a1, r.h)
    }
}

impl From<TdsSystem> for TdsSystemRepr {
    fn from(s: TdsSystem) -> Self {
        TdsSystemRepr {
            a0: s.a0,
            a1: s.a1,
            h: s.h,
        }
    }
}

impl TdsSystem {
    pub fn new(a0: DMatrix<f64>, a1: DMatrix<f64>, h: f64) -> Result<Self> {
        if !a0.is_square() || a0.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "a0 must be square and nonempty, got {:?}",
                a0.shape()
            )));
        }
        if a1.shape() != a0.shape() {
            return Err(Error::DimensionMismatch(format!(
                "a1 is {:?}, a0 is {:?}",
                a1.shape(),
                a0.shape()
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delay h must be positive, got {h}"
            )));
        }
        if a0.iter().chain(a1.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "system matrices contain non-finite entries".into(),
            ));
        }
        Ok(Self { a0, a1, h })
    }

    pub fn scalar(a0: f64, a1: f64, h: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, a0),
            DMatrix::from_element(1, 1, a1),
            h,
        )
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n(&self) -> usize {
        self.a0.nrows()
    }

    /// ‖A₀‖₂ + ‖A₁‖₂, the growth rate bounding Δ(iω) from below for large ω.
    pub fn norm_sum(&self) -> f64 {
        linalg::norm2(&self.a0) + linalg::norm2(&self.a1)
    }

    /// Nominal right-hand side A₀x + A₁x_delayed.
    pub fn rhs(&self, x: &DVector<f64>, x_delayed: &DVector<f64>) -> DVector<f64> {
        &self.a0 * x + &self.a1 * x_delayed
    }
}

/// The maps in g(x_t) = −B·a(𝒞x_t) with 𝒞φ = [C₁φ(−h); C₀φ(0)].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StructureRepr", into = "StructureRepr")]
pub struct PerturbationStructure {
    b: DMatrix<f64>,
    c1: DMatrix<f64>,
    c0: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct StructureRepr {
    #[serde(with = "rows")]
    b: DMatrix<f64>,
    #[serde(with = "rows")]
    c1: DMatrix<f64>,
    #[serde(with = "rows")]
    c0: DMatrix<f64>,
}

impl TryFrom<StructureRepr> for PerturbationStructure {
    type Error = Error;
    fn try_from(r: StructureRepr) -> Result<Self> {
        PerturbationStructure::new(r.b, r.c1, r.c0)
    }
}

impl From<PerturbationStructure> for StructureRepr {
    fn from(s: PerturbationStructure) -> Self {
        StructureRepr {
            b: s.b,
            c1: s.c1,
            c0: s.c0,
        }
    }
}

impl PerturbationStructure {
    pub fn new(b: DMatrix<f64>, c1: DMatrix<f64>, c0: DMatrix<f64>) -> Result<Self> {
        let n = b.nrows();
        if c0.ncols() != n || c1.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "c1 ({:?}) and c0 ({:?}) need {n} columns to match b ({:?})",
                c1.shape(),
                c0.shape(),
                b.shape()
            )));
        }
        if b.ncols() == 0 || c0.nrows() + c1.nrows() == 0 || n == 0 {
            return Err(Error::DimensionMismatch("need p >= 1 and m >= 1".into()));
        }
        Ok(Self { b, c1, c0 })
    }

    /// B = C₀ = C₁ = Iₙ.
    pub fn unstructured(n: usize) -> Self {
        let i = DMatrix::identity(n, n);
        Self {
            b: i.clone(),
            c1: i.clone(),
            c0: i,
        }
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c1(&self) -> &DMatrix<f64> {
        &self.c1
    }

    pub fn c0(&self) -> &DMatrix<f64> {
        &self.c0
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p0(&self) -> usize {
        self.c0.nrows()
    }

    pub fn p1(&self) -> usize {
        self.c1.nrows()
    }

    pub fn p(&self) -> usize {
        self.p0() + self.p1()
    }

    /// [C₁; C₀].
    pub fn stacked_c(&self) -> DMatrix<f64> {
        linalg::vstack(&[&self.c1, &self.c0])
    }

    /// 𝒞φ from φ(−h) and φ(0).
    pub fn apply_c(&self, phi_minus_h: &DVector<f64>, phi_0: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.p());
        z.rows_mut(0, self.p1())
            .copy_from(&(&self.c1 * phi_minus_h));
        z.rows_mut(self.p1(), self.p0())
            .copy_from(&(&self.c0 * phi_0));
        z
    }

    /// Same structure with B replaced by −B.
    pub fn negated_input(&self) -> Self {
        Self {
            b: -&self.b,
            c1: self.c1.clone(),
            c0: self.c0.clone(),
        }
    }

    pub fn check_system(&self, sys: &TdsSystem) -> Result<()> {
        if self.n() != sys.n() {
            return Err(Error::DimensionMismatch(format!(
                "structure acts on dimension {}, system has n = {}",
                self.n(),
                sys.n()
            )));
        }
        Ok(())
    }
}

/// Quadratic form w(ζ, α) = ζᵀΠ_ζζζ + 2ζᵀΠ_ζaα + αᵀΠ_aaα with Π_aa ≺ 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SectorRepr", into = "SectorRepr")]
pub struct SectorRestriction {
    pi_zz: DMatrix<f64>,
    pi_za: DMatrix<f64>,
    pi_aa: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct SectorRepr {
    #[serde(with = "rows")]
    pi_zz: DMatrix<f64>,
    #[serde(with = "rows")]
    pi_za: DMatrix<f64>,
    #[serde(with = "rows")]
    pi_aa: DMatrix<f64>,
}

impl TryFrom<SectorRepr> for SectorRestriction {
    type Error = Error;
    fn try_from(r: SectorRepr) -> Result<Self> {
        SectorRestriction::new(r.pi_zz, r.pi_za, r.pi_aa)
    }
}

impl From<SectorRestriction> for SectorRepr {
    fn from(s: SectorRestriction) -> Self {
        SectorRepr {
            pi_zz: s.pi_zz,
            pi_za: s.pi_za,
            pi_aa: s.pi_aa,
        }
    }
}

fn checked_symmetric(a: DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    let asymmetry = linalg::relative_asymmetry(&a);
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::Asymmetric { name, asymmetry });
    }
    Ok(linalg::symmetrize(&a))
}

impl SectorRestriction {
    pub fn new(pi_zz: DMatrix<f64>, pi_za: DMatrix<f64>, pi_aa: DMatrix<f64>) -> Result<Self> {
        let (p, m) = (pi_zz.nrows(), pi_aa.nrows());
        if !pi_zz.is_square() || !pi_aa.is_square() || pi_za.shape() != (p, m) || m == 0 {
            return Err(Error::DimensionMismatch(format!(
                "Pi blocks have shapes {:?}, {:?}, {:?}",
                pi_zz.shape(),
                pi_za.shape(),
                pi_aa.shape()
            )));
        }
        if pi_zz
            .iter()
            .chain(pi_za.iter())
            .chain(pi_aa.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidParameter(
                "Pi matrices contain non-finite entries".into(),
            ));
        }
        let pi_zz = checked_symmetric(pi_zz, "pi_zz")?;
        let pi_aa = checked_symmetric(pi_aa, "pi_aa")?;
        let max_eig = linalg::lambda_max(&pi_aa);
        if max_eig >= 0.0 {
            return Err(Error::NonNegativeDefinitePiAa { max_eig });
        }
        Ok(Self {
            pi_zz,
            pi_za,
            pi_aa,
        })
    }

    pub fn pi_zz(&self) -> &DMatrix<f64> {
        &self.pi_zz
    }

    pub fn pi_za(&self) -> &DMatrix<f64> {
        &self.pi_za
    }

    pub fn pi_aa(&self) -> &DMatrix<f64> {
        &self.pi_aa
    }

    pub fn p(&self) -> usize {
        self.pi_zz.nrows()
    }

    pub fn m(&self) -> usize {
        self.pi_aa.nrows()
    }

    /// (−Π_aa)⁻¹.
    pub fn neg_pi_aa_inv(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&(-&self.pi_aa)).ok_or(Error::SingularPiAa)
    }

    pub fn w(&self, zeta: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
        zeta.dot(&(&self.pi_zz * zeta))
            + 2.0 * zeta.dot(&(&self.pi_za * alpha))
            + alpha.dot(&(&self.pi_aa * alpha))
    }

    pub fn check_structure(&self, ps: &PerturbationStructure) -> Result<()> {
        if self.p() != ps.p() || self.m() != ps.m() {
            return Err(Error::DimensionMismatch(format!(
                "sector has (p, m) = ({}, {}), structure has ({}, {})",
                self.p(),
                self.m(),
                ps.p(),
                ps.m()
            )));
        }
        Ok(())
    }
}

/// Rows of the sector table. Matrix parameters are m×m unless noted.
#[derive(Clone, Debug, PartialEq)]
pub enum SectorPreset {
    /// ‖a(ζ)‖ ≤ γ‖ζ‖.
    NormBound { gamma: f64 },
    /// ‖W a(ζ)‖ ≤ γ‖L ζ‖ with L p×p and W m×m.
    EllipticNormBound {
        gamma: f64,
        l: DMatrix<f64>,
        w: DMatrix<f64>,
    },
    /// aᵀζ ≥ ρ‖a‖².
    OutputPassive { rho: f64 },
    /// −aᵀζ ≥ ρ̂‖a‖².
    NegativeOutputPassive { rho_hat: f64 },
    /// −[a − K₁ζ]ᵀ[a − K₂ζ] ≥ 0.
    GeneralSector { k1: DMatrix<f64>, k2: DMatrix<f64> },
    /// [a − K₁ζ]ᵀ[ζ − K₂⁻¹a] ≥ 0 with K₂ ≻ 0.
    LoopTransformedSector { k1: DMatrix<f64>, k2: DMatrix<f64> },
    /// ∓[K₁⁻¹a − ζ]ᵀ[ζ − K₂⁻¹a] ≥ 0, sign picked so that Π_aa ≺ 0.
    CircleDisc { k1: DMatrix<f64>, k2: DMatrix<f64> },
}

impl SectorPreset {
    pub fn name(&self) -> &'static str {
        match self {
            SectorPreset::NormBound { .. } => "norm_bound",
            SectorPreset::EllipticNormBound { .. } => "elliptic_norm_bound",
            SectorPreset::OutputPassive { .. } => "output_passive",
            SectorPreset::NegativeOutputPassive { .. } => "negative_output_passive",
            SectorPreset::GeneralSector { .. } => "general_sector",
            SectorPreset::LoopTransformedSector { .. } => "loop_transformed_sector",
            SectorPreset::CircleDisc { .. } => "circle_disc",
        }
    }
}

fn expect_shape(name: &str, a: &DMatrix<f64>, shape: (usize, usize)) -> Result<()> {
    if a.shape() != shape {
        return Err(Error::DimensionMismatch(format!(
            "{name} is {:?}, expected {shape:?}",
            a.shape()
        )));
    }
    Ok(())
}

fn inverse(name: &str, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter(format!("{name} is singular")))
}

/// Builds (Π_ζζ, Π_ζa, Π_aa) for a table row.
pub fn sector_preset(preset: &SectorPreset, p: usize, m: usize) -> Result<SectorRestriction> {
    let im = DMatrix::<f64>::identity(m, m);
    let square = || {
        if p != m {
            Err(Error::DimensionMismatch(format!(
                "preset {} requires p = m, got p = {p}, m = {m}",
                preset.name()
            )))
        } else {
            Ok(())
        }
    };
    match preset {
        SectorPreset::NormBound { gamma } => {
            if gamma.is_nan() || *gamma < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "gamma must be >= 0, got {gamma}"
                )));
            }
            SectorRestriction::new(
                DMatrix::identity(p, p) * (gamma * gamma),
                DMatrix::zeros(p, m),
                -im,
            )
        }
        SectorPreset::EllipticNormBound { gamma, l, w } => {
            expect_shape("L", l, (p, p))?;
            expect_shape("W", w, (m, m))?;
            SectorRestriction::new(
                l.transpose() * l * (gamma * gamma),
                DMatrix::zeros(p, m),
                -(w.transpose() * w),
            )
        }
        SectorPreset::OutputPassive { rho } => {
            square()?;
            SectorRestriction::new(DMatrix::zeros(m, m), &im * 0.5, -&im * *rho)
        }
        SectorPreset::NegativeOutputPassive { rho_hat } => {
            square()?;
            SectorRestriction::new(DMatrix::zeros(m, m), &im * -0.5, -&im * *rho_hat)
        }
        SectorPreset::GeneralSector { k1, k2 } => {
            square()?;
            expect_shape("K1", k1, (m, m))?;
            expect_shape("K2", k2, (m, m))?;
            let pi_zz = -linalg::symmetrize(&(k1.transpose() * k2));
            SectorRestriction::new(pi_zz, (k1.transpose() + k2.transpose()) * 0.5, -im)
        }
        SectorPreset::LoopTransformedSector { k1, k2 } => {
            square()?;
            expect_shape("K1", k1, (m, m))?;
            expect_shape("K2", k2, (m, m))?;
            let k2i = inverse("K2", k2)?;
            let pi_za = (&im + k1.transpose() * &k2i) * 0.5;
            SectorRestriction::new(-linalg::symmetrize(k1), pi_za, -linalg::symmetrize(&k2i))
        }
        SectorPreset::CircleDisc { k1, k2 } => {
            square()?;
            expect_shape("K1", k1, (m, m))?;
            expect_shape("K2", k2, (m, m))?;
            let k1i = inverse("K1", k1)?;
            let k2i = inverse("K2", k2)?;
            let prod = linalg::symmetrize(&(k1i.transpose() * &k2i));
            // Upper sign: sym(−K₁⁻ᵀK₂⁻¹) ≻ 0; lower sign: sym(K₁⁻ᵀK₂⁻¹) ≻ 0.
            let sign = if linalg::lambda_min(&(-&prod)) > 0.0 {
                1.0
            } else if linalg::lambda_min(&prod) > 0.0 {
                -1.0
            } else {
                return Err(Error::NonNegativeDefinitePiAa {
                    max_eig: linalg::lambda_max(&prod).min(linalg::lambda_max(&(-&prod))),
                });
            };
            SectorRestriction::new(&im * sign, (&k1i + &k2i) * (-0.5 * sign), &prod * sign)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformKind {
    TrafoI,
    TrafoII,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformedSystem {
    pub system: TdsSystem,
    pub sector: SectorRestriction,
    pub kind: TransformKind,
}

/// Z = (−Π_aa)⁻¹Π_ζaᵀ (m×p).
pub fn feedthrough_z(sec: &SectorRestriction) -> Result<DMatrix<f64>> {
    Ok(sec.neg_pi_aa_inv()? * sec.pi_za().transpose())
}

/// Shifts the linear loop so that Π_ζa vanishes.
pub fn transformation_one(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    sec: &SectorRestriction,
) -> Result<TransformedSystem> {
    ps.check_system(sys)?;
    sec.check_structure(ps)?;
    let neg_inv = sec.neg_pi_aa_inv()?;
    let z = &neg_inv * sec.pi_za().transpose();
    let p1 = ps.p1();
    let bz = ps.b() * &z;
    let a1 = sys.a1() - bz.columns(0, p1) * ps.c1();
    let a0 = sys.a0() - bz.columns(p1, ps.p0()) * ps.c0();
    let pi_zz = sec.pi_zz() + sec.pi_za() * &neg_inv * sec.pi_za().transpose();
    let sector =
        SectorRestriction::new(pi_zz, DMatrix::zeros(sec.p(), sec.m()), sec.pi_aa().clone())?;
    Ok(TransformedSystem {
        system: TdsSystem::new(a0, a1, sys.h())?,
        sector,
        kind: TransformKind::TrafoI,
    })
}

/// Shifts by K₂ = k₂I so that the sector becomes a passivity restriction.
pub fn transformation_two(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    k1: f64,
    k2: f64,
) -> Result<TransformedSystem> {
    ps.check_system(sys)?;
    if !(k2 > k1) {
        return Err(Error::InvalidSectorOrder { k1, k2 });
    }
    if ps.p() != ps.m() {
        return Err(Error::DimensionMismatch(format!(
            "transformation II requires p = m, got p = {}, m = {}",
            ps.p(),
            ps.m()
        )));
    }
    let p1 = ps.p1();
    let b = ps.b();
    let a1 = sys.a1() - b.columns(0, p1) * ps.c1() * k2;
    let a0 = sys.a0() - b.columns(p1, ps.p0()) * ps.c0() * k2;
    let m = ps.m();
    let sector = SectorRestriction::new(
        DMatrix::zeros(m, m),
        DMatrix::identity(m, m) * (-0.5 * (k2 - k1)),
        -DMatrix::identity(m, m),
    )?;
    Ok(TransformedSystem {
        system: TdsSystem::new(a0, a1, sys.h())?,
        sector,
        kind: TransformKind::TrafoII,
    })
}

/// Δ(s) = sI − A₀ − e^{−sh}A₁.
pub fn char_matrix(sys: &TdsSystem, s: Complex64) -> CMatrix {
    let n = sys.n();
    let e = (-s * sys.h()).exp();
    CMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { s } else { Complex64::new(0.0, 0.0) };
        d - sys.a0()[(i, j)] - e * sys.a1()[(i, j)]
    })
}

/// Δ′(s) = I + h e^{−sh}A₁.
pub fn char_matrix_derivative(sys: &TdsSystem, s: Complex64) -> CMatrix {
    let n = sys.n();
    let e = (-s * sys.h()).exp() * sys.h();
    CMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        Complex64::new(d, 0.0) + e * sys.a1()[(i, j)]
    })
}

/// G(s) = [C₁e^{−sh}; C₀] Δ(s)⁻¹ B.
pub fn transfer_g(sys: &TdsSystem, ps: &PerturbationStructure, s: Complex64) -> Result<CMatrix> {
    let delta = char_matrix(sys, s);
    let svd = nalgebra::SVD::new(delta.clone(), false, false);
    let (smin, smax) = (svd.singular_values.min(), svd.singular_values.max());
    if smin < SINGULAR_TOL * smax || smax == 0.0 {
        return Err(Error::SingularCharMatrix { s });
    }
    let x = linalg::solve_c(&delta, &linalg::to_complex(ps.b()))
        .ok_or(Error::SingularCharMatrix { s })?;
    let e = (-s * sys.h()).exp();
    let top = linalg::to_complex(ps.c1()) * &x * e;
    let bottom = linalg::to_complex(ps.c0()) * &x;
    let mut g = CMatrix::zeros(ps.p(), ps.m());
    g.rows_mut(0, ps.p1()).copy_from(&top);
    g.rows_mut(ps.p1(), ps.p0()).copy_from(&bottom);
    Ok(g)
}

/// Weight matrices of the split functional.
#[derive(Clone, Debug, PartialEq)]
pub struct QPair {
    pub q0: DMatrix<f64>,
    pub q1: DMatrix<f64>,
}

/// Q₀ = C₀ᵀΠ_ζζ⁰⁰C₀ and Q₁ = C₁ᵀΠ_ζζ¹¹C₁ for a transformed sector.
pub fn q_pair(ps: &PerturbationStructure, sec_i: &SectorRestriction) -> Result<QPair> {
    sec_i.check_structure(ps)?;
    if sec_i.pi_za().iter().any(|&x| x != 0.0) {
        return Err(Error::InvalidParameter(
            "q_pair expects a transformed sector with Pi_za = 0".into(),
        ));
    }
    let (p1, p0) = (ps.p1(), ps.p0());
    let pz = sec_i.pi_zz();
    let off = pz.view((p1, 0), (p0, p1)).norm();
    let scale = pz.norm();
    if off > BLOCK_DIAG_TOL * scale {
        return Err(Error::NotBlockDiagonal {
            off_diagonal_norm: off,
        });
    }
    let p11 = pz.view((0, 0), (p1, p1)).into_owned();
    let p00 = pz.view((p1, p1), (p0, p0)).into_owned();
    Ok(QPair {
        q0: linalg::symmetrize(&(ps.c0().transpose() * p00 * ps.c0())),
        q1: linalg::symmetrize(&(ps.c1().transpose() * p11 * ps.c1())),
    })
}

/// W(iω) = −[G; −I]ᴴ Π [G; −I], symmetrized.
pub fn w_matrix(
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    sec: &SectorRestriction,
    omega: f64,
) -> Result<CMatrix> {
    let g = transfer_g(sys, ps, Complex64::new(0.0, omega))?;
    Ok(w_from_g(&g, sec))
}

pub fn w_from_g(g: &CMatrix, sec: &SectorRestriction) -> CMatrix {
    let pzz = linalg::to_complex(sec.pi_zz());
    let pza = linalg::to_complex(sec.pi_za());
    let paa = linalg::to_complex(sec.pi_aa());
    let gh = g.adjoint();
    let form = &gh * pzz * g - &gh * &pza - pza.adjoint() * g + paa;
    let w = -form;
    (&w + w.adjoint()).scale(0.5)
}
