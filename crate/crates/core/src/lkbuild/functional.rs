use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Discretization;
use crate::error::{Error, Result};
use crate::linalg;
use crate::randfn::{self, ChebyshevHistory, History, PeakAtZero};
use crate::serde_matrix::{rows, rows_vec};
use crate::sysmodel::{PerturbationStructure, SectorRestriction, TdsSystem};

/// The (system, structure, sector) triple a functional certifies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalMeta {
    pub system: TdsSystem,
    pub structure: PerturbationStructure,
    pub sector: SectorRestriction,
}

/// V(φ) = φ(0)ᵀP_xxφ(0) + 2∫φ(0)ᵀP_xz(η)φ(η)dη + ∬φ(ξ)ᵀP_zz(ξ,η)φ(η)dξdη + ∫φ(η)ᵀQ₁φ(η)dη on collocation nodes.
///
/// The node θ = 0 carries the point value φ(0); kernel samples there are zero and the integrals
/// run over θ_0..θ_{N−1}.
#[derive(Clone, Debug)]
pub struct LkFunctional {
    n: usize,
    disc: Discretization,
    p_xx: DMatrix<f64>,
    p_xz_nodes: Vec<DMatrix<f64>>,
    p_zz_grid: Vec<DMatrix<f64>>,
    q1_diag: DMatrix<f64>,
    meta: FunctionalMeta,
    /// Quadratic-form matrix of V₀ on stacked node values.
    p0: DMatrix<f64>,
    /// p0 plus the V₁ weights.
    p_full: DMatrix<f64>,
}

impl PartialEq for LkFunctional {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.disc == other.disc
            && self.p_xx == other.p_xx
            && self.p_xz_nodes == other.p_xz_nodes
            && self.p_zz_grid == other.p_zz_grid
            && self.q1_diag == other.q1_diag
            && self.meta == other.meta
    }
}

const FORMAT: &str = "tdsrobust-lk-functional";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    n: usize,
    order: usize,
    h: f64,
    nodes: Vec<f64>,
    #[serde(with = "rows")]
    p_xx: DMatrix<f64>,
    #[serde(with = "rows_vec")]
    p_xz: Vec<DMatrix<f64>>,
    /// Row-major over node pairs (i, j).
    #[serde(with = "rows_vec")]
    p_zz: Vec<DMatrix<f64>>,
    #[serde(with = "rows")]
    q1_diag: DMatrix<f64>,
    meta: FunctionalMeta,
}

impl LkFunctional {
    /// Builds the functional from the V₀ quadratic-form matrix on stacked node values.
    pub(crate) fn from_quadratic_form(
        p0: &DMatrix<f64>,
        q1: DMatrix<f64>,
        disc: Discretization,
        meta: FunctionalMeta,
    ) -> Result<Self> {
        let n = q1.nrows();
        let nn = disc.order();
        let w = disc.quad_weights();
        let min_weight = w[..nn].iter().copied().fold(f64::INFINITY, f64::min);
        if min_weight < 1e-14 * disc.h() {
            return Err(Error::IllConditionedQuadrature { min_weight });
        }
        let block = |i: usize, j: usize| p0.view((i * n, j * n), (n, n)).into_owned();
        let p_xx = linalg::symmetrize(&block(nn, nn));
        let mut p_xz_nodes: Vec<DMatrix<f64>> = (0..nn).map(|j| block(nn, j) / w[j]).collect();
        p_xz_nodes.push(DMatrix::zeros(n, n));
        let mut p_zz_grid = Vec::with_capacity((nn + 1) * (nn + 1));
        for i in 0..=nn {
            for j in 0..=nn {
                if i < nn && j < nn {
                    // Average with the transposed pair so the kernel symmetry holds exactly.
                    let s = (block(i, j) + block(j, i).transpose()) * 0.5;
                    p_zz_grid.push(s / (w[i] * w[j]));
                } else {
                    p_zz_grid.push(DMatrix::zeros(n, n));
                }
            }
        }
        Self::assemble(
            n,
            disc,
            p_xx,
            p_xz_nodes,
            p_zz_grid,
            linalg::symmetrize(&q1),
            meta,
        )
    }

    fn assemble(
        n: usize,
        disc: Discretization,
        p_xx: DMatrix<f64>,
        p_xz_nodes: Vec<DMatrix<f64>>,
        p_zz_grid: Vec<DMatrix<f64>>,
        q1_diag: DMatrix<f64>,
        meta: FunctionalMeta,
    ) -> Result<Self> {
        let nn = disc.order();
        let size = n * (nn + 1);
        if p_xx.shape() != (n, n)
            || q1_diag.shape() != (n, n)
            || p_xz_nodes.len() != nn + 1
            || p_zz_grid.len() != (nn + 1) * (nn + 1)
            || p_xz_nodes
                .iter()
                .chain(&p_zz_grid)
                .any(|b| b.shape() != (n, n))
            || meta.system.n() != n
        {
            return Err(Error::DimensionMismatch(
                "functional kernel blocks do not match n and the node count".into(),
            ));
        }
        let w = disc.quad_weights();
        let mut p0 = DMatrix::zeros(size, size);
        p0.view_mut((nn * n, nn * n), (n, n)).copy_from(&p_xx);
        for j in 0..nn {
            let b = &p_xz_nodes[j] * w[j];
            p0.view_mut((nn * n, j * n), (n, n)).copy_from(&b);
            p0.view_mut((j * n, nn * n), (n, n))
                .copy_from(&b.transpose());
            for i in 0..nn {
                p0.view_mut((i * n, j * n), (n, n))
                    .copy_from(&(&p_zz_grid[i * (nn + 1) + j] * (w[i] * w[j])));
            }
        }
        let mut p_full = p0.clone();
        for (j, wt) in disc.interior_weights().iter().enumerate() {
            let mut blk = p_full.view_mut((j * n, j * n), (n, n));
            blk += &q1_diag * *wt;
        }
        Ok(Self {
            n,
            disc,
            p_xx,
            p_xz_nodes,
            p_zz_grid,
            q1_diag,
            meta,
            p0,
            p_full,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn p_xx(&self) -> &DMatrix<f64> {
        &self.p_xx
    }

    pub fn p_xz_nodes(&self) -> &[DMatrix<f64>] {
        &self.p_xz_nodes
    }

    /// Kernel sample P_zz(θ_i, θ_j).
    pub fn p_zz(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.p_zz_grid[i * self.disc.len() + j]
    }

    pub fn q1_diag(&self) -> &DMatrix<f64> {
        &self.q1_diag
    }

    pub fn meta(&self) -> &FunctionalMeta {
        &self.meta
    }

    /// Quadratic-form matrix of V on stacked node values.
    pub fn quadratic_form(&self) -> &DMatrix<f64> {
        &self.p_full
    }

    pub fn v0_form(&self) -> &DMatrix<f64> {
        &self.p0
    }

    fn stack(&self, phi: &[DVector<f64>]) -> Result<DVector<f64>> {
        if phi.len() != self.disc.len() || phi.iter().any(|v| v.len() != self.n) {
            return Err(Error::NodeMismatch {
                expected: self.disc.len(),
                dim: self.n,
                found: phi.len(),
            });
        }
        let mut y = DVector::zeros(self.n * phi.len());
        for (j, v) in phi.iter().enumerate() {
            y.rows_mut(j * self.n, self.n).copy_from(v);
        }
        Ok(y)
    }

    /// V(φ) from samples at the nodes.
    pub fn evaluate(&self, phi: &[DVector<f64>]) -> Result<f64> {
        let y = self.stack(phi)?;
        Ok(y.dot(&(&self.p_full * &y)))
    }

    /// The split parts (V₀, V₁).
    pub fn evaluate_parts(&self, phi: &[DVector<f64>]) -> Result<(f64, f64)> {
        let y = self.stack(phi)?;
        let v0 = y.dot(&(&self.p0 * &y));
        let v1 = phi[..self.disc.order()]
            .iter()
            .zip(self.disc.interior_weights())
            .map(|(p, w)| w * p.dot(&(&self.q1_diag * p)))
            .sum();
        Ok((v0, v1))
    }

    /// v(φ) = P_xxφ(0) + ∫P_xz(η)φ(η)dη.
    pub fn evaluate_vec(&self, phi: &[DVector<f64>]) -> Result<DVector<f64>> {
        let y = self.stack(phi)?;
        let nn = self.disc.order();
        Ok(self.p0.rows(nn * self.n, self.n) * y)
    }

    /// Derivative of V along a curve of node samples with node velocities `dphi`: 2 yᵀ P ẏ.
    pub fn derivative_along(&self, phi: &[DVector<f64>], dphi: &[DVector<f64>]) -> Result<f64> {
        let y = self.stack(phi)?;
        let dy = self.stack(dphi)?;
        Ok(2.0 * y.dot(&(&self.p_full * dy)))
    }

    /// Nominal derivative D_fV: spectral derivative on the history nodes and A₀φ(0) + A₁φ(−h) at θ = 0.
    pub fn nominal_derivative(&self, sys: &TdsSystem, phi: &[DVector<f64>]) -> Result<f64> {
        self.stack(phi)?;
        let mut dphi = self.disc.derivative(phi);
        let nn = self.disc.order();
        dphi[nn] = sys.rhs(&phi[nn], &phi[0]);
        self.derivative_along(phi, &dphi)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = Document {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            n: self.n,
            order: self.disc.order(),
            h: self.disc.h(),
            nodes: self.disc.nodes().to_vec(),
            p_xx: self.p_xx.clone(),
            p_xz: self.p_xz_nodes.clone(),
            p_zz: self.p_zz_grid.clone(),
            q1_diag: self.q1_diag.clone(),
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidParameter(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(s)
            .map_err(|e| Error::InvalidParameter(format!("functional document: {e}")))?;
        if doc.format != FORMAT || doc.version != FORMAT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported functional format {} v{}",
                doc.format, doc.version
            )));
        }
        let disc = Discretization::new(doc.order, doc.h)?;
        if doc.nodes != disc.nodes() {
            return Err(Error::NodeMismatch {
                expected: disc.len(),
                dim: doc.n,
                found: doc.nodes.len(),
            });
        }
        Self::assemble(
            doc.n,
            disc,
            doc.p_xx,
            doc.p_xz,
            doc.p_zz,
            doc.q1_diag,
            doc.meta,
        )
    }

    /// k₂ in V(φ) ≤ k₂‖φ‖²_C: (h+1)‖P₀‖ + h‖Q₁‖ with ‖P₀‖ the norm of V₀ in the L₂ × ℝⁿ inner product.
    pub fn upper_bound_constant(&self) -> f64 {
        let nn = self.disc.order();
        let n = self.n;
        let w = self.disc.quad_weights();
        let scale = DVector::from_fn(n * (nn + 1), |k, _| {
            let j = k / n;
            if j == nn {
                1.0
            } else {
                1.0 / w[j].sqrt()
            }
        });
        let scaled = DMatrix::from_fn(scale.len(), scale.len(), |i, j| {
            self.p0[(i, j)] * scale[i] * scale[j]
        });
        let p0_norm = linalg::sym_eigenvalues(&scaled)
            .iter()
            .fold(0.0f64, |a, &e| a.max(e.abs()));
        let h = self.disc.h();
        (h + 1.0) * p0_norm + h * linalg::norm2(&self.q1_diag)
    }
}

/// Relative mismatch of the defining equation at φ:
/// D_fV(φ) against −ζᵀΠ_ζζζ − [Bᵀv − Π_ζaᵀζ]ᵀ(−Π_aa)⁻¹[Bᵀv − Π_ζaᵀζ] with ζ = 𝒞φ.
pub fn defining_equation_residual(
    lk: &LkFunctional,
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    sec: &SectorRestriction,
    phi: &[DVector<f64>],
) -> Result<f64> {
    let (lhs, rhs) = defining_equation_sides(lk, sys, ps, sec, phi)?;
    Ok((lhs - rhs).abs() / (1.0 + rhs.abs()))
}

pub fn defining_equation_sides(
    lk: &LkFunctional,
    sys: &TdsSystem,
    ps: &PerturbationStructure,
    sec: &SectorRestriction,
    phi: &[DVector<f64>],
) -> Result<(f64, f64)> {
    let lhs = lk.nominal_derivative(sys, phi)?;
    let nn = lk.disc.order();
    let zeta = ps.apply_c(&phi[0], &phi[nn]);
    let v = lk.evaluate_vec(phi)?;
    let u = ps.b().transpose() * v - sec.pi_za().transpose() * &zeta;
    let rhs = -zeta.dot(&(sec.pi_zz() * &zeta)) - u.dot(&(sec.neg_pi_aa_inv()? * &u));
    Ok((lhs, rhs))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    /// min V(φ)·‖φ‖_C / ‖φ(0)‖³.
    pub min_ratio_cubic: f64,
    /// min V(φ)/‖φ(0)‖² over φ with ‖φ‖_C = ‖φ(0)‖.
    pub min_ratio_razumikhin: f64,
    /// min V(φ) over all probes, including φ(0) = 0.
    pub min_value: f64,
    pub samples: usize,
}

/// Random probes of the cubic and Razumikhin-type lower bounds for φ with ‖φ‖_C ≤ radius.
pub fn positivity_probe<R: Rng + ?Sized>(
    lk: &LkFunctional,
    samples: usize,
    radius: f64,
    rng: &mut R,
) -> Result<PositivityReport> {
    let (n, h) = (lk.n, lk.disc.h());
    let mut rep = PositivityReport {
        min_ratio_cubic: f64::INFINITY,
        min_ratio_razumikhin: f64::INFINITY,
        min_value: f64::INFINITY,
        samples,
    };
    for k in 0..samples {
        let degree = 1 + k % 8;
        let f = ChebyshevHistory::random(rng, n, h, degree);
        let r = rng.gen_range(0.0..=radius);
        let sup = f.sup_norm();
        if sup > 0.0 {
            let f = f.scaled(r / sup);
            let phi = lk.disc.sample(|t| f.value(t));
            let v = lk.evaluate(&phi)?;
            rep.min_value = rep.min_value.min(v);
            let x0 = phi[lk.disc.order()].norm();
            if x0 > 1e-12 * r.max(f64::MIN_POSITIVE) {
                rep.min_ratio_cubic = rep
                    .min_ratio_cubic
                    .min(v * randfn::sup_norm(&f, h) / x0.powi(3));
            }
        }
        let r = rng.gen_range(0.0..=radius).max(1e-6 * radius);
        let g = PeakAtZero::random(rng, n, h, r);
        let phi = lk.disc.sample(|t| g.value(t));
        let v = lk.evaluate(&phi)?;
        rep.min_value = rep.min_value.min(v);
        rep.min_ratio_razumikhin = rep.min_ratio_razumikhin.min(v / g.radius.powi(2));
    }
    Ok(rep)
}
