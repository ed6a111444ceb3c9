use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type GainFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
pub type MapFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub enum NonlinearityKind {
    /// a(ζ) = Γζ.
    LinearGain(DMatrix<f64>),
    /// a(ζ) = slope·clamp(Mζ, ±limit) componentwise; lies in the sector [0, slope] when ‖M‖₂ ≤ 1.
    Saturation {
        slope: f64,
        limit: f64,
        mix: DMatrix<f64>,
    },
    /// a_i(ζ) = s_i ζ_i³.
    CubicDiagonal(Vec<f64>),
    /// a(t, ζ) = Γ(t)ζ.
    TimeVaryingGain(GainFn),
    Custom(MapFn),
}

impl fmt::Debug for NonlinearityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LinearGain(g) => f.debug_tuple("LinearGain").field(g).finish(),
            Self::Saturation { slope, limit, mix } => f
                .debug_struct("Saturation")
                .field("slope", slope)
                .field("limit", limit)
                .field("mix", mix)
                .finish(),
            Self::CubicDiagonal(s) => f.debug_tuple("CubicDiagonal").field(s).finish(),
            Self::TimeVaryingGain(_) => f.write_str("TimeVaryingGain(..)"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// The map a: ℝᵖ → ℝᵐ, possibly time-varying, with a(t, 0) = 0.
#[derive(Clone, Debug)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    descriptor: String,
    p: usize,
    m: usize,
}

impl Nonlinearity {
    fn checked(kind: NonlinearityKind, descriptor: String, p: usize, m: usize) -> Result<Self> {
        let nl = Self {
            kind,
            descriptor,
            p,
            m,
        };
        let zero = DVector::zeros(p);
        for t in [0.0, 0.37, 1.0, 10.0] {
            let a = nl.eval(t, &zero);
            if a.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "nonlinearity returned {} outputs, expected {m}",
                    a.len()
                )));
            }
            let norm = a.norm();
            if !(norm <= 1e-14) {
                return Err(Error::NonzeroAtOrigin { norm });
            }
        }
        Ok(nl)
    }

    pub fn linear_gain(gain: DMatrix<f64>) -> Result<Self> {
        let (m, p) = gain.shape();
        let d = format!(
            "linear gain with spectral norm {}",
            crate::linalg::norm2(&gain)
        );
        Self::checked(NonlinearityKind::LinearGain(gain), d, p, m)
    }

    pub fn zero(p: usize, m: usize) -> Self {
        Self {
            kind: NonlinearityKind::LinearGain(DMatrix::zeros(m, p)),
            descriptor: "zero".into(),
            p,
            m,
        }
    }

    pub fn saturation(slope: f64, limit: f64, mix: DMatrix<f64>) -> Result<Self> {
        if !(slope >= 0.0 && limit > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "saturation needs slope >= 0 and limit > 0, got {slope}, {limit}"
            )));
        }
        let (m, p) = mix.shape();
        let d = format!("saturation slope {slope} limit {limit}");
        Self::checked(NonlinearityKind::Saturation { slope, limit, mix }, d, p, m)
    }

    pub fn cubic_diagonal(signs: Vec<f64>) -> Result<Self> {
        let m = signs.len();
        Self::checked(
            NonlinearityKind::CubicDiagonal(signs),
            "diagonal cubic".into(),
            m,
            m,
        )
    }

    pub fn time_varying_gain(
        p: usize,
        m: usize,
        gain: GainFn,
        descriptor: impl Into<String>,
    ) -> Result<Self> {
        Self::checked(
            NonlinearityKind::TimeVaryingGain(gain),
            descriptor.into(),
            p,
            m,
        )
    }

    pub fn custom(p: usize, m: usize, map: MapFn, descriptor: impl Into<String>) -> Result<Self> {
        Self::checked(NonlinearityKind::Custom(map), descriptor.into(), p, m)
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn eval(&self, t: f64, zeta: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            NonlinearityKind::LinearGain(g) => g * zeta,
            NonlinearityKind::Saturation { slope, limit, mix } => {
                (mix * zeta).map(|z| slope * z.clamp(-limit, *limit))
            }
            NonlinearityKind::CubicDiagonal(s) => {
                DVector::from_fn(s.len(), |i, _| s[i] * zeta[i].powi(3))
            }
            NonlinearityKind::TimeVaryingGain(g) => g(t) * zeta,
            NonlinearityKind::Custom(f) => f(t, zeta),
        }
    }
}
