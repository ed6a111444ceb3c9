use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{name} is not symmetric (relative asymmetry {asymmetry:e})")]
    Asymmetric { name: &'static str, asymmetry: f64 },

    #[error("Pi_aa is not negative definite (largest eigenvalue {max_eig:e})")]
    NonNegativeDefinitePiAa { max_eig: f64 },

    #[error("Pi_aa is singular")]
    SingularPiAa,

    #[error("sector bounds out of order: k2 = {k2} must exceed k1 = {k1}")]
    InvalidSectorOrder { k1: f64, k2: f64 },

    #[error("characteristic matrix is numerically singular at s = {s}")]
    SingularCharMatrix { s: Complex64 },

    #[error("transformed Pi_zz is not block diagonal (off-diagonal norm {off_diagonal_norm:e})")]
    NotBlockDiagonal { off_diagonal_norm: f64 },

    #[error("tail bound invalid at omega = {omega}: need omega > {threshold}")]
    TailBoundInvalid { omega: f64, threshold: f64 },

    #[error("Riccati equation has no stabilizing solution: {reason}")]
    AreNoStabilizingSolution { reason: String, iterations: usize },

    #[error("quadrature weight {min_weight:e} too small for kernel extraction")]
    IllConditionedQuadrature { min_weight: f64 },

    #[error("samples do not match the discretization: expected {expected} nodes of dimension {dim}, got {found}")]
    NodeMismatch {
        expected: usize,
        dim: usize,
        found: usize,
    },

    #[error("solution blew up at t = {t} (norm {norm:e})")]
    BlowUp { t: f64, norm: f64 },

    #[error("nominal system is not exponentially stable (rightmost real part {rightmost:e})")]
    UnstableNominal { rightmost: f64 },

    #[error("nonlinearity does not vanish at zero (|a(0)| = {norm:e})")]
    NonzeroAtOrigin { norm: f64 },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
}
