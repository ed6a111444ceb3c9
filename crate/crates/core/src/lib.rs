//! Robustness certificates for linear time-delay systems under sector-bounded perturbations.
//!
//! The nominal system ẋ = A₀x(t) + A₁x(t−h) is perturbed by g(x_t) = −B·a(𝒞x_t) where the
//! nonlinearity `a` satisfies a quadratic sector restriction. The crate computes frequency-domain
//! bounds on admissible sectors, constructs Lyapunov–Krasovskii functionals by solving a
//! collocated Riccati equation, and checks their properties along simulated trajectories.

// `!(x > 0.0)` is used on purpose so that NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complete_type;
pub mod error;
pub mod fixtures;
pub mod freqbounds;
pub mod linalg;
pub mod lkbuild;
pub mod randfn;
pub mod rfdesim;
pub mod serde_matrix;
pub mod spectrum;
pub mod sysmodel;

pub use error::{Error, Result};
pub use freqbounds::{Certificate, CertificateKind, SweepConfig, Verdict};
pub use lkbuild::{AreSolveReport, Discretization, LkFunctional};
pub use rfdesim::{Nonlinearity, Trajectory};
pub use spectrum::RootReport;
pub use sysmodel::{
    PerturbationStructure, QPair, SectorPreset, SectorRestriction, TdsSystem, TransformKind,
    TransformedSystem,
};
