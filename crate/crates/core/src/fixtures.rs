//! Small reference systems shared by tests, benches and examples.

use nalgebra::DMatrix;

use crate::sysmodel::{PerturbationStructure, TdsSystem};

/// ẋ = [[0, 1], [−1, −2]]x(t) + [[0, 0], [−1, 1]]x(t−1).
pub fn second_order_benchmark() -> TdsSystem {
    TdsSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 1.0]),
        1.0,
    )
    .expect("valid fixture")
}

/// Input enters the second state only; both x(t) and x(t−h) are observed.
pub fn second_order_input_structure() -> PerturbationStructure {
    PerturbationStructure::new(
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2),
    )
    .expect("valid fixture")
}

/// ẋ = −x(t) − 0.5x(t−1).
pub fn scalar_stable() -> TdsSystem {
    TdsSystem::scalar(-1.0, -0.5, 1.0).expect("valid fixture")
}
