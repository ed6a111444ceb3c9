use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdsrobust::fixtures::second_order_benchmark;
use tdsrobust::lkbuild::{build_functional, DEFAULT_ARE_TOL};
use tdsrobust::randfn::{ChebyshevHistory, History};
use tdsrobust::rfdesim::{
    functional_along, integrate, monotonicity_check, perturbation_derivative_check,
    sector_membership,
};
use tdsrobust::sysmodel::sector_preset;
use tdsrobust::{
    Discretization, Error, LkFunctional, Nonlinearity, PerturbationStructure, SectorPreset,
    TdsSystem,
};

const GAMMA: f64 = 0.1;
const GAIN: f64 = 0.08;

fn benchmark_lk(order: usize) -> (LkFunctional, TdsSystem, PerturbationStructure) {
    let sys = second_order_benchmark();
    let ps = PerturbationStructure::unstructured(2);
    let sec = sector_preset(&SectorPreset::NormBound { gamma: GAMMA }, 4, 2).unwrap();
    let (lk, _) = build_functional(
        &sys,
        &ps,
        &sec,
        &Discretization::new(order, 1.0).unwrap(),
        DEFAULT_ARE_TOL,
    )
    .unwrap();
    (lk, sys, ps)
}

fn history(seed: u64) -> Arc<dyn History> {
    Arc::new(ChebyshevHistory::random(
        &mut ChaCha8Rng::seed_from_u64(seed),
        2,
        1.0,
        5,
    ))
}

fn random_gain<R: Rng>(rng: &mut R, norm: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(2, 4, |_, _| rng.gen_range(-1.0..1.0));
    let s = g.clone().svd(false, false).singular_values.max();
    g * (norm / s)
}

fn saturation(rng: &mut impl Rng) -> Nonlinearity {
    // Mixing matrix with unit spectral norm keeps ‖a(ζ)‖ ≤ slope‖ζ‖.
    Nonlinearity::saturation(GAIN, 0.05, random_gain(rng, 1.0)).unwrap()
}

#[test]
fn zero_is_an_equilibrium() {
    let sys = second_order_benchmark();
    let ps = PerturbationStructure::unstructured(2);
    let nl = Nonlinearity::saturation(GAIN, 0.1, DMatrix::identity(2, 4)).unwrap();
    let zero: Arc<dyn History> = Arc::new(ChebyshevHistory::constant(DVector::zeros(2), 1.0));
    let traj = integrate(&sys, &ps, &nl, zero, 0.05, 5.0).unwrap();
    assert!(traj.mesh().all(|(_, x)| x.norm() <= 1e-12));
    let (lk, ..) = benchmark_lk(12);
    let values = functional_along(&lk, &traj, &traj.check_times(10)).unwrap();
    assert!(values.iter().all(|&(_, v)| v == 0.0));
}

#[test]
fn method_of_steps_on_pure_delay() {
    // ẋ = −x(t−1), φ ≡ 1: x = 1 − t on [0, 1], x = 1 − t + (t−1)²/2 on [1, 2].
    let sys = TdsSystem::scalar(0.0, -1.0, 1.0).unwrap();
    let ps = PerturbationStructure::unstructured(1);
    let one: Arc<dyn History> = Arc::new(ChebyshevHistory::constant(
        DVector::from_element(1, 1.0),
        1.0,
    ));
    let traj = integrate(&sys, &ps, &Nonlinearity::zero(2, 1), one, 0.1, 2.0).unwrap();
    for t in [0.25, 0.5, 0.93] {
        assert!((traj.value(t)[0] - (1.0 - t)).abs() < 1e-12);
    }
    for t in [1.2, 1.5, 1.73, 2.0] {
        assert!((traj.value(t)[0] - (1.0 - t + (t - 1.0f64).powi(2) / 2.0)).abs() < 1e-12);
    }
}

#[test]
fn rk4_is_fourth_order() {
    let sys = TdsSystem::scalar(-1.0, 0.0, 1.0).unwrap();
    let ps = PerturbationStructure::unstructured(1);
    let one: Arc<dyn History> = Arc::new(ChebyshevHistory::constant(
        DVector::from_element(1, 1.0),
        1.0,
    ));
    let err = |step: f64| {
        let traj = integrate(&sys, &ps, &Nonlinearity::zero(2, 1), one.clone(), step, 2.0).unwrap();
        (traj.value(2.0)[0] - (-2.0f64).exp()).abs()
    };
    let (coarse, fine) = (err(0.2), err(0.02));
    let ratio = coarse / fine;
    assert!((5e3..2e4).contains(&ratio), "{ratio}");
}

#[test]
fn step_must_resolve_the_delay() {
    let sys = second_order_benchmark();
    let ps = PerturbationStructure::unstructured(2);
    let r = integrate(&sys, &ps, &Nonlinearity::zero(4, 2), history(0), 0.3, 1.0);
    assert!(matches!(r, Err(Error::InvalidParameter(_))));
}

#[test]
fn unstable_growth_is_reported() {
    let sys = TdsSystem::scalar(30.0, 0.0, 1.0).unwrap();
    let ps = PerturbationStructure::unstructured(1);
    let one: Arc<dyn History> = Arc::new(ChebyshevHistory::constant(
        DVector::from_element(1, 1.0),
        1.0,
    ));
    let r = integrate(&sys, &ps, &Nonlinearity::zero(2, 1), one, 0.01, 10.0);
    assert!(matches!(r, Err(Error::BlowUp { .. })));
}

#[test]
fn perturbation_identity_at_fine_step() {
    let (lk, sys, ps) = benchmark_lk(24);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cases = [
        (Nonlinearity::zero(4, 2), 1e-5),
        (saturation(&mut rng), 1e-4),
    ];
    for (nl, tol) in cases {
        let traj = integrate(&sys, &ps, &nl, history(3), 1e-3, 3.0).unwrap();
        let m = perturbation_derivative_check(&lk, &sys, &ps, &nl, &traj, &traj.check_times(25))
            .unwrap();
        assert!(m <= tol, "{} {m:e}", nl.descriptor());
    }
}

#[test]
fn perturbation_identity_converges_quadratically() {
    let (lk, sys, ps) = benchmark_lk(24);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let nl = Nonlinearity::linear_gain(random_gain(&mut rng, GAIN)).unwrap();
    let mismatch = |step: f64| {
        let traj = integrate(&sys, &ps, &nl, history(4), step, 6.0).unwrap();
        perturbation_derivative_check(&lk, &sys, &ps, &nl, &traj, &traj.check_times(40)).unwrap()
    };
    let (a, b, c) = (mismatch(0.04), mismatch(0.02), mismatch(0.01));
    assert!(b < a && c < b, "{a:e} {b:e} {c:e}");
    // Second order: the two halvings together gain at least a factor 10 (16 ideally).
    assert!(a / c > 10.0, "{a:e} {c:e}");
}

#[test]
fn functional_decreases_along_in_sector_trajectories() {
    let (lk, sys, ps) = benchmark_lk(20);
    let k3 = GAMMA * GAMMA - GAIN * GAIN;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for i in 0..20 {
        let nl = if i % 2 == 0 {
            Nonlinearity::linear_gain(random_gain(&mut rng, GAIN)).unwrap()
        } else {
            saturation(&mut rng)
        };
        let traj = integrate(&sys, &ps, &nl, history(100 + i), 0.01, 8.0).unwrap();
        let times = traj.check_times(60);
        let rep = monotonicity_check(&lk, &ps, &traj, &times, Some(k3)).unwrap();
        assert!(
            rep.max_increase <= 1e-5 && rep.max_slope_violation <= 1e-5,
            "{rep:?}"
        );
        assert!(rep.max_bound_violation.unwrap() <= 1e-5, "{rep:?}");
        assert!(rep.final_value < rep.initial_value);
    }
}

#[test]
fn sector_membership_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let cubic = Nonlinearity::cubic_diagonal(vec![1.0]).unwrap();
    let passive = sector_preset(&SectorPreset::OutputPassive { rho: 0.1 }, 1, 1).unwrap();
    let r = sector_membership(&cubic, &passive, 500, 3.0, None, &mut rng).unwrap();
    assert_eq!(r.fraction_inside, 1.0);

    let gamma = 0.3;
    let nb = sector_preset(&SectorPreset::NormBound { gamma }, 1, 1).unwrap();
    let r = sector_membership(&Nonlinearity::zero(1, 1), &nb, 200, 1.0, None, &mut rng).unwrap();
    assert_eq!(r.fraction_inside, 1.0);
    assert_eq!(r.worst_margin, 0.0);

    let big = Nonlinearity::linear_gain(DMatrix::from_element(1, 1, 2.0 * gamma)).unwrap();
    let r = sector_membership(&big, &nb, 200, 1.0, None, &mut rng).unwrap();
    assert_eq!(r.fraction_inside, 1.0 / 200.0);
    assert!(r.worst_margin < 0.0);
}

#[test]
fn sector_offset_for_benchmark_nonlinearities() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let sec = sector_preset(&SectorPreset::NormBound { gamma: GAMMA }, 4, 2).unwrap();
    let k3 = GAMMA * GAMMA - GAIN * GAIN;
    for nl in [
        saturation(&mut rng),
        Nonlinearity::linear_gain(random_gain(&mut rng, GAIN)).unwrap(),
    ] {
        let r = sector_membership(&nl, &sec, 500, 5.0, Some(k3), &mut rng).unwrap();
        assert_eq!(r.fraction_inside, 1.0);
    }
}

#[test]
fn nonlinearity_must_vanish_at_zero() {
    let f = Arc::new(|_t: f64, z: &DVector<f64>| z.map(|x| x + 1.0));
    assert!(matches!(
        Nonlinearity::custom(1, 1, f, "shifted"),
        Err(Error::NonzeroAtOrigin { .. })
    ));
}

#[test]
fn dense_output_derivative_matches_values() {
    let sys = second_order_benchmark();
    let ps = PerturbationStructure::unstructured(2);
    let traj = integrate(&sys, &ps, &Nonlinearity::zero(4, 2), history(5), 0.05, 3.0).unwrap();
    for t in [0.37, 1.41, 2.22] {
        let e = 1e-6;
        let fd = (traj.value(t + e) - traj.value(t - e)) / (2.0 * e);
        assert!((fd - traj.derivative(t)).norm() < 1e-6);
    }
}
