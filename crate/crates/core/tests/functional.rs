use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdsrobust::fixtures::{scalar_stable, second_order_benchmark, second_order_input_structure};
use tdsrobust::lkbuild::{
    build_functional, defining_equation_residual, defining_equation_sides, positivity_probe,
    DEFAULT_ARE_TOL,
};
use tdsrobust::randfn::{ChebyshevHistory, History, PeakAtZero};
use tdsrobust::sysmodel::sector_preset;
use tdsrobust::{
    Discretization, Error, LkFunctional, PerturbationStructure, SectorPreset, SectorRestriction,
    TdsSystem,
};

fn norm_bound(gamma: f64, ps: &PerturbationStructure) -> SectorRestriction {
    sector_preset(&SectorPreset::NormBound { gamma }, ps.p(), ps.m()).unwrap()
}

fn delay_free_scalar() -> (TdsSystem, PerturbationStructure) {
    let sys = TdsSystem::scalar(-1.0, 0.0, 1.0).unwrap();
    let ps = PerturbationStructure::new(
        DMatrix::identity(1, 1),
        DMatrix::zeros(0, 1),
        DMatrix::identity(1, 1),
    )
    .unwrap();
    (sys, ps)
}

fn benchmark_functional(
    gamma: f64,
    order: usize,
) -> (
    LkFunctional,
    TdsSystem,
    PerturbationStructure,
    SectorRestriction,
) {
    let sys = second_order_benchmark();
    let ps = PerturbationStructure::unstructured(2);
    let sec = norm_bound(gamma, &ps);
    let disc = Discretization::new(order, 1.0).unwrap();
    let (lk, _) = build_functional(&sys, &ps, &sec, &disc, DEFAULT_ARE_TOL).unwrap();
    (lk, sys, ps, sec)
}

fn random_poly<R: Rng>(
    rng: &mut R,
    n: usize,
    h: f64,
    degree: usize,
    disc: &Discretization,
) -> Vec<DVector<f64>> {
    let f = ChebyshevHistory::random(rng, n, h, degree);
    disc.sample(|t| f.value(t))
}

#[test]
fn delay_free_scalar_riccati_oracle() {
    let (sys, ps) = delay_free_scalar();
    let sec = norm_bound(0.6, &ps);
    let disc = Discretization::new(16, 1.0).unwrap();
    let (lk, rep) = build_functional(&sys, &ps, &sec, &disc, 1e-13).unwrap();
    let oracle = 1.0 - (1.0f64 - 0.36).sqrt();
    assert!(
        (lk.p_xx()[(0, 0)] - oracle).abs() < 1e-9,
        "{}",
        lk.p_xx()[(0, 0)]
    );
    assert!(rep.closed_loop_stable);

    // LHS = −0.4φ(0)², RHS = −0.36φ(0)² − (0.2φ(0))².
    let phi: Vec<_> = disc
        .nodes()
        .iter()
        .map(|_| DVector::from_element(1, 1.5))
        .collect();
    let (lhs, rhs) = defining_equation_sides(&lk, &sys, &ps, &sec, &phi).unwrap();
    assert!((lhs + 0.4 * 2.25).abs() < 1e-9 && (rhs + 0.4 * 2.25).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pr = positivity_probe(&lk, 200, 2.0, &mut rng).unwrap();
    assert!(
        (pr.min_ratio_razumikhin - oracle).abs() < 1e-8,
        "{}",
        pr.min_ratio_razumikhin
    );
}

#[test]
fn zero_gain_gives_zero_functional() {
    let sys = second_order_benchmark();
    let ps = PerturbationStructure::unstructured(2);
    let disc = Discretization::new(12, 1.0).unwrap();
    let (lk, _) =
        build_functional(&sys, &ps, &norm_bound(0.0, &ps), &disc, DEFAULT_ARE_TOL).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let phi = random_poly(&mut rng, 2, 1.0, 5, &disc);
    assert_eq!(lk.evaluate(&phi).unwrap(), 0.0);
}

#[test]
fn benchmark_riccati_residual_and_failure_beyond_bound() {
    let sys = second_order_benchmark();
    let ps = PerturbationStructure::unstructured(2);
    let disc = Discretization::new(24, 1.0).unwrap();
    let (_, rep) =
        build_functional(&sys, &ps, &norm_bound(0.1, &ps), &disc, DEFAULT_ARE_TOL).unwrap();
    assert!(rep.residual <= 1e-8, "{}", rep.residual);
    assert!(rep.closed_loop_stable && rep.closed_loop_abscissa < 0.0);
    assert_eq!(rep.n_state, 2 * 25);
    let err =
        build_functional(&sys, &ps, &norm_bound(0.12, &ps), &disc, DEFAULT_ARE_TOL).unwrap_err();
    assert!(
        matches!(err, Error::AreNoStabilizingSolution { .. }),
        "{err:?}"
    );
}

#[test]
fn defining_equation_holds_on_polynomials() {
    let (lk, sys, ps, sec) = benchmark_functional(0.1, 24);
    let disc = lk.discretization().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let deg = rng.gen_range(0..=12);
        let phi = random_poly(&mut rng, 2, 1.0, deg, &disc);
        let r = defining_equation_residual(&lk, &sys, &ps, &sec, &phi).unwrap();
        assert!(r <= 1e-6, "{r}");
    }
    let zero = vec![DVector::zeros(2); disc.len()];
    assert_eq!(
        defining_equation_residual(&lk, &sys, &ps, &sec, &zero).unwrap(),
        0.0
    );
}

#[test]
fn positivity_on_fixture_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bench = second_order_benchmark();
    let cases = [
        (bench.clone(), PerturbationStructure::unstructured(2), 0.1),
        (bench.clone(), second_order_input_structure(), 0.2),
        (scalar_stable(), PerturbationStructure::unstructured(1), 0.3),
    ];
    for (sys, ps, gamma) in cases {
        let disc = Discretization::new(20, sys.h()).unwrap();
        let sec = norm_bound(gamma, &ps);
        let (lk, _) = build_functional(&sys, &ps, &sec, &disc, DEFAULT_ARE_TOL).unwrap();
        let pr = positivity_probe(&lk, 1000, 1.0, &mut rng).unwrap();
        assert!(
            pr.min_ratio_cubic > 0.0 && pr.min_ratio_razumikhin > 0.0 && pr.min_value >= 0.0,
            "{pr:?}"
        );
    }
}

#[test]
fn upper_bound_in_sup_norm() {
    let (lk, ..) = benchmark_functional(0.1, 20);
    let k2 = lk.upper_bound_constant();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let deg = rng.gen_range(0..8);
        let f = ChebyshevHistory::random(&mut rng, 2, 1.0, deg);
        let phi = lk.discretization().sample(|t| f.value(t));
        assert!(lk.evaluate(&phi).unwrap() <= k2 * f.sup_norm().powi(2) * (1.0 + 1e-12));
    }
}

#[test]
fn kernel_symmetry() {
    let (lk, ..) = benchmark_functional(0.1, 16);
    let nn = lk.discretization().order();
    assert_eq!(lk.p_xx(), &lk.p_xx().transpose());
    for i in 0..=nn {
        for j in 0..=nn {
            let a = lk.p_zz(i, j);
            let b = lk.p_zz(j, i).transpose();
            assert!((a - &b).norm() <= 1e-8 * (1.0 + a.norm()));
        }
    }
}

#[test]
fn spectral_convergence_in_order() {
    let (coarse, ..) = benchmark_functional(0.1, 16);
    let (fine, ..) = benchmark_functional(0.1, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let f = ChebyshevHistory::random(&mut rng, 2, 1.0, 6);
        let a = coarse
            .evaluate(&coarse.discretization().sample(|t| f.value(t)))
            .unwrap();
        let b = fine
            .evaluate(&fine.discretization().sample(|t| f.value(t)))
            .unwrap();
        assert!((a - b).abs() <= 1e-6 * (1.0 + b), "{a} vs {b}");
    }
}

#[test]
fn json_round_trip_is_bit_equal() {
    let (lk, ..) = benchmark_functional(0.1, 12);
    let s = lk.to_json().unwrap();
    let back = LkFunctional::from_json(&s).unwrap();
    assert_eq!(back, lk);
    assert_eq!(back.to_json().unwrap(), s);
    assert_eq!(back.quadratic_form(), lk.quadratic_form());

    let mut doc: serde_json::Value = serde_json::from_str(&s).unwrap();
    let x = doc["nodes"][3].as_f64().unwrap();
    doc["nodes"][3] = serde_json::json!(x * (1.0 + 1e-15));
    let err = LkFunctional::from_json(&doc.to_string()).unwrap_err();
    assert!(matches!(err, Error::NodeMismatch { .. }));
}

#[test]
fn split_part_on_constants_and_its_derivative() {
    let (lk, ..) = benchmark_functional(0.1, 16);
    let disc = lk.discretization();
    let q1 = lk.q1_diag().clone();
    let c = DVector::from_vec(vec![0.7, -1.3]);
    let phi = vec![c.clone(); disc.len()];
    let (_, v1) = lk.evaluate_parts(&phi).unwrap();
    assert!((v1 - c.dot(&(&q1 * &c)) * 1.0).abs() < 1e-12);

    // Along the shift, V₁ changes by φ(0)ᵀQ₁φ(0) − φ(−h)ᵀQ₁φ(−h).
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let nn = disc.order();
    for _ in 0..20 {
        let f = ChebyshevHistory::random(&mut rng, 2, 1.0, nn / 2);
        let phi = disc.sample(|t| f.value(t));
        let dphi = disc.sample(|t| f.derivative(t));
        let d: f64 = (0..nn)
            .map(|j| 2.0 * disc.interior_weights()[j] * phi[j].dot(&(&q1 * &dphi[j])))
            .sum();
        let expect = phi[nn].dot(&(&q1 * &phi[nn])) - phi[0].dot(&(&q1 * &phi[0]));
        assert!((d - expect).abs() < 1e-10 * (1.0 + expect.abs()));
    }
}

#[test]
fn vector_part_ignores_the_split_term() {
    let (lk, ..) = benchmark_functional(0.1, 16);
    let disc = lk.discretization();
    let nn = disc.order();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let phi = random_poly(&mut rng, 2, 1.0, 6, disc);
    let mut expect = lk.p_xx() * &phi[nn];
    for (j, p) in phi.iter().take(nn).enumerate() {
        expect += &lk.p_xz_nodes()[j] * p * disc.quad_weights()[j];
    }
    assert!((lk.evaluate_vec(&phi).unwrap() - expect).norm() < 1e-12);
    let zero = vec![DVector::zeros(2); disc.len()];
    assert_eq!(lk.evaluate_vec(&zero).unwrap().norm(), 0.0);
    assert_eq!(lk.evaluate(&zero).unwrap(), 0.0);
}

#[test]
fn razumikhin_probe_functions_peak_at_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = PeakAtZero::random(&mut rng, 2, 1.0, 0.5);
    assert!((g.value(0.0).norm() - 0.5).abs() < 1e-14);
}

#[test]
fn wrong_sample_count_is_rejected() {
    let (lk, ..) = benchmark_functional(0.1, 8);
    let phi = vec![DVector::zeros(2); 5];
    assert!(matches!(lk.evaluate(&phi), Err(Error::NodeMismatch { .. })));
}
