use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;
use tdsrobust::fixtures::second_order_benchmark;
use tdsrobust::freqbounds::gamma_max;
use tdsrobust::lkbuild::{build_functional, DEFAULT_ARE_TOL};
use tdsrobust::randfn::{ChebyshevHistory, History};
use tdsrobust::rfdesim::integrate;
use tdsrobust::spectrum::rightmost_roots;
use tdsrobust::sysmodel::sector_preset;
use tdsrobust::{Discretization, Nonlinearity, PerturbationStructure, SectorPreset, SweepConfig};

fn frequency(c: &mut Criterion) {
    let sys = second_order_benchmark();
    let ps = PerturbationStructure::unstructured(2);
    let cfg = SweepConfig::for_system(&sys);
    c.bench_function("gamma_max", |b| {
        b.iter(|| gamma_max(black_box(&sys), &ps, &cfg).unwrap())
    });
    c.bench_function("rightmost_roots_32", |b| {
        b.iter(|| rightmost_roots(black_box(&sys), 32, 4).unwrap())
    });
}

fn construction(c: &mut Criterion) {
    let sys = second_order_benchmark();
    let ps = PerturbationStructure::unstructured(2);
    let sec = sector_preset(&SectorPreset::NormBound { gamma: 0.1 }, 4, 2).unwrap();
    let mut g = c.benchmark_group("build_functional");
    g.sample_size(20);
    for order in [12, 24] {
        let disc = Discretization::new(order, 1.0).unwrap();
        g.bench_function(format!("N={order}"), |b| {
            b.iter(|| build_functional(&sys, &ps, &sec, black_box(&disc), DEFAULT_ARE_TOL).unwrap())
        });
    }
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let sys = second_order_benchmark();
    let ps = PerturbationStructure::unstructured(2);
    let nl = Nonlinearity::saturation(0.08, 0.05, DMatrix::identity(2, 4)).unwrap();
    let phi: Arc<dyn History> = Arc::new(ChebyshevHistory::constant(
        nalgebra::DVector::from_element(2, 1.0),
        1.0,
    ));
    c.bench_function("integrate_t8", |b| {
        b.iter(|| integrate(&sys, &ps, &nl, phi.clone(), black_box(0.01), 8.0).unwrap())
    });
}

criterion_group!(benches, frequency, construction, simulation);
criterion_main!(benches);
