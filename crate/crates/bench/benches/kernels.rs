use criterion::{black_box, criterion_group, criterion_main, Criterion};

use bosecond::bogoliubov::quadratic_coeffs;
use bosecond::commutator::{expand_ad, expand_merged};
use bosecond::fock::{build_basis, build_l};
use bosecond::lattice::ModeSet;
use bosecond::linalg::lowest_eigs;
use bosecond::potential::PotentialSpec;
use bosecond::scattering::{eta_coefficients, solve_neumann, Mesh};
use bosecond::spectral::born_series_ball;

fn spec() -> PotentialSpec {
    PotentialSpec::ball(1.0, 1.0, 0.05, 0.5, 1000)
}

fn scattering(c: &mut Criterion) {
    let s = spec();
    let set = ModeSet::from_max_norm_sq(12);
    c.bench_function("neumann_solve", |b| b.iter(|| solve_neumann(black_box(&s), 0.4, Mesh::default()).unwrap()));
    let sol = solve_neumann(&s, 0.4, Mesh::default()).unwrap();
    c.bench_function("eta_and_coeffs_m12", |b| {
        b.iter(|| {
            let sol = eta_coefficients(sol.clone(), &set).unwrap();
            quadratic_coeffs(&s, &sol, &set).unwrap()
        })
    });
}

fn born(c: &mut Criterion) {
    let s = PotentialSpec::ball(1.0, 1.0, 0.05, 0.5, 100_000);
    c.bench_function("born_ball_m256_k3", |b| b.iter(|| born_series_ball(black_box(&s), 256, 3).unwrap()));
}

fn fock(c: &mut Criterion) {
    let s = spec();
    let set = ModeSet::from_max_norm_sq(1);
    let basis = build_basis(&set, 1000, 4).unwrap();
    c.bench_function("build_l_dim210", |b| b.iter(|| build_l(black_box(&basis), &s).unwrap().total()));
    let l = build_l(&basis, &s).unwrap().total();
    c.bench_function("lanczos_dim210_m3", |b| b.iter(|| lowest_eigs(black_box(&l), 3).unwrap()));
}

fn commutator(c: &mut Criterion) {
    c.bench_function("expand_ad_n5", |b| b.iter(|| expand_ad(black_box(5)).unwrap()));
    c.bench_function("expand_merged_n6", |b| b.iter(|| expand_merged(black_box(6)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = scattering, born, fock, commutator
}
criterion_main!(benches);
