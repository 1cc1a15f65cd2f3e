use criterion::{black_box, criterion_group, criterion_main, Criterion};
use num_complex::Complex64;
use tclmix::disorder::{envelope, numeric_disorder_average};
use tclmix::harness::{fp_reference_integrator, FpGrid};
use tclmix::particle_sim::run;
use tclmix::spectral::{eigenvalue, tau_sensitivity};
use tclmix::{lambert_w, BranchIndex, DisorderKind, DisorderSpec, EnsembleParams, InitialCondition, SimConfig, Sign};

fn params() -> EnsembleParams {
    EnsembleParams::new(3.0, 10.0, -1.0, 1.0).unwrap()
}

fn special(c: &mut Criterion) {
    let z = Complex64::new(-0.3, 2.5);
    c.bench_function("lambert_w k=3", |b| b.iter(|| lambert_w(BranchIndex(3), black_box(z))));
    let p = params();
    c.bench_function("eigenvalue k=1", |b| b.iter(|| eigenvalue(BranchIndex(1), Sign::Plus, black_box(&p))));
}

fn disorder(c: &mut Criterion) {
    let p = EnsembleParams::new(3.0, 100.0, -1.0, 1.0).unwrap();
    let coeffs = tau_sensitivity(&p).unwrap();
    let spec = DisorderSpec::new(DisorderKind::Gaussian, 3.0, 0.1).unwrap();
    c.bench_function("envelope gaussian", |b| b.iter(|| envelope(&spec, black_box(20.0), &coeffs)));
    c.bench_function("oracle gaussian", |b| b.iter(|| numeric_disorder_average(&spec, black_box(20.0), &p)));
}

fn simulate(c: &mut Criterion) {
    let spec = DisorderSpec::new(DisorderKind::Gaussian, 3.0, 0.1).unwrap();
    let cfg = SimConfig::with_defaults(10_000, 10.0, spec, 30.0, 1);
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    g.bench_function("particles n=1e4 t=30", |b| b.iter(|| run(black_box(&cfg))));
    let grid = FpGrid::new(400);
    g.bench_function("fokker-planck 400 cells t=30", |b| {
        b.iter(|| fp_reference_integrator(&params(), &InitialCondition::DeltaAtLowerBoundary, black_box(30.0), &grid))
    });
    g.finish();
}

criterion_group!(benches, special, disorder, simulate);
criterion_main!(benches);
