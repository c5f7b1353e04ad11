use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mflab::chaos::cancellation_check;
use mflab::field::{DensityField, GridSpec, MProfile, ProductDensity, XProfile};
use mflab::kernels::{InfluenceKernel, InfluenceSpec, InteractionKernel, InteractionSpec, Kernels, SKind, SSpec};
use mflab::meanfield::{advance, velocity_fields};
use mflab::particles::{drift, sample_initial, step, InitialSource, Scheme};

fn kernels() -> Kernels {
    let a = InteractionKernel::new(InteractionSpec::Constant { c: vec![0.3] }).unwrap();
    let s = InfluenceKernel::new(InfluenceSpec::Separable {
        s: SSpec { kind: SKind::Sin, amplitude: 0.4, freq: 1, parity: None },
        chi_support: Some([0.5, 4.0]),
        chi2_support: None,
        bounds: None,
    })
    .unwrap();
    Kernels::new(a, s)
}

fn initial() -> ProductDensity {
    ProductDensity { x: XProfile::Cosine { amplitude: 0.3, freq: 1 }, m: MProfile::Exponential }
}

fn field(gx: usize, gm: usize) -> DensityField {
    initial().discretize(GridSpec::new(1, gx, gm, 12.0).unwrap()).unwrap()
}

fn particles(c: &mut Criterion) {
    let k = kernels();
    let density = initial();
    let mut g = c.benchmark_group("particles");
    for n in [256, 1024] {
        let source = InitialSource::Product { density: &density, dim: 1, m_max: Some(12.0) };
        let ens = sample_initial(&source, n, 1).unwrap();
        g.bench_with_input(BenchmarkId::new("drift", n), &ens, |b, e| b.iter(|| drift(black_box(e), &k)));
        g.bench_with_input(BenchmarkId::new("heun_step", n), &ens, |b, e| {
            b.iter(|| step(black_box(e), &k, 0.01, Scheme::Heun))
        });
    }
    g.finish();
}

fn meanfield(c: &mut Criterion) {
    let k = kernels();
    let mut g = c.benchmark_group("meanfield");
    for (gx, gm) in [(16, 48), (32, 96)] {
        let psi = field(gx, gm);
        let id = format!("{gx}x{gm}");
        g.bench_with_input(BenchmarkId::new("velocity_fields", &id), &psi, |b, p| {
            b.iter(|| velocity_fields(black_box(p), &k).unwrap())
        });
        let v = velocity_fields(&psi, &k).unwrap();
        g.bench_with_input(BenchmarkId::new("advance", &id), &psi, |b, p| b.iter(|| advance(black_box(p), &v, 1e-3).unwrap()));
    }
    g.finish();
}

fn cancellation(c: &mut Criterion) {
    let k = kernels();
    let psi = field(16, 32);
    c.bench_function("cancellation_check/16x32", |b| b.iter(|| cancellation_check(black_box(&psi), &k).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = particles, meanfield, cancellation
}
criterion_main!(benches);
