use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hymlab_core::calculus::{curvature, twisted_metric};
use hymlab_core::donaldson::m_spectral;
use hymlab_core::endo::random_endo;
use hymlab_core::flow::DegreeFilter;
use hymlab_core::{BaseGeometry, BundleSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GRIDS: [(usize, usize); 2] = [(32, 64), (64, 128)];

fn kernels(c: &mut Criterion) {
    let bundle = BundleSpec::new(vec![1, -1]).unwrap();
    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for (nr, na) in GRIDS {
        let g = BaseGeometry::new(nr, na).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h0 = twisted_metric(&g, &bundle, &mut rng, 0.5).unwrap();
        let w = random_endo(&g, &h0, &mut rng, 1.0, 2, true).unwrap();
        let filter = DegreeFilter::new(&g, &[2, 0, -2], 12).unwrap();
        let field = w.values().entry(0, 1);
        let label = format!("{nr}x{na}");

        group.bench_with_input(BenchmarkId::new("curvature", &label), &h0, |b, h| {
            b.iter(|| curvature(&g, h).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("m_spectral", &label), &w, |b, w| {
            b.iter(|| m_spectral(&g, &h0, w).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("degree_filter", &label), &field, |b, f| {
            b.iter(|| filter.apply(&g, 2, f).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
