//! Sequential against rayon execution for the data-parallel kernels.
//! Without the `parallel` feature both arms run sequentially.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use debranges::factorization::factorize_exact;
use debranges::functionals::{entropy_quadrature_with, ktilde_with};
use debranges::krein::density_via_pstar_with;
use debranges::models::{example2, example3, random_det1_fc};
use debranges::par::Exec;
use debranges::solver::spectral_density_with;

const ARMS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| -20.0 + 40.0 * k as f64 / (n - 1) as f64).collect()
}

fn density(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = random_det1_fc(&mut rng, 12);
    let xs = grid(2000);
    let mut g = c.benchmark_group("spectral_density_2000");
    for (name, exec) in ARMS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| spectral_density_with(black_box(&h), &xs, e).unwrap())
        });
    }
    g.finish();
}

fn entropy(c: &mut Criterion) {
    let (h, _) = example3(&[(0.5, 0.8), (1.0, -0.4), (0.75, 0.3)]).unwrap();
    let mut g = c.benchmark_group("entropy_quadrature");
    g.sample_size(10);
    for (name, exec) in ARMS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| entropy_quadrature_with(black_box(&h), e).unwrap())
        });
    }
    g.finish();
}

fn oscillation(c: &mut Criterion) {
    let (h, _) = example2(0.05, 4000).unwrap();
    let mut g = c.benchmark_group("ktilde_example2_4000");
    for (name, exec) in ARMS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| ktilde_with(black_box(&h), e).unwrap())
        });
    }
    g.finish();
}

fn krein(c: &mut Criterion) {
    let (h, _) = example2(0.1, 200).unwrap();
    let f = factorize_exact(&h).unwrap();
    let xs = grid(400);
    let mut g = c.benchmark_group("krein_density_400");
    g.sample_size(10);
    for (name, exec) in ARMS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| density_via_pstar_with(black_box(&f), 200.0, &xs, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, density, entropy, oscillation, krein);
criterion_main!(benches);
