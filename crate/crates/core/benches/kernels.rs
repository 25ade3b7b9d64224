// Sequential (one-thread pool) versus parallel (default pool) timings of the
// data-parallel kernels. Build with `--no-default-features` to bench the
// plain-loop fallback; both arms then run the same code.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nm_sparse_kit::{
    backward_mask, forward_mask, matmul, search_permutation, transposable_mask,
    BinarizationCriterion, Matrix, NmPattern, Permutation, TransposableMethod,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPool;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![
        (
            "sequential",
            rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .unwrap(),
        ),
        (
            "parallel",
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap(),
        ),
    ]
}

fn compare<F: Fn() + Sync>(c: &mut Criterion, group: &str, size: usize, f: F) {
    let mut g = c.benchmark_group(group);
    for (name, pool) in pools() {
        g.bench_with_input(BenchmarkId::new(name, size), &size, |b, _| {
            b.iter(|| pool.install(&f))
        });
    }
    g.finish();
}

fn kernels(c: &mut Criterion) {
    let a = random_matrix(256, 256, 1);
    let b = random_matrix(256, 256, 2);
    compare(c, "matmul", 256, || {
        black_box(matmul(&a, &b).unwrap());
    });

    let p24 = NmPattern::new(2, 4).unwrap();
    let w = random_matrix(512, 512, 3);
    compare(c, "forward_mask_2of4", 512, || {
        black_box(forward_mask(&w, p24).unwrap());
    });

    let fwd = forward_mask(&w, p24).unwrap();
    let perm = Permutation::random(512, &mut ChaCha8Rng::seed_from_u64(4));
    compare(c, "backward_mask_2of4", 512, || {
        black_box(
            backward_mask(
                &w,
                &fwd,
                &perm,
                BinarizationCriterion::WeightMagnitude,
                None,
            )
            .unwrap(),
        );
    });

    let p116 = NmPattern::new(1, 16).unwrap();
    let w = random_matrix(256, 256, 5);
    let masked = forward_mask(&w, p116).unwrap().apply(&w).unwrap();
    let identity = Permutation::identity(256);
    compare(c, "permutation_search_k100_1of16", 256, || {
        black_box(search_permutation(&masked, p116, 100, &identity, 6).unwrap());
    });
    compare(c, "transposable_flow_1of16", 256, || {
        black_box(transposable_mask(&w, p116, TransposableMethod::Flow).unwrap());
    });
    compare(c, "transposable_approx_1of16", 256, || {
        black_box(transposable_mask(&w, p116, TransposableMethod::TwoApprox).unwrap());
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
