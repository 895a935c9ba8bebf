use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use phylocp_bench::{base_tree, dataset};
use phylocp_core::{ChangePointState, LikelihoodEngine};

fn segmented(c: &mut Criterion) {
    let mut group = c.benchmark_group("segmented_log_likelihood");
    let state = ChangePointState::new(vec![25], vec![0.75, 0.85]).unwrap();
    for m in [50, 500, 5000] {
        let data = dataset(m, 1);
        let state = ChangePointState::new(vec![m / 2], state.rates().to_vec()).unwrap();
        group.throughput(Throughput::Elements(m as u64));
        for g in [1, 4, 8] {
            let engine = LikelihoodEngine::new(base_tree(), g).unwrap();
            group.bench_with_input(BenchmarkId::new(format!("g{g}"), m), &data, |b, data| {
                b.iter(|| engine.segmented_log_likelihood(&state, data))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, segmented);
criterion_main!(benches);
